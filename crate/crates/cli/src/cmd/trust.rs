use std::path::PathBuf;

use anyhow::{Context, Result};
use cane_core::castore::{BlockId, BlockKind};
use cane_core::identity::{
    check_access, generate_identity, issue_certificate, sign_manifest, verify_manifest, Access, Acl, Certificate, Identity, Mode,
    PublicKey, SignedManifest,
};
use cane_core::merklefs::TreeHandle;
use clap::{Subcommand, ValueEnum};

use super::{parse_time, subtree};
use crate::exit::{Denied, Tampered, Usage};
use crate::workspace::{ClockMode, Workspace};
use crate::{parse_key, Ctx, Out, Session};

#[derive(Subcommand, Debug)]
pub enum CertCmd {
    /// Issue a group certificate for MEMBER, signed by the workspace identity.
    Issue {
        #[arg(long, value_parser = parse_key)]
        member: PublicKey,
        /// Start of validity (inclusive): microseconds or a stamp.
        #[arg(long, value_parser = parse_time)]
        from: i64,
        /// End of validity (exclusive).
        #[arg(long, value_parser = parse_time)]
        until: i64,
    },
    /// Decide an access request.
    Check {
        /// ACL block; the zero id means world-readable.
        #[arg(long, conflicts_with = "path")]
        acl: Option<BlockId>,
        /// Use the ACL attached to this tree entry.
        #[arg(long)]
        path: Option<String>,
        /// Requesting key; defaults to the workspace identity.
        #[arg(long = "as", value_parser = parse_key)]
        requester: Option<PublicKey>,
        #[arg(long = "cert")]
        certs: Vec<BlockId>,
        /// Signed manifest presented as proof of possession.
        #[arg(long)]
        evidence: Option<BlockId>,
        #[arg(long, value_enum, default_value_t = ModeArg::Read)]
        mode: ModeArg,
        /// Decision time: microseconds or a stamp. Required with a fixed clock.
        #[arg(long, value_parser = parse_time)]
        at: Option<i64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum AclCmd {
    /// Store an ACL; an empty reader list means world-readable.
    Make {
        #[arg(long = "reader", value_parser = parse_key)]
        readers: Vec<PublicKey>,
        #[arg(long = "writer", value_parser = parse_key)]
        writers: Vec<PublicKey>,
    },
    /// Attach an ACL to a tree entry.
    Set {
        path: String,
        acl: BlockId,
    },
    Show {
        acl: BlockId,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Read,
    Write,
}

fn load_identity(ws: &Workspace) -> Result<Identity> {
    let path = ws.identity_file();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading identity {} (run `cane keygen`)", path.display()))?;
    Ok(Identity::from_text(&text)?)
}

pub fn keygen(ctx: &Ctx, seed: Option<u64>, file: Option<PathBuf>, force: bool, out: &mut Out) -> Result<()> {
    let path = match file {
        Some(p) => p,
        None => Workspace::load(&ctx.ws_path)?.identity_file(),
    };
    if path.exists() && !force {
        return Err(Usage(format!("{} exists; pass --force to replace it", path.display())).into());
    }
    let id = generate_identity(seed);
    std::fs::write(&path, id.to_text()).with_context(|| format!("writing {}", path.display()))?;
    if out.porcelain {
        out.kv("public", id.public());
    } else {
        out.line(id.public().to_string());
    }
    Ok(())
}

pub fn sign(ctx: &Ctx, path: &str, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    let me = load_identity(&s.ws)?;
    let dir = subtree(&s.fs(), ctx.tree(&s), path)?;
    let sm = sign_manifest(&me, dir.root)?;
    let id = s.store.put(&sm.encode(), BlockKind::Meta)?;
    s.store.flush()?;
    if out.porcelain {
        out.kv("signed", id);
        out.kv("manifest", dir.root);
        out.kv("signer", sm.signer);
    } else {
        out.line(id.to_hex());
    }
    Ok(())
}

fn load_signed(s: &Session, id: &BlockId) -> Result<SignedManifest> {
    Ok(SignedManifest::decode(&s.store.get_block(id)?)?)
}

pub fn verify(ctx: &Ctx, signed: BlockId, path: Option<&str>, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    let sm = load_signed(&s, &signed)?;
    if !verify_manifest(&sm) {
        return Err(Tampered(format!("bad signature on {}", signed.short())).into());
    }
    // The manifest itself must be present and hash-correct.
    s.store.get_block(&sm.manifest)?;
    if let Some(p) = path {
        let current = subtree(&s.fs(), ctx.tree(&s), p)?;
        if current.root != sm.manifest {
            return Err(Tampered(format!(
                "{p:?} is {}, signature covers {}",
                current.root.short(),
                sm.manifest.short()
            ))
            .into());
        }
    }
    if out.porcelain {
        out.kv("valid", true);
        out.kv("signer", sm.signer);
        out.kv("manifest", sm.manifest);
    } else {
        out.line(format!("ok {}", sm.signer));
    }
    Ok(())
}

pub fn cert(ctx: &Ctx, cmd: CertCmd, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    match cmd {
        CertCmd::Issue { member, from, until } => {
            let me = load_identity(&s.ws)?;
            let c = issue_certificate(&me, member, from, until)?;
            let id = s.store.put(&c.encode(), BlockKind::Meta)?;
            s.store.flush()?;
            if out.porcelain {
                out.kv("cert", id);
                out.kv("group", c.group);
                out.kv("member", c.member);
            } else {
                out.line(id.to_hex());
            }
            Ok(())
        }
        CertCmd::Check {
            acl,
            path,
            requester,
            certs,
            evidence,
            mode,
            at,
        } => {
            let acl_id = match (acl, path) {
                (Some(id), _) => id,
                (None, Some(p)) => entry_perms(&s, ctx.tree(&s), &p)?,
                (None, None) => return Err(Usage("give --acl or --path".into()).into()),
            };
            let acl = Acl::load(&s.store, &acl_id)?;
            let requester = match requester {
                Some(k) => k,
                None => load_identity(&s.ws)?.public(),
            };
            let certs = certs
                .iter()
                .map(|id| Ok(Certificate::decode(&s.store.get_block(id)?)?))
                .collect::<Result<Vec<_>>>()?;
            let evidence = evidence.map(|id| load_signed(&s, &id)).transpose()?;
            let now = match (at, s.ws.clock) {
                (Some(t), _) => t,
                (None, ClockMode::Real) => cane_core::merklefs::VersionStamp::now().micros,
                (None, ClockMode::Fixed) => return Err(Usage("fixed clock: cert check needs --at".into()).into()),
            };
            let mode = match mode {
                ModeArg::Read => Mode::Read,
                ModeArg::Write => Mode::Write,
            };
            match check_access(&acl, &requester, &certs, evidence.as_ref(), mode, now) {
                Access::Allow => {
                    if out.porcelain {
                        out.kv("access", "allow");
                    } else {
                        out.line("allow");
                    }
                    Ok(())
                }
                Access::Deny(why) => {
                    if out.porcelain {
                        out.kv("access", "deny");
                        out.kv("reason", why);
                    } else {
                        out.line(format!("deny {why}"));
                    }
                    Err(Denied(why).into())
                }
            }
        }
    }
}

fn entry_perms(s: &Session, tree: TreeHandle, path: &str) -> Result<BlockId> {
    let (parent, name) = match path.trim_end_matches('/').rsplit_once('/') {
        Some((p, n)) => (p, n),
        None => ("", path.trim_end_matches('/')),
    };
    let m = s.fs().read_dir(tree, parent)?;
    let e = m
        .get(name.as_bytes())
        .ok_or_else(|| cane_core::merklefs::FsError::NotFound(path.to_string()))?;
    Ok(e.perms)
}

pub fn acl(ctx: &Ctx, cmd: AclCmd, out: &mut Out) -> Result<()> {
    let mut s = ctx.open()?;
    match cmd {
        AclCmd::Make { readers, writers } => {
            let id = Acl { readers, writers }.store(&s.store)?;
            s.store.flush()?;
            if out.porcelain {
                out.kv("acl", id);
            } else {
                out.line(id.to_hex());
            }
            Ok(())
        }
        AclCmd::Set { path, acl } => {
            if !acl.is_zero() {
                Acl::load(&s.store, &acl)?;
            }
            let base = ctx.tree(&s);
            let stamp = ctx.stamp(&mut s)?;
            let new = s.fs().set_perms(base, &path, acl, stamp)?;
            ctx.commit(&mut s, base, new, out)
        }
        AclCmd::Show { acl } => {
            let a = Acl::load(&s.store, &acl)?;
            if a.readers.is_empty() {
                out.kv("readers", "*");
            }
            for k in &a.readers {
                out.kv("reader", k);
            }
            for k in &a.writers {
                out.kv("writer", k);
            }
            Ok(())
        }
    }
}

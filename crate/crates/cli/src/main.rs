mod cmd;
mod exit;
mod workspace;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cane_core::castore::{BlockId, Store};
use cane_core::identity::PublicKey;
use cane_core::merklefs::{MerkleFs, TreeHandle, VersionStamp};
use clap::{Parser, Subcommand};

use crate::exit::Usage;
use crate::workspace::{ClockMode, Workspace};

#[derive(Parser, Debug)]
#[command(name = "cane", version, about = "Content-addressed, versioned storage workbench")]
struct Cli {
    /// Workspace file.
    #[arg(long, global = true, env = "CANE_WS", default_value = "cane.ws")]
    ws: PathBuf,
    /// Read from (and build mutations on) this root instead of the
    /// workspace's; mutations then leave the workspace untouched.
    #[arg(long, global = true)]
    root: Option<BlockId>,
    /// Version stamp for a mutation, e.g. 2005-07-14T14:23:17.000001Z.1.
    #[arg(long, global = true)]
    stamp: Option<VersionStamp>,
    /// key=value output.
    #[arg(long, global = true)]
    porcelain: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Create a workspace and, if needed, its store.
    Init {
        #[arg(long, default_value = "cane.store")]
        store: PathBuf,
        #[arg(long, default_value = "real")]
        clock: ClockMode,
        #[arg(long, default_value = "identity.key")]
        identity: PathBuf,
    },
    /// Write a local file (or - for stdin) into the tree.
    Put {
        file: PathBuf,
        path: String,
        /// Create an event receptor instead of a plain file.
        #[arg(long)]
        receptor: bool,
    },
    Cat {
        path: String,
    },
    Ls {
        #[arg(default_value = "")]
        path: String,
    },
    /// Past versions of a directory, oldest first.
    Log {
        #[arg(default_value = "")]
        path: String,
    },
    /// Restore a file or directory as it was just before `to`.
    Revert {
        path: String,
        to: VersionStamp,
    },
    Stats,
    /// Generate an identity (key pair).
    Keygen {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Sign the manifest of a directory with the workspace identity.
    Sign {
        #[arg(default_value = "")]
        path: String,
    },
    /// Check a signed manifest.
    Verify {
        signed: BlockId,
        /// Also require that the signed manifest is the current one at PATH.
        #[arg(long)]
        path: Option<String>,
    },
    #[command(subcommand)]
    Cert(cmd::trust::CertCmd),
    #[command(subcommand)]
    Acl(cmd::trust::AclCmd),
    #[command(subcommand)]
    Appdir(cmd::apps::AppdirCmd),
    #[command(subcommand)]
    Sim(cmd::sim::SimCmd),
    #[command(subcommand)]
    Scene(cmd::scene::SceneCmd),
    /// Compare the version chains of two roots.
    Forks {
        a: BlockId,
        b: BlockId,
    },
    /// Probability that N random digests of BITS bits collide.
    Collision {
        /// Item count, as a number or 2^K.
        #[arg(long)]
        items: String,
        #[arg(long, default_value_t = 512)]
        bits: u32,
    },
}

/// Global options shared by every command.
pub struct Ctx {
    pub ws_path: PathBuf,
    pub root: Option<BlockId>,
    pub stamp: Option<VersionStamp>,
    pub porcelain: bool,
}

/// Buffered stdout.
pub struct Out {
    pub porcelain: bool,
    pub buf: Vec<u8>,
}

impl Out {
    pub fn line(&mut self, s: impl AsRef<str>) {
        self.buf.extend_from_slice(s.as_ref().as_bytes());
        self.buf.push(b'\n');
    }

    pub fn kv(&mut self, k: &str, v: impl std::fmt::Display) {
        self.line(format!("{k}={v}"));
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }
}

/// An opened workspace and its store.
pub struct Session {
    pub ws: Workspace,
    pub store: Store,
}

impl Session {
    pub fn fs(&self) -> MerkleFs<'_> {
        MerkleFs::new(&self.store)
    }
}

impl Ctx {
    pub fn open(&self) -> Result<Session> {
        let ws = Workspace::load(&self.ws_path)?;
        let store = Store::open(ws.store_dir()).with_context(|| format!("opening store {}", ws.store_dir().display()))?;
        Ok(Session { ws, store })
    }

    pub fn tree(&self, s: &Session) -> TreeHandle {
        TreeHandle::new(self.root.unwrap_or(s.ws.current_root))
    }

    /// Stamp for the next mutation.
    pub fn stamp(&self, s: &mut Session) -> Result<VersionStamp> {
        if let Some(st) = self.stamp {
            return Ok(st);
        }
        match s.ws.clock {
            ClockMode::Fixed => Err(Usage("fixed clock: mutating commands need --stamp".into()).into()),
            ClockMode::Real => {
                let now = VersionStamp::now();
                let st = s.ws.last_stamp.map_or(now, |last| last.next_after(now));
                s.ws.last_stamp = Some(st);
                Ok(st)
            }
        }
    }

    /// Records a new root (unless working detached from `--root`) and
    /// prints it.
    pub fn commit(&self, s: &mut Session, base: TreeHandle, new: TreeHandle, out: &mut Out) -> Result<()> {
        s.store.flush()?;
        if self.root.is_none() {
            s.ws.compare_and_swap(base.root, new.root)?;
        }
        if out.porcelain {
            out.kv("root", new.root);
        } else {
            out.line(new.root.to_hex());
        }
        Ok(())
    }
}

pub fn parse_key(s: &str) -> Result<PublicKey> {
    s.parse::<PublicKey>()
        .map_err(|e| Usage(format!("bad public key {s:?}: {e}")).into())
}

fn run(cli: Cli, out: &mut Out) -> Result<()> {
    let ctx = Ctx {
        ws_path: cli.ws,
        root: cli.root,
        stamp: cli.stamp,
        porcelain: cli.porcelain,
    };
    match cli.cmd {
        Cmd::Init { store, clock, identity } => cmd::tree::init(&ctx, store, clock, identity, out),
        Cmd::Put { file, path, receptor } => cmd::tree::put(&ctx, &file, &path, receptor, out),
        Cmd::Cat { path } => cmd::tree::cat(&ctx, &path, out),
        Cmd::Ls { path } => cmd::tree::ls(&ctx, &path, out),
        Cmd::Log { path } => cmd::tree::log(&ctx, &path, out),
        Cmd::Revert { path, to } => cmd::tree::revert(&ctx, &path, to, out),
        Cmd::Stats => cmd::tree::stats(&ctx, out),
        Cmd::Forks { a, b } => cmd::tree::forks(&ctx, a, b, out),
        Cmd::Collision { items, bits } => cmd::tree::collision(&items, bits, out),
        Cmd::Keygen { seed, out: file, force } => cmd::trust::keygen(&ctx, seed, file, force, out),
        Cmd::Sign { path } => cmd::trust::sign(&ctx, &path, out),
        Cmd::Verify { signed, path } => cmd::trust::verify(&ctx, signed, path.as_deref(), out),
        Cmd::Cert(c) => cmd::trust::cert(&ctx, c, out),
        Cmd::Acl(c) => cmd::trust::acl(&ctx, c, out),
        Cmd::Appdir(c) => cmd::apps::run(&ctx, c, out),
        Cmd::Sim(c) => cmd::sim::run(c, out),
        Cmd::Scene(c) => cmd::scene::run(&ctx, c, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let mut out = Out {
        porcelain: cli.porcelain,
        buf: Vec::new(),
    };
    let result = run(cli, &mut out);
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(&out.buf);
    let _ = stdout.flush();
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("cane: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}

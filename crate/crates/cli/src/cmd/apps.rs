use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use cane_core::appdir::{build_appdir, closure, load_appdir, materialize};
use cane_core::castore::{BlockId, Store};
use clap::Subcommand;

use super::subtree;
use crate::exit::Usage;
use crate::{Ctx, Out};

#[derive(Subcommand, Debug)]
pub enum AppdirCmd {
    /// Bundle per-platform trees into an application directory.
    Build {
        name: String,
        /// PLATFORM=PATH, where PATH is a directory in the current tree.
        #[arg(long = "platform", required = true)]
        platforms: Vec<String>,
        #[arg(long = "dep")]
        deps: Vec<BlockId>,
    },
    /// Blocks needed to run APP on PLATFORM.
    Closure {
        app: BlockId,
        platform: String,
    },
    /// Copy what APP needs on PLATFORM from another store into this one.
    Materialize {
        app: BlockId,
        platform: String,
        /// Store directory to fetch from.
        #[arg(long)]
        from: PathBuf,
    },
    Show {
        app: BlockId,
    },
}

pub fn run(ctx: &Ctx, cmd: AppdirCmd, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    match cmd {
        AppdirCmd::Build { name, platforms, deps } => {
            let fs = s.fs();
            let tree = ctx.tree(&s);
            let mut trees = BTreeMap::new();
            for p in &platforms {
                let (plat, path) = p
                    .split_once('=')
                    .ok_or_else(|| Usage(format!("bad --platform {p:?}: want NAME=PATH")))?;
                trees.insert(plat.to_string(), subtree(&fs, tree, path)?);
            }
            let id = build_appdir(&s.store, &name, &trees, &deps)?;
            s.store.flush()?;
            if out.porcelain {
                out.kv("appdir", id);
            } else {
                out.line(id.to_hex());
            }
        }
        AppdirCmd::Closure { app, platform } => {
            let ids = closure(&s.store, app, &platform)?;
            for id in &ids {
                if out.porcelain {
                    out.kv("block", id);
                } else {
                    out.line(id.to_hex());
                }
            }
            if out.porcelain {
                out.kv("count", ids.len());
            }
        }
        AppdirCmd::Materialize { app, platform, from } => {
            let remote = Store::open(&from).with_context(|| format!("opening store {}", from.display()))?;
            let log = materialize(&s.store, &remote, app, &platform)?;
            s.store.flush()?;
            out.kv("requested", log.requested.len());
            out.kv("bytes_fetched", log.bytes_fetched);
            out.kv("index_bytes", log.index_bytes);
            if out.porcelain {
                for id in &log.requested {
                    out.kv("fetched", id);
                }
            }
        }
        AppdirCmd::Show { app } => {
            let m = load_appdir(&s.store, &app)?;
            out.kv("name", &m.name);
            for (p, id) in &m.platforms {
                out.kv(&format!("platform.{p}"), id);
            }
            for d in &m.deps {
                out.kv("dep", d);
            }
        }
    }
    Ok(())
}

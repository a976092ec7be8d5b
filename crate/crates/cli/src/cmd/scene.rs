use std::path::PathBuf;

use anyhow::{Context, Result};
use cane_core::castore::BlockId;
use cane_core::merklefs::{MerkleFs, TreeHandle};
use cane_core::scenefs::{event_map, import_scene, render, RenderCache, SceneError};
use clap::Subcommand;

use super::subtree;
use crate::exit::Usage;
use crate::{Ctx, Out};

#[derive(Subcommand, Debug)]
pub enum SceneCmd {
    /// Build a scene from a text description and place it at PATH.
    Import { desc: PathBuf, path: String },
    /// Draw the scene at PATH.
    Render {
        path: String,
        /// Render these scenes (paths or manifest ids) first, sharing the
        /// cache; the reported call count covers PATH only.
        #[arg(long = "warm")]
        warm: Vec<String>,
    },
    /// List receptor rectangles, topmost first.
    Events { path: String },
    /// Deliver PAYLOAD to whatever receptor is under (X, Y).
    Click { path: String, x: u32, y: u32, payload: String },
}

fn locate(fs: &MerkleFs<'_>, tree: TreeHandle, spec: &str) -> Result<TreeHandle> {
    if spec.len() == 128 {
        if let Ok(id) = spec.parse::<BlockId>() {
            return Ok(TreeHandle::new(id));
        }
    }
    subtree(fs, tree, spec)
}

fn join(dir: &str, rel: &str) -> String {
    let dir = dir.trim_matches('/');
    if dir.is_empty() {
        rel.to_string()
    } else {
        format!("{dir}/{rel}")
    }
}

pub fn run(ctx: &Ctx, cmd: SceneCmd, out: &mut Out) -> Result<()> {
    let mut s = ctx.open()?;
    match cmd {
        SceneCmd::Import { desc, path } => {
            if path.trim_matches('/').is_empty() {
                return Err(Usage("scene import needs a non-root path".into()).into());
            }
            let text = std::fs::read_to_string(&desc).with_context(|| format!("reading {}", desc.display()))?;
            let base = ctx.tree(&s);
            let stamp = ctx.stamp(&mut s)?;
            let fs = s.fs();
            let scene = import_scene(&fs, &text)?;
            render(&fs, scene, &RenderCache::disabled()).with_context(|| format!("checking {}", desc.display()))?;
            let new = fs.link_dir(base, &path, scene.root, stamp)?;
            ctx.commit(&mut s, base, new, out)
        }
        SceneCmd::Render { path, warm } => {
            let fs = s.fs();
            let tree = ctx.tree(&s);
            let cache = RenderCache::new();
            for w in &warm {
                render(&fs, locate(&fs, tree, w)?, &cache)?;
            }
            let (grid, calls) = render(&fs, locate(&fs, tree, &path)?, &cache)?;
            if out.porcelain {
                out.kv("render_calls", calls);
                out.kv("width", grid.w);
                out.kv("height", grid.h);
                for r in grid.rows() {
                    out.kv("row", r);
                }
            } else {
                out.raw(grid.to_string().as_bytes());
                eprintln!("render_calls={calls}");
            }
            Ok(())
        }
        SceneCmd::Events { path } => {
            let fs = s.fs();
            let map = event_map(&fs, locate(&fs, ctx.tree(&s), &path)?, &RenderCache::new())?;
            for e in &map.entries {
                let r = e.rect;
                if out.porcelain {
                    out.line(format!("rect={},{},{},{}\tpath={}", r.x, r.y, r.w, r.h, e.path));
                } else {
                    out.line(format!("{},{} {}x{} {}", r.x, r.y, r.w, r.h, e.path));
                }
            }
            Ok(())
        }
        SceneCmd::Click { path, x, y, payload } => {
            let base = ctx.tree(&s);
            let stamp = ctx.stamp(&mut s)?;
            let fs = s.fs();
            let map = event_map(&fs, subtree(&fs, base, &path)?, &RenderCache::new())?;
            let target = map.lookup(x, y).ok_or(SceneError::NoTarget { x, y })?;
            let full = join(&path, &target.path);
            let new = fs.write_file(base, &full, payload.as_bytes(), stamp)?;
            if out.porcelain {
                out.kv("target", &full);
            }
            ctx.commit(&mut s, base, new, out)
        }
    }
}

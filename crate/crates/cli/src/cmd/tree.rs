use std::io::Read as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cane_core::castore::{birthday_bound, collision_probability, BlockId, Store, StoreConfig};
use cane_core::merklefs::{EntryKind, ForkReport, MerkleFs, TreeHandle, VersionStamp};

use crate::exit::Usage;
use crate::workspace::{ClockMode, Workspace};
use crate::{Ctx, Out};

pub fn init(ctx: &Ctx, store: PathBuf, clock: ClockMode, identity: PathBuf, out: &mut Out) -> Result<()> {
    let mut ws = Workspace {
        path: ctx.ws_path.clone(),
        store_path: store,
        current_root: BlockId::ZERO,
        identity_path: identity,
        clock,
        last_stamp: None,
    };
    let dir = ws.store_dir();
    let st = if dir.join("store.cfg").exists() {
        Store::open(&dir)?
    } else {
        Store::create(&dir, StoreConfig::default()).with_context(|| format!("creating store {}", dir.display()))?
    };
    let root = TreeHandle::new(MerkleFs::new(&st).empty_root_id());
    st.flush()?;
    ws.current_root = root.root;
    ws.create()?;
    if out.porcelain {
        out.kv("root", root.root);
        out.kv("store", dir.display());
    } else {
        out.line(root.root.to_hex());
    }
    Ok(())
}

fn read_input(file: &Path) -> Result<Vec<u8>> {
    if file == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        std::fs::read(file).with_context(|| format!("reading {}", file.display()))
    }
}

pub fn put(ctx: &Ctx, file: &Path, path: &str, receptor: bool, out: &mut Out) -> Result<()> {
    let bytes = read_input(file)?;
    let mut s = ctx.open()?;
    let base = ctx.tree(&s);
    let stamp = ctx.stamp(&mut s)?;
    let fs = s.fs();
    let new = if receptor {
        fs.write_receptor(base, path, &bytes, stamp)?
    } else {
        fs.write_file(base, path, &bytes, stamp)?
    };
    ctx.commit(&mut s, base, new, out)
}

pub fn cat(ctx: &Ctx, path: &str, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    let bytes = s.fs().read_file(ctx.tree(&s), path)?;
    out.raw(&bytes);
    Ok(())
}

pub fn ls(ctx: &Ctx, path: &str, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    let fs = s.fs();
    for e in fs.list(ctx.tree(&s), path)? {
        let size = match e.kind {
            EntryKind::Dir => None,
            EntryKind::Lwf => Some(e.inline.as_ref().map_or(0, Vec::len) as u64),
            EntryKind::File | EntryKind::Receptor => Some(s.store.chunk_list(&e.target)?.total_len),
        };
        if out.porcelain {
            let mut line = format!("name={}\tkind={}", e.name, e.kind.label());
            if let Some(n) = size {
                line += &format!("\tsize={n}");
            }
            if !e.target.is_zero() {
                line += &format!("\tid={}", e.target);
            }
            if !e.perms.is_zero() {
                line += &format!("\tacl={}", e.perms);
            }
            out.line(line);
        } else {
            let size = size.map_or("-".to_string(), |n| n.to_string());
            let lock = if e.perms.is_zero() { ' ' } else { '*' };
            out.line(format!("{:<8} {:>10}{lock} {}", e.kind.label(), size, e.name));
        }
    }
    Ok(())
}

pub fn log(ctx: &Ctx, path: &str, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    for (stamp, id) in s.fs().history(ctx.tree(&s), path)? {
        if out.porcelain {
            out.line(format!("stamp={stamp}\tid={id}"));
        } else {
            out.line(format!("{stamp}  {}", id.short()));
        }
    }
    Ok(())
}

pub fn revert(ctx: &Ctx, path: &str, to: VersionStamp, out: &mut Out) -> Result<()> {
    let mut s = ctx.open()?;
    let base = ctx.tree(&s);
    let stamp = ctx.stamp(&mut s)?;
    let new = s.fs().revert(base, path, to, stamp)?;
    ctx.commit(&mut s, base, new, out)
}

pub fn stats(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    let st = s.store.stats();
    out.kv("unique_blocks", st.unique_blocks);
    out.kv("data_blocks", st.data_blocks);
    out.kv("manifest_blocks", st.manifest_blocks);
    out.kv("logical_bytes", st.logical_bytes);
    out.kv("physical_bytes", st.physical_bytes);
    Ok(())
}

pub fn forks(ctx: &Ctx, a: BlockId, b: BlockId, out: &mut Out) -> Result<()> {
    let s = ctx.open()?;
    match s.fs().detect_forks(TreeHandle::new(a), TreeHandle::new(b))? {
        ForkReport::Linear { ancestor, head } => {
            out.kv("relation", "linear");
            out.kv("ancestor", ancestor);
            out.kv("head", head);
        }
        ForkReport::Forked { ancestor, heads } => {
            out.kv("relation", "forked");
            out.kv("ancestor", ancestor);
            out.kv("head", heads[0]);
            out.kv("head", heads[1]);
        }
        ForkReport::Unrelated { heads } => {
            out.kv("relation", "unrelated");
            out.kv("head", heads[0]);
            out.kv("head", heads[1]);
        }
    }
    Ok(())
}

fn parse_items(s: &str) -> Result<f64> {
    let bad = || Usage(format!("bad item count {s:?}: want a number or 2^K"));
    let n = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| bad())?;
            let exp: i32 = exp.trim().parse().map_err(|_| bad())?;
            base.powi(exp)
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if n.is_finite() && n >= 0.0 {
        Ok(n)
    } else {
        Err(bad().into())
    }
}

pub fn collision(items: &str, bits: u32, out: &mut Out) -> Result<()> {
    let n = parse_items(items)?;
    out.kv("items", format!("{n:e}"));
    out.kv("bits", bits);
    out.kv("probability", format!("{:e}", collision_probability(n, bits)));
    out.kv("birthday_bound", format!("{:e}", birthday_bound(n, bits)));
    Ok(())
}

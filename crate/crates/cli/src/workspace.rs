//! The `cane.ws` workspace file.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use cane_core::castore::BlockId;
use cane_core::merklefs::VersionStamp;

use crate::exit::Conflict;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockMode {
    Real,
    Fixed,
}

impl ClockMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockMode::Real => "real",
            ClockMode::Fixed => "fixed",
        }
    }
}

impl FromStr for ClockMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(ClockMode::Real),
            "fixed" => Ok(ClockMode::Fixed),
            other => Err(anyhow!("unknown clock mode {other:?} (want real or fixed)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workspace {
    /// Location of the workspace file itself.
    pub path: PathBuf,
    pub store_path: PathBuf,
    pub current_root: BlockId,
    pub identity_path: PathBuf,
    pub clock: ClockMode,
    /// Newest stamp handed out by the real clock.
    pub last_stamp: Option<VersionStamp>,
}

fn rel(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Workspace {
    fn dir(&self) -> &Path {
        self.path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
    }

    pub fn store_dir(&self) -> PathBuf {
        rel(self.dir(), &self.store_path)
    }

    pub fn identity_file(&self) -> PathBuf {
        rel(self.dir(), &self.identity_path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading workspace {}", path.display()))?;
        Self::parse(path, &text)
    }

    fn parse(path: &Path, text: &str) -> Result<Self> {
        let (mut store, mut root, mut identity, mut clock, mut last) = (None, None, None, None, None);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), i + 1))?;
            match k.trim() {
                "store" => store = Some(PathBuf::from(v.trim())),
                "root" => {
                    root = Some(
                        v.trim()
                            .parse::<BlockId>()
                            .with_context(|| format!("{}: bad root", path.display()))?,
                    )
                }
                "identity" => identity = Some(PathBuf::from(v.trim())),
                "clock" => clock = Some(v.trim().parse::<ClockMode>()?),
                "last_stamp" => last = Some(v.trim().parse::<VersionStamp>()?),
                other => bail!("{}:{}: unknown key {other:?}", path.display(), i + 1),
            }
        }
        let need = |what: &str| anyhow!("{}: missing {what}", path.display());
        Ok(Workspace {
            path: path.to_path_buf(),
            store_path: store.ok_or_else(|| need("store"))?,
            current_root: root.ok_or_else(|| need("root"))?,
            identity_path: identity.ok_or_else(|| need("identity"))?,
            clock: clock.unwrap_or(ClockMode::Real),
            last_stamp: last,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "store={}", self.store_path.display()).unwrap();
        writeln!(out, "root={}", self.current_root).unwrap();
        writeln!(out, "identity={}", self.identity_path.display()).unwrap();
        writeln!(out, "clock={}", self.clock.as_str()).unwrap();
        if let Some(s) = self.last_stamp {
            writeln!(out, "last_stamp={s}").unwrap();
        }
        out
    }

    /// Writes a brand-new workspace file; fails if one exists.
    pub fn create(&self) -> Result<()> {
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&self.path)
            .with_context(|| format!("creating workspace {}", self.path.display()))?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    fn write_atomic(&self) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(self.dir())?;
        tmp.write_all(self.to_text().as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&self.path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Moves the recorded root from `expected` to `new`, failing if another
    /// process moved it first. Other fields are taken from `self`.
    pub fn compare_and_swap(&mut self, expected: BlockId, new: BlockId) -> Result<()> {
        let lock_path = self.path.with_extension("ws.lock");
        let lock = File::create(&lock_path).with_context(|| format!("creating {}", lock_path.display()))?;
        lock.lock()?;
        let on_disk = Self::load(&self.path)?;
        if on_disk.current_root != expected {
            return Err(Conflict {
                expected,
                found: on_disk.current_root,
                attempted: new,
            }
            .into());
        }
        self.current_root = new;
        if let (Some(a), Some(b)) = (self.last_stamp, on_disk.last_stamp) {
            self.last_stamp = Some(a.max(b));
        }
        self.write_atomic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dir: &Path) -> Workspace {
        Workspace {
            path: dir.join("cane.ws"),
            store_path: "cane.store".into(),
            current_root: BlockId::of(b"root"),
            identity_path: "identity.key".into(),
            clock: ClockMode::Fixed,
            last_stamp: None,
        }
    }

    #[test]
    fn text_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = sample(dir.path());
        ws.last_stamp = Some(VersionStamp::new(5, 2));
        ws.create().unwrap();
        assert_eq!(Workspace::load(&ws.path).unwrap(), ws);
        assert!(ws.create().is_err());
        assert_eq!(ws.store_dir(), dir.path().join("cane.store"));
    }

    proptest::proptest! {
        #[test]
        fn text_parses_back(
            root in proptest::array::uniform32(proptest::num::u8::ANY),
            store in "[a-z][a-z0-9_./ -]{0,20}",
            fixed: bool,
            stamp in proptest::option::of((0i64..4_000_000_000_000_000, 1u32..1000)),
        ) {
            let ws = Workspace {
                path: PathBuf::from("w/cane.ws"),
                store_path: store.trim_end().into(),
                current_root: BlockId::of(&root),
                identity_path: "id.key".into(),
                clock: if fixed { ClockMode::Fixed } else { ClockMode::Real },
                last_stamp: stamp.map(|(m, s)| VersionStamp::new(m, s)),
            };
            proptest::prop_assert_eq!(Workspace::parse(&ws.path, &ws.to_text()).unwrap(), ws);
        }
    }

    #[test]
    fn cas_rejects_a_moved_root() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = sample(dir.path());
        a.create().unwrap();
        let mut b = a.clone();
        let r0 = a.current_root;
        a.compare_and_swap(r0, BlockId::of(b"a")).unwrap();
        let err = b.compare_and_swap(r0, BlockId::of(b"b")).unwrap_err();
        assert!(err.downcast_ref::<Conflict>().is_some());
        assert_eq!(Workspace::load(&a.path).unwrap().current_root, BlockId::of(b"a"));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(Workspace::parse(Path::new("x"), "store=a\nroot=00\n").is_err());
        assert!(Workspace::parse(Path::new("x"), "colour=blue\n").is_err());
    }
}

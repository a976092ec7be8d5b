//! Versioned directory trees over the block store.
//!
//! Trees are immutable: every mutation returns a new root and leaves every
//! older root readable. Each rewritten directory records the manifest it
//! replaced twice over: as its `.` link (previous version) and as a new
//! stamp-named entry in its `...` history directory.
//!
//! Path syntax: `/`-separated names, where `.` steps to the previous version
//! of the directory reached so far, `...` opens its history directory (whose
//! entries are [`VersionStamp`] names) and `..` pops one component of the path
//! walked so far.

mod manifest;
mod stamp;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::castore::{BlockId, BlockKind, Store, StoreError};

pub use manifest::{EntryKind, Manifest, ManifestEntry, Name, MANIFEST_MAGIC, MANIFEST_VERSION, RESERVED_NAMES};
pub use stamp::{ParseStampError, VersionStamp};

pub const DEFAULT_LWF_THRESHOLD: usize = 64;

#[derive(Debug, Error)]
pub enum FsError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("illegal name in {path:?}: {reason}")]
    Name { path: String, reason: String },
    #[error("stamp {stamp} does not follow {last} in {path:?}")]
    Stamp {
        path: String,
        stamp: VersionStamp,
        last: VersionStamp,
    },
    #[error("{path:?} is not a {expected}")]
    Type { path: String, expected: &'static str },
    #[error("{0:?} not found")]
    NotFound(String),
    #[error("{0:?} has no previous version")]
    NoHistory(String),
    #[error("no version {stamp} in the history of {path:?}")]
    UnknownStamp { path: String, stamp: VersionStamp },
    #[error("history of {path:?} holds a malformed stamp: {source}")]
    BadHistory { path: String, source: ParseStampError },
    #[error("version chain references missing block {0}")]
    BrokenChain(BlockId),
}

/// Root of one immutable tree version.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeHandle {
    pub root: BlockId,
}

impl TreeHandle {
    pub fn new(root: BlockId) -> Self {
        Self { root }
    }
}

impl fmt::Debug for TreeHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TreeHandle({})", self.root.short())
    }
}

/// What a path resolved to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Dir(BlockId),
    File(BlockId),
    Lwf(Vec<u8>),
    Receptor(BlockId),
}

impl Node {
    /// Block id of the node, if it has one (lwf content lives in its parent).
    pub fn id(&self) -> Option<BlockId> {
        match self {
            Node::Dir(id) | Node::File(id) | Node::Receptor(id) => Some(*id),
            Node::Lwf(_) => None,
        }
    }

    fn from_entry(e: &ManifestEntry) -> Self {
        match e.kind {
            EntryKind::Dir => Node::Dir(e.target),
            EntryKind::File => Node::File(e.target),
            EntryKind::Receptor => Node::Receptor(e.target),
            EntryKind::Lwf => Node::Lwf(e.inline.clone().unwrap_or_default()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Component<'a> {
    Name(&'a [u8]),
    Prev,
    Parent,
    History,
}

fn components(path: &str) -> impl Iterator<Item = Component<'_>> {
    path.split('/').filter(|c| !c.is_empty()).map(|c| match c {
        "." => Component::Prev,
        ".." => Component::Parent,
        "..." => Component::History,
        other => Component::Name(other.as_bytes()),
    })
}

/// Splits a path that may only contain ordinary names.
pub fn plain_path(path: &str) -> Result<Vec<Name>, FsError> {
    path.split('/')
        .filter(|c| !c.is_empty())
        .map(|c| {
            Name::new(c.as_bytes()).map_err(|reason| FsError::Name {
                path: path.to_string(),
                reason,
            })
        })
        .collect()
}

fn join(names: &[Name]) -> String {
    names.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("/")
}

/// Outcome of comparing two roots' version chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForkReport {
    /// One root descends from the other (or they are equal).
    Linear { ancestor: BlockId, head: BlockId },
    /// Both descend from `ancestor` along different lines.
    Forked { ancestor: BlockId, heads: [BlockId; 2] },
    /// The chains share no version.
    Unrelated { heads: [BlockId; 2] },
}

/// Contents for [`MerkleFs::import`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImportEntry {
    File(Vec<u8>),
    Receptor(Vec<u8>),
}

/// Tree operations bound to a store.
pub struct MerkleFs<'s> {
    store: &'s Store,
    lwf_threshold: usize,
}

struct Frame {
    id: BlockId,
    manifest: Manifest,
}

impl<'s> MerkleFs<'s> {
    pub fn new(store: &'s Store) -> Self {
        Self::with_lwf_threshold(store, DEFAULT_LWF_THRESHOLD)
    }

    pub fn with_lwf_threshold(store: &'s Store, lwf_threshold: usize) -> Self {
        Self {
            store,
            lwf_threshold: lwf_threshold.min(u16::MAX as usize),
        }
    }

    pub fn store(&self) -> &'s Store {
        self.store
    }

    pub fn lwf_threshold(&self) -> usize {
        self.lwf_threshold
    }

    /// The empty directory needs no block: its id always resolves, stored or not.
    pub fn load_manifest(&self, id: &BlockId) -> Result<Manifest, FsError> {
        let bytes = match self.store.get_block(id) {
            Err(StoreError::NotFound(_)) if *id == self.empty_root_id() => return Ok(Manifest::default()),
            r => r?,
        };
        Manifest::decode(&bytes).map_err(|source| StoreError::Malformed { id: *id, source }.into())
    }

    pub fn put_manifest(&self, m: &Manifest) -> Result<BlockId, FsError> {
        Ok(self.store.put(&m.encode(), BlockKind::Meta)?)
    }

    /// Id of the empty directory, without storing it.
    pub fn empty_root_id(&self) -> BlockId {
        self.store.hash(&Manifest::default().encode())
    }

    /// Stores the empty directory and returns it as a tree.
    pub fn empty_root(&self) -> Result<TreeHandle, FsError> {
        Ok(TreeHandle::new(self.put_manifest(&Manifest::default())?))
    }

    fn frame(&self, id: BlockId) -> Result<Frame, FsError> {
        Ok(Frame {
            id,
            manifest: self.load_manifest(&id)?,
        })
    }

    fn history_frame(&self, m: &Manifest) -> Result<Frame, FsError> {
        match m.history {
            Some(id) => self.frame(id),
            None => {
                let manifest = Manifest::default();
                Ok(Frame {
                    id: self.store.hash(&manifest.encode()),
                    manifest,
                })
            }
        }
    }

    pub fn resolve(&self, tree: TreeHandle, path: &str) -> Result<Node, FsError> {
        let comps: Vec<_> = components(path).collect();
        let mut stack = vec![self.frame(tree.root)?];
        let mut walked: Vec<&str> = Vec::new();
        let shown = |walked: &[&str]| walked.join("/");
        for (i, comp) in comps.iter().enumerate() {
            let top = stack.last().expect("stack never empties");
            match *comp {
                Component::Parent => {
                    if stack.len() > 1 {
                        stack.pop();
                        walked.pop();
                    }
                }
                Component::Prev => {
                    walked.push(".");
                    let prev = top.manifest.prev.ok_or_else(|| FsError::NoHistory(shown(&walked)))?;
                    let frame = self.frame(prev)?;
                    stack.push(frame);
                }
                Component::History => {
                    walked.push("...");
                    let frame = self.history_frame(&top.manifest)?;
                    stack.push(frame);
                }
                Component::Name(name) => {
                    walked.push(std::str::from_utf8(name).unwrap_or("?"));
                    let entry = top.manifest.get(name).ok_or_else(|| FsError::NotFound(shown(&walked)))?;
                    if entry.is_dir() {
                        let frame = self.frame(entry.target)?;
                        stack.push(frame);
                    } else if i + 1 == comps.len() {
                        return Ok(Node::from_entry(entry));
                    } else {
                        return Err(FsError::Type {
                            path: shown(&walked),
                            expected: "directory",
                        });
                    }
                }
            }
        }
        Ok(Node::Dir(stack.last().unwrap().id))
    }

    pub fn read_file(&self, tree: TreeHandle, path: &str) -> Result<Vec<u8>, FsError> {
        match self.resolve(tree, path)? {
            Node::File(list) | Node::Receptor(list) => Ok(self.store.read_file(&list)?),
            Node::Lwf(bytes) => Ok(bytes),
            Node::Dir(_) => Err(FsError::Type {
                path: path.to_string(),
                expected: "file",
            }),
        }
    }

    pub fn read_dir(&self, tree: TreeHandle, path: &str) -> Result<Manifest, FsError> {
        match self.resolve(tree, path)? {
            Node::Dir(id) => {
                if self.store.contains(&id) {
                    self.load_manifest(&id)
                } else {
                    // the never-written history of an untouched directory
                    Ok(Manifest::default())
                }
            }
            _ => Err(FsError::Type {
                path: path.to_string(),
                expected: "directory",
            }),
        }
    }

    pub fn list(&self, tree: TreeHandle, path: &str) -> Result<Vec<ManifestEntry>, FsError> {
        Ok(self.read_dir(tree, path)?.into_entries())
    }

    fn history_of(&self, m: &Manifest, path: &str) -> Result<Vec<(VersionStamp, BlockId)>, FsError> {
        let Some(hid) = m.history else {
            return Ok(Vec::new());
        };
        let hist = self.load_manifest(&hid)?;
        let mut out = hist
            .entries()
            .iter()
            .map(|e| {
                let stamp = e.name.to_string().parse().map_err(|source| FsError::BadHistory {
                    path: path.to_string(),
                    source,
                })?;
                Ok((stamp, e.target))
            })
            .collect::<Result<Vec<_>, FsError>>()?;
        out.sort();
        Ok(out)
    }

    /// Past versions of a directory, oldest first. Each id is the directory
    /// as it was just before the mutation carrying that stamp.
    pub fn history(&self, tree: TreeHandle, path: &str) -> Result<Vec<(VersionStamp, BlockId)>, FsError> {
        let m = self.read_dir(tree, path)?;
        self.history_of(&m, path)
    }

    /// Rewrites the directory at `dirs` under `root`, applying `edit` there
    /// and re-linking every manifest on the way back up.
    fn rewrite(
        &self,
        current: Option<BlockId>,
        dirs: &[Name],
        depth: usize,
        stamp: VersionStamp,
        edit: &mut dyn FnMut(&mut Manifest) -> Result<(), FsError>,
    ) -> Result<BlockId, FsError> {
        let here = || join(&dirs[..depth]);
        let (mut m, old_history) = match current {
            Some(id) => {
                let m = self.load_manifest(&id)?;
                let hist = self.history_of(&m, &here())?;
                if let Some(&(last, _)) = hist.last() {
                    if stamp <= last {
                        return Err(FsError::Stamp { path: here(), stamp, last });
                    }
                }
                let history = m.history;
                (m, history)
            }
            None => (Manifest::default(), None),
        };
        if depth == dirs.len() {
            edit(&mut m)?;
        } else {
            let name = &dirs[depth];
            let existing = m.get(name.as_bytes()).cloned();
            let child = match &existing {
                Some(e) if e.is_dir() => Some(e.target),
                Some(_) => {
                    return Err(FsError::Type {
                        path: join(&dirs[..=depth]),
                        expected: "directory",
                    })
                }
                None => None,
            };
            let new_child = self.rewrite(child, dirs, depth + 1, stamp, edit)?;
            let perms = existing.map(|e| e.perms).unwrap_or(BlockId::ZERO);
            m.upsert(ManifestEntry {
                perms,
                ..ManifestEntry::dir(name.clone(), new_child)
            });
        }
        if let Some(old) = current {
            let mut hist = match old_history {
                Some(h) => self.load_manifest(&h)?,
                None => Manifest::default(),
            };
            let stamp_name = Name::new(stamp.to_string()).expect("stamps are legal names");
            hist.upsert(ManifestEntry::dir(stamp_name, old));
            m.prev = Some(old);
            m.history = Some(self.put_manifest(&hist)?);
        }
        self.put_manifest(&m)
    }

    fn mutate(
        &self,
        tree: TreeHandle,
        dirs: &[Name],
        stamp: VersionStamp,
        mut edit: impl FnMut(&mut Manifest) -> Result<(), FsError>,
    ) -> Result<TreeHandle, FsError> {
        let root = self.rewrite(Some(tree.root), dirs, 0, stamp, &mut edit)?;
        Ok(TreeHandle::new(root))
    }

    fn file_entry(&self, name: Name, bytes: &[u8], kind: EntryKind) -> Result<ManifestEntry, FsError> {
        Ok(match kind {
            EntryKind::Receptor => ManifestEntry::receptor(name, self.store.store_file(bytes)?),
            _ if bytes.len() <= self.lwf_threshold => ManifestEntry::lwf(name, bytes.to_vec()),
            _ => ManifestEntry::file(name, self.store.store_file(bytes)?),
        })
    }

    fn write_entry(&self, tree: TreeHandle, path: &str, bytes: &[u8], receptor: bool, stamp: VersionStamp) -> Result<TreeHandle, FsError> {
        let names = plain_path(path)?;
        let (file, dirs) = names.split_last().ok_or_else(|| FsError::Type {
            path: path.to_string(),
            expected: "file path",
        })?;
        self.mutate(tree, dirs, stamp, |m| {
            let existing = m.get(file.as_bytes());
            let kind = match existing.map(|e| e.kind) {
                Some(EntryKind::Dir) => {
                    return Err(FsError::Type {
                        path: path.to_string(),
                        expected: "file",
                    })
                }
                Some(EntryKind::Receptor) => EntryKind::Receptor,
                _ if receptor => EntryKind::Receptor,
                _ => EntryKind::File,
            };
            let perms = existing.map(|e| e.perms).unwrap_or(BlockId::ZERO);
            let entry = self.file_entry(file.clone(), bytes, kind)?;
            m.upsert(ManifestEntry { perms, ..entry });
            Ok(())
        })
    }

    /// Writes `bytes` at `path`, creating intermediate directories. Content
    /// up to the light-weight threshold is inlined into the parent manifest.
    /// Writing into an existing receptor keeps it a receptor.
    pub fn write_file(&self, tree: TreeHandle, path: &str, bytes: &[u8], stamp: VersionStamp) -> Result<TreeHandle, FsError> {
        self.write_entry(tree, path, bytes, false, stamp)
    }

    /// Creates or overwrites an event receptor file.
    pub fn write_receptor(&self, tree: TreeHandle, path: &str, bytes: &[u8], stamp: VersionStamp) -> Result<TreeHandle, FsError> {
        self.write_entry(tree, path, bytes, true, stamp)
    }

    /// Places an existing directory manifest at `path`, replacing any
    /// directory already there. The grafted subtree keeps its own links.
    pub fn link_dir(&self, tree: TreeHandle, path: &str, dir: BlockId, stamp: VersionStamp) -> Result<TreeHandle, FsError> {
        self.load_manifest(&dir)?;
        let names = plain_path(path)?;
        let (last, dirs) = names.split_last().ok_or_else(|| FsError::Type {
            path: path.to_string(),
            expected: "non-root path",
        })?;
        self.mutate(tree, dirs, stamp, |m| {
            let existing = m.get(last.as_bytes());
            if existing.is_some_and(|e| !e.is_dir()) {
                return Err(FsError::Type {
                    path: path.to_string(),
                    expected: "directory",
                });
            }
            let perms = existing.map(|e| e.perms).unwrap_or(BlockId::ZERO);
            m.upsert(ManifestEntry {
                perms,
                ..ManifestEntry::dir(last.clone(), dir)
            });
            Ok(())
        })
    }

    /// Points the entry at `path` to a different ACL block.
    pub fn set_perms(&self, tree: TreeHandle, path: &str, acl: BlockId, stamp: VersionStamp) -> Result<TreeHandle, FsError> {
        let names = plain_path(path)?;
        let (last, dirs) = names.split_last().ok_or_else(|| FsError::Type {
            path: path.to_string(),
            expected: "entry path",
        })?;
        self.mutate(tree, dirs, stamp, |m| {
            let mut e = m.get(last.as_bytes()).cloned().ok_or_else(|| FsError::NotFound(path.to_string()))?;
            e.perms = acl;
            m.upsert(e);
            Ok(())
        })
    }

    fn lookup_stamp(&self, dir: &Manifest, dir_path: &str, stamp: VersionStamp) -> Result<BlockId, FsError> {
        self.history_of(dir, dir_path)?
            .into_iter()
            .find(|(s, _)| *s == stamp)
            .map(|(_, id)| id)
            .ok_or(FsError::UnknownStamp {
                path: dir_path.to_string(),
                stamp,
            })
    }

    /// Restores `path` to how it was just before the mutation stamped
    /// `stamp`. A directory path uses its own history; a file path uses its
    /// parent directory's. The restore is itself a new version stamped
    /// `new_stamp`, and reuses the old blocks, so no data is re-stored.
    pub fn revert(&self, tree: TreeHandle, path: &str, stamp: VersionStamp, new_stamp: VersionStamp) -> Result<TreeHandle, FsError> {
        let names = plain_path(path)?;
        let is_dir = match self.resolve(tree, path) {
            Ok(Node::Dir(_)) => true,
            Ok(_) | Err(FsError::NotFound(_)) => false,
            Err(e) => return Err(e),
        };
        if is_dir {
            let current = self.read_dir(tree, path)?;
            let past = self.load_manifest(&self.lookup_stamp(&current, path, stamp)?)?;
            self.mutate(tree, &names, new_stamp, |m| {
                m.set_entries(past.entries().to_vec());
                Ok(())
            })
        } else {
            let (file, dirs) = names.split_last().expect("root is a directory");
            let dir_path = join(dirs);
            let parent = self.read_dir(tree, &dir_path)?;
            let past = self.load_manifest(&self.lookup_stamp(&parent, &dir_path, stamp)?)?;
            let old_entry = past.get(file.as_bytes()).cloned();
            self.mutate(tree, dirs, new_stamp, |m| {
                match &old_entry {
                    Some(e) => m.upsert(e.clone()),
                    None => {
                        m.remove(file.as_bytes());
                    }
                }
                Ok(())
            })
        }
    }

    /// Root ids reached by following `.` links from `root`, newest first.
    pub fn version_chain(&self, root: BlockId) -> Result<Vec<BlockId>, FsError> {
        let mut chain = vec![root];
        let mut cur = root;
        loop {
            let m = match self.load_manifest(&cur) {
                Ok(m) => m,
                Err(FsError::Store(StoreError::NotFound(id))) => return Err(FsError::BrokenChain(id)),
                Err(e) => return Err(e),
            };
            match m.prev {
                Some(p) => {
                    chain.push(p);
                    cur = p;
                }
                None => return Ok(chain),
            }
        }
    }

    /// Finds where the version lines of two roots meet.
    pub fn detect_forks(&self, a: TreeHandle, b: TreeHandle) -> Result<ForkReport, FsError> {
        let chain_a = self.version_chain(a.root)?;
        let seen: HashSet<BlockId> = chain_a.iter().copied().collect();
        let chain_b = self.version_chain(b.root)?;
        let Some(&ancestor) = chain_b.iter().find(|id| seen.contains(id)) else {
            return Ok(ForkReport::Unrelated { heads: [a.root, b.root] });
        };
        Ok(if ancestor == a.root {
            ForkReport::Linear { ancestor, head: b.root }
        } else if ancestor == b.root {
            ForkReport::Linear { ancestor, head: a.root }
        } else {
            ForkReport::Forked {
                ancestor,
                heads: [a.root, b.root],
            }
        })
    }

    /// Builds a fresh tree with no version history from a flat path map.
    pub fn import<'p>(&self, files: impl IntoIterator<Item = (&'p str, ImportEntry)>) -> Result<TreeHandle, FsError> {
        #[derive(Default)]
        struct Dir {
            dirs: BTreeMap<Name, Dir>,
            files: BTreeMap<Name, ImportEntry>,
        }
        let mut top = Dir::default();
        for (path, entry) in files {
            let names = plain_path(path)?;
            let (file, dirs) = names.split_last().ok_or_else(|| FsError::Type {
                path: path.to_string(),
                expected: "file path",
            })?;
            let mut d = &mut top;
            for n in dirs {
                if d.files.contains_key(n) {
                    return Err(FsError::Type {
                        path: path.to_string(),
                        expected: "directory",
                    });
                }
                d = d.dirs.entry(n.clone()).or_default();
            }
            if d.dirs.contains_key(file) {
                return Err(FsError::Type {
                    path: path.to_string(),
                    expected: "file",
                });
            }
            d.files.insert(file.clone(), entry);
        }
        fn build(fs: &MerkleFs<'_>, d: Dir) -> Result<BlockId, FsError> {
            let mut entries = Vec::new();
            for (name, sub) in d.dirs {
                entries.push(ManifestEntry::dir(name, build(fs, sub)?));
            }
            for (name, f) in d.files {
                entries.push(match f {
                    ImportEntry::File(bytes) => fs.file_entry(name, &bytes, EntryKind::File)?,
                    ImportEntry::Receptor(bytes) => fs.file_entry(name, &bytes, EntryKind::Receptor)?,
                });
            }
            fs.put_manifest(&Manifest::new(entries))
        }
        Ok(TreeHandle::new(build(self, top)?))
    }

    /// Every block the current content of `dir` needs: manifests, chunk
    /// lists, chunks and ACLs reachable through entries. Version links are
    /// not followed.
    pub fn content_blocks(&self, dir: BlockId, out: &mut std::collections::BTreeSet<BlockId>) -> Result<(), FsError> {
        if !out.insert(dir) {
            return Ok(());
        }
        let m = self.load_manifest(&dir)?;
        for e in m.entries() {
            if !e.perms.is_zero() {
                out.insert(e.perms);
            }
            match e.kind {
                EntryKind::Dir => self.content_blocks(e.target, out)?,
                EntryKind::File | EntryKind::Receptor => {
                    if out.insert(e.target) {
                        out.extend(self.store.chunk_list(&e.target)?.chunks);
                    }
                }
                EntryKind::Lwf => {}
            }
        }
        Ok(())
    }
}

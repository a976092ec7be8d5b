//! Application directories that carry their whole dependency closure by
//! hash, with one tree per platform, fetched lazily.
//!
//! An AppDir manifest names a tree per platform tag and lists the AppDir
//! manifests it depends on. Because dependencies are referenced by digest,
//! a library shared by many applications is stored once, and installing an
//! application only transfers the blocks of the requested platform that are
//! not already local.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::castore::{BlockId, BlockKind, BlockSource, ChunkList, Store, StoreError};
use crate::codec::{put_bytes16, DecodeError, Reader};
use crate::merklefs::{EntryKind, Manifest, TreeHandle};

pub const APPDIR_MAGIC: u8 = 0xAD;
pub const APPDIR_VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum AppDirError {
    #[error("dependency {0} is not in the store")]
    MissingDep(BlockId),
    #[error("platform tree {0} is not in the store")]
    MissingTree(BlockId),
    #[error("dependency cycle through {0}")]
    Cycle(BlockId),
    #[error("appdir {app:?} ({id}) has no tree for platform {platform:?}")]
    Platform { app: String, id: BlockId, platform: String },
    #[error("fetching {id} failed: {source}")]
    Fetch { id: BlockId, source: StoreError },
    #[error("block {id} does not decode: {source}")]
    Malformed { id: BlockId, source: DecodeError },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppDirManifest {
    pub name: String,
    pub platforms: BTreeMap<String, BlockId>,
    pub deps: Vec<BlockId>,
}

impl AppDirManifest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![APPDIR_MAGIC, APPDIR_VERSION];
        put_bytes16(&mut out, self.name.as_bytes());
        out.extend_from_slice(&(self.platforms.len() as u32).to_be_bytes());
        for (tag, tree) in &self.platforms {
            put_bytes16(&mut out, tag.as_bytes());
            out.extend_from_slice(tree.digest());
        }
        out.extend_from_slice(&(self.deps.len() as u32).to_be_bytes());
        for d in &self.deps {
            out.extend_from_slice(d.digest());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.header(APPDIR_MAGIC, APPDIR_VERSION)?;
        let utf8 = |r: &Reader<'_>, b: &[u8]| String::from_utf8(b.to_vec()).map_err(|_| r.invalid("non-UTF-8 string"));
        let raw = r.bytes16()?;
        let name = utf8(&r, raw)?;
        let mut platforms = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..r.u32()? {
            let raw = r.bytes16()?;
            let tag = utf8(&r, raw)?;
            if last.as_ref().is_some_and(|l| *l >= tag) {
                return Err(r.invalid(format!("platform {tag:?} out of order")));
            }
            last = Some(tag.clone());
            platforms.insert(tag, BlockId::from_digest(r.array()?));
        }
        let deps = (0..r.u32()?)
            .map(|_| Ok(BlockId::from_digest(r.array()?)))
            .collect::<Result<_, DecodeError>>()?;
        r.finish()?;
        Ok(Self { name, platforms, deps })
    }
}

/// Blocks transferred by one [`materialize`] call, in first-request order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FetchLog {
    pub requested: Vec<BlockId>,
    /// Bytes of fetched platform-tree blocks: manifests, chunk lists, chunks, ACLs.
    pub bytes_fetched: u64,
    /// Bytes of fetched AppDir manifests, which grow with the platform count.
    pub index_bytes: u64,
}

pub fn load_appdir(store: &Store, id: &BlockId) -> Result<AppDirManifest, AppDirError> {
    let bytes = store.get_block(id)?;
    AppDirManifest::decode(&bytes).map_err(|source| AppDirError::Malformed { id: *id, source })
}

/// Fails with [`AppDirError::Cycle`] if any path from `roots` revisits a node
/// already on the path.
pub fn check_acyclic(roots: &[BlockId], mut deps_of: impl FnMut(&BlockId) -> Result<Vec<BlockId>, AppDirError>) -> Result<(), AppDirError> {
    enum Step {
        Enter(BlockId),
        Leave(BlockId),
    }
    let mut done = HashSet::new();
    let mut on_path = HashSet::new();
    let mut stack: Vec<Step> = roots.iter().rev().map(|r| Step::Enter(*r)).collect();
    while let Some(step) = stack.pop() {
        match step {
            Step::Leave(id) => {
                on_path.remove(&id);
                done.insert(id);
            }
            Step::Enter(id) => {
                if on_path.contains(&id) {
                    return Err(AppDirError::Cycle(id));
                }
                if done.contains(&id) {
                    continue;
                }
                on_path.insert(id);
                stack.push(Step::Leave(id));
                for d in deps_of(&id)?.into_iter().rev() {
                    stack.push(Step::Enter(d));
                }
            }
        }
    }
    Ok(())
}

/// Stores an AppDir manifest. Identical inputs give the identical id.
pub fn build_appdir(
    store: &Store,
    name: &str,
    platform_trees: &BTreeMap<String, TreeHandle>,
    deps: &[BlockId],
) -> Result<BlockId, AppDirError> {
    for tree in platform_trees.values() {
        if !store.contains(&tree.root) {
            return Err(AppDirError::MissingTree(tree.root));
        }
    }
    check_acyclic(deps, |id| match load_appdir(store, id) {
        Ok(m) => Ok(m.deps),
        Err(AppDirError::Store(StoreError::NotFound(_))) => Err(AppDirError::MissingDep(*id)),
        Err(e) => Err(e),
    })?;
    let manifest = AppDirManifest {
        name: name.to_string(),
        platforms: platform_trees.iter().map(|(k, t)| (k.clone(), t.root)).collect(),
        deps: deps.to_vec(),
    };
    Ok(store.put(&manifest.encode(), BlockKind::Meta)?)
}

/// Fetches one block: (id, kind, is app manifest).
type Getter<'a> = dyn FnMut(&BlockId, BlockKind, bool) -> Result<Vec<u8>, AppDirError> + 'a;

/// Depth-first walk over everything one platform of an AppDir needs.
/// `get` is called once per distinct block, in first-request order.
fn walk(app: BlockId, platform: &str, get: &mut Getter<'_>) -> Result<(), AppDirError> {
    let mut seen = HashSet::new();
    let mut on_path = HashSet::new();
    walk_app(app, platform, get, &mut seen, &mut on_path)
}

fn walk_app(
    id: BlockId,
    platform: &str,
    get: &mut Getter<'_>,
    seen: &mut HashSet<BlockId>,
    on_path: &mut HashSet<BlockId>,
) -> Result<(), AppDirError> {
    if on_path.contains(&id) {
        return Err(AppDirError::Cycle(id));
    }
    if !seen.insert(id) {
        return Ok(());
    }
    let bytes = get(&id, BlockKind::Meta, true)?;
    let m = AppDirManifest::decode(&bytes).map_err(|source| AppDirError::Malformed { id, source })?;
    let tree = *m.platforms.get(platform).ok_or_else(|| AppDirError::Platform {
        app: m.name.clone(),
        id,
        platform: platform.to_string(),
    })?;
    walk_dir(tree, get, seen)?;
    on_path.insert(id);
    for dep in &m.deps {
        walk_app(*dep, platform, get, seen, on_path)?;
    }
    on_path.remove(&id);
    Ok(())
}

fn walk_dir(id: BlockId, get: &mut Getter<'_>, seen: &mut HashSet<BlockId>) -> Result<(), AppDirError> {
    if !seen.insert(id) {
        return Ok(());
    }
    let bytes = get(&id, BlockKind::Meta, false)?;
    let m = Manifest::decode(&bytes).map_err(|source| AppDirError::Malformed { id, source })?;
    for e in m.entries() {
        if !e.perms.is_zero() && seen.insert(e.perms) {
            get(&e.perms, BlockKind::Meta, false)?;
        }
        match e.kind {
            EntryKind::Dir => walk_dir(e.target, get, seen)?,
            EntryKind::File | EntryKind::Receptor => {
                if !seen.insert(e.target) {
                    continue;
                }
                let bytes = get(&e.target, BlockKind::Meta, false)?;
                let list = ChunkList::decode(&bytes).map_err(|source| AppDirError::Malformed { id: e.target, source })?;
                for chunk in list.chunks {
                    if seen.insert(chunk) {
                        get(&chunk, BlockKind::Data, false)?;
                    }
                }
            }
            EntryKind::Lwf => {}
        }
    }
    Ok(())
}

/// Exact set of blocks needed to run `app` on `platform`.
pub fn closure(store: &Store, app: BlockId, platform: &str) -> Result<BTreeSet<BlockId>, AppDirError> {
    let mut out = BTreeSet::new();
    walk(app, platform, &mut |id, _, _| {
        out.insert(*id);
        Ok(store.get_block(id)?)
    })?;
    Ok(out)
}

/// Pulls every block of `app`'s closure for `platform` that `local` lacks
/// from `remote`, verifying each against its id before storing it.
pub fn materialize(local: &Store, remote: &dyn BlockSource, app: BlockId, platform: &str) -> Result<FetchLog, AppDirError> {
    let mut log = FetchLog::default();
    walk(app, platform, &mut |id, kind, is_index| {
        if local.contains(id) {
            return Ok(local.get_block(id)?);
        }
        let bytes = remote.fetch(id).map_err(|source| AppDirError::Fetch { id: *id, source })?;
        let actual = id.alg().digest(&bytes);
        if actual != *id {
            return Err(AppDirError::Fetch {
                id: *id,
                source: StoreError::Corrupt { id: *id, actual },
            });
        }
        local.put(&bytes, kind)?;
        log.requested.push(*id);
        if is_index {
            log.index_bytes += bytes.len() as u64;
        } else {
            log.bytes_fetched += bytes.len() as u64;
        }
        Ok(bytes)
    })?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merklefs::{ImportEntry, MerkleFs};

    fn payload(tag: &str, len: usize) -> Vec<u8> {
        let seed = BlockId::of(tag.as_bytes());
        (0..len).map(|i| seed.digest()[i % 64] ^ (i / 64) as u8).collect()
    }

    fn tree(store: &Store, files: &[(&str, Vec<u8>)]) -> TreeHandle {
        MerkleFs::new(store)
            .import(files.iter().map(|(p, b)| (*p, ImportEntry::File(b.clone()))))
            .unwrap()
    }

    fn platforms(pairs: Vec<(&str, TreeHandle)>) -> BTreeMap<String, TreeHandle> {
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn same_inputs_same_id() {
        let store = Store::memory();
        let t = tree(&store, &[("bin/app", payload("app", 9000))]);
        let a = build_appdir(&store, "app", &platforms(vec![("linux-x86_64", t)]), &[]).unwrap();
        let before = store.stats().unique_blocks;
        let b = build_appdir(&store, "app", &platforms(vec![("linux-x86_64", t)]), &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.stats().unique_blocks, before);
    }

    #[test]
    fn shared_dependency_stored_once() {
        let store = Store::memory();
        let lib = payload("libfoo", 20_000);
        let l = build_appdir(
            &store,
            "libfoo",
            &platforms(vec![("p", tree(&store, &[("lib/libfoo.so", lib.clone())]))]),
            &[],
        )
        .unwrap();
        let after_lib = store.stats().data_blocks;
        let a = build_appdir(
            &store,
            "a",
            &platforms(vec![("p", tree(&store, &[("a", payload("a", 5000))]))]),
            &[l],
        )
        .unwrap();
        let b = build_appdir(
            &store,
            "b",
            &platforms(vec![("p", tree(&store, &[("b", payload("b", 5000))]))]),
            &[l],
        )
        .unwrap();
        assert_eq!(store.stats().data_blocks, after_lib + 4);
        let ca = closure(&store, a, "p").unwrap();
        let cb = closure(&store, b, "p").unwrap();
        let lib_blocks = closure(&store, l, "p").unwrap();
        assert!(lib_blocks.is_subset(&ca) && lib_blocks.is_subset(&cb));
    }

    #[test]
    fn missing_dependency_and_tree() {
        let store = Store::memory();
        let t = tree(&store, &[("x", b"x".to_vec())]);
        let ghost = BlockId::of(b"ghost");
        assert!(matches!(build_appdir(&store, "a", &platforms(vec![("p", t)]), &[ghost]), Err(AppDirError::MissingDep(id)) if id == ghost));
        let bad_tree = TreeHandle::new(ghost);
        assert!(matches!(
            build_appdir(&store, "a", &platforms(vec![("p", bad_tree)]), &[]),
            Err(AppDirError::MissingTree(_))
        ));
    }

    #[test]
    fn cycle_detection_on_synthetic_graph() {
        let n: Vec<BlockId> = (0..4u8).map(|i| BlockId::of(&[i])).collect();
        let graph = |edges: Vec<(usize, usize)>| {
            let n = n.clone();
            move |id: &BlockId| -> Result<Vec<BlockId>, AppDirError> {
                let i = n.iter().position(|x| x == id).unwrap();
                Ok(edges.iter().filter(|(a, _)| *a == i).map(|(_, b)| n[*b]).collect())
            }
        };
        // diamond is fine
        assert!(check_acyclic(&[n[0]], graph(vec![(0, 1), (0, 2), (1, 3), (2, 3)])).is_ok());
        assert!(matches!(
            check_acyclic(&[n[0]], graph(vec![(0, 1), (1, 2), (2, 0)])),
            Err(AppDirError::Cycle(_))
        ));
        assert!(matches!(check_acyclic(&[n[3]], graph(vec![(3, 3)])), Err(AppDirError::Cycle(_))));
    }

    #[test]
    fn closure_excludes_other_platforms() {
        let store = Store::memory();
        let p1 = tree(&store, &[("bin", payload("p1", 12_000))]);
        let p2 = tree(&store, &[("bin", payload("p2", 12_000))]);
        let app = build_appdir(&store, "app", &platforms(vec![("p1", p1), ("p2", p2)]), &[]).unwrap();
        let c1 = closure(&store, app, "p1").unwrap();
        let c2 = closure(&store, app, "p2").unwrap();
        let p2_only: BTreeSet<_> = c2.difference(&c1).copied().collect();
        assert!(!p2_only.is_empty());
        assert!(c1.is_disjoint(&p2_only));
        assert!(matches!(closure(&store, app, "p3"), Err(AppDirError::Platform { .. })));
    }

    #[test]
    fn closure_of_single_file_app_is_every_block_in_a_fresh_store() {
        let store = Store::memory();
        let t = tree(&store, &[("main", payload("main", 10_000))]);
        let app = build_appdir(&store, "solo", &platforms(vec![("p", t)]), &[]).unwrap();
        let all: BTreeSet<_> = store.block_ids().unwrap().into_iter().collect();
        let c = closure(&store, app, "p").unwrap();
        assert_eq!(c, all);
        // appdir manifest, dir manifest, chunk list, three chunks
        assert_eq!(c.len(), 6);
    }

    #[test]
    fn diamond_dependencies_counted_once() {
        let store = Store::memory();
        let mk = |name: &str, deps: &[BlockId]| {
            let t = tree(&store, &[(name, payload(name, 4096))]);
            build_appdir(&store, name, &platforms(vec![("p", t)]), deps).unwrap()
        };
        let d = mk("d", &[]);
        let b = mk("b", &[d]);
        let c = mk("c", &[d]);
        let a = mk("a", &[b, c]);
        let ca = closure(&store, a, "p").unwrap();
        let cd = closure(&store, d, "p").unwrap();
        assert!(cd.is_subset(&ca));
        // 4 appdirs + 4 dir manifests + 4 chunk lists + 4 chunks
        assert_eq!(ca.len(), 16);
    }

    #[test]
    fn dependency_missing_platform_is_named() {
        let store = Store::memory();
        let lib = build_appdir(
            &store,
            "lib",
            &platforms(vec![("p1", tree(&store, &[("l", payload("l", 100))]))]),
            &[],
        )
        .unwrap();
        let app = build_appdir(
            &store,
            "app",
            &platforms(vec![
                ("p1", tree(&store, &[("a", payload("a", 100))])),
                ("p2", tree(&store, &[("a", payload("a2", 100))])),
            ]),
            &[lib],
        )
        .unwrap();
        match closure(&store, app, "p2") {
            Err(AppDirError::Platform { app, platform, .. }) => {
                assert_eq!(app, "lib");
                assert_eq!(platform, "p2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn materialize_fetches_once() {
        let remote = Store::memory();
        let t = tree(&remote, &[("bin/app", payload("app", 30_000)), ("share/data", payload("d", 7000))]);
        let app = build_appdir(&remote, "app", &platforms(vec![("p", t)]), &[]).unwrap();
        let local = Store::memory();
        let log = materialize(&local, &remote, app, "p").unwrap();
        let c = closure(&remote, app, "p").unwrap();
        assert_eq!(log.requested.iter().copied().collect::<BTreeSet<_>>(), c);
        assert_eq!(log.requested.len(), c.len());
        assert_eq!(log.requested[0], app);
        for id in &c {
            assert!(local.contains(id));
        }
        let again = materialize(&local, &remote, app, "p").unwrap();
        assert!(again.requested.is_empty());
        assert_eq!(again.bytes_fetched, 0);
    }

    struct Flaky<'a> {
        inner: &'a Store,
        broken: BlockId,
    }

    impl BlockSource for Flaky<'_> {
        fn fetch(&self, id: &BlockId) -> Result<Vec<u8>, StoreError> {
            if *id == self.broken {
                Err(StoreError::NotFound(*id))
            } else {
                self.inner.fetch(id)
            }
        }
    }

    #[test]
    fn fetch_failure_names_the_block() {
        let remote = Store::memory();
        let t = tree(&remote, &[("f", payload("f", 5000))]);
        let app = build_appdir(&remote, "app", &platforms(vec![("p", t)]), &[]).unwrap();
        let broken = *closure(&remote, app, "p")
            .unwrap()
            .iter()
            .find(|id| **id != app && **id != t.root)
            .unwrap();
        let flaky = Flaky { inner: &remote, broken };
        match materialize(&Store::memory(), &flaky, app, "p") {
            Err(AppDirError::Fetch { id, .. }) => assert_eq!(id, broken),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_encoding_roundtrip() {
        let m = AppDirManifest {
            name: "editor".into(),
            platforms: [("a".to_string(), BlockId::of(b"1")), ("b".to_string(), BlockId::of(b"2"))].into(),
            deps: vec![BlockId::of(b"3")],
        };
        let bytes = m.encode();
        assert_eq!(&bytes[..2], &[0xAD, 0x01]);
        assert_eq!(AppDirManifest::decode(&bytes).unwrap(), m);
    }
}

//! Immutable, deduplicating block store addressed by content digest.
//!
//! Every block is named by the SHA-512 digest of its bytes. Reads recompute
//! the digest, so a damaged block surfaces as [`StoreError::Corrupt`] and is
//! never handed back as data. Absence and corruption are distinct errors so a
//! caller can fall back to another source for either.
//!
//! On disk a store is a directory holding `store.cfg`, a `stats` counter file
//! and `blocks/<hex[0:2]>/<hex>` files containing raw block bytes.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha512};
use thiserror::Error;

use crate::codec::{DecodeError, Reader};

pub const DEFAULT_HASH_BITS: u32 = 512;
pub const DEFAULT_CHUNK_SIZE: usize = 4096;
/// Upper bound for metadata objects (manifests, chunk lists, ACLs).
pub const MAX_META_SIZE: usize = 64 << 20;
pub const DIGEST_LEN: usize = 64;

const CONFIG_FILE: &str = "store.cfg";
const STATS_FILE: &str = "stats";
const BLOCKS_DIR: &str = "blocks";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("block of {len} bytes exceeds the {limit}-byte limit")]
    TooLarge { len: usize, limit: usize },
    #[error("block {0} not found")]
    NotFound(BlockId),
    #[error("block {id} is corrupt (content hashes to {actual})")]
    Corrupt { id: BlockId, actual: BlockId },
    #[error("block {id} does not decode: {source}")]
    Malformed { id: BlockId, source: DecodeError },
    #[error("bad store config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Digest family tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HashAlg {
    Sha512,
}

impl HashAlg {
    pub fn tag(self) -> u8 {
        match self {
            HashAlg::Sha512 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(HashAlg::Sha512),
            _ => None,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            HashAlg::Sha512 => 512,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            512 => Some(HashAlg::Sha512),
            _ => None,
        }
    }

    pub fn digest(self, bytes: &[u8]) -> BlockId {
        match self {
            HashAlg::Sha512 => {
                let mut digest = [0u8; DIGEST_LEN];
                digest.copy_from_slice(Sha512::digest(bytes).as_slice());
                BlockId { alg: self, digest }
            }
        }
    }
}

/// Address of an immutable byte string: the digest of its content.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    alg: HashAlg,
    digest: [u8; DIGEST_LEN],
}

impl BlockId {
    /// All-zero placeholder used where an encoding has an unused digest slot.
    pub const ZERO: BlockId = BlockId {
        alg: HashAlg::Sha512,
        digest: [0; DIGEST_LEN],
    };

    pub fn of(bytes: &[u8]) -> Self {
        HashAlg::Sha512.digest(bytes)
    }

    pub fn from_digest(digest: [u8; DIGEST_LEN]) -> Self {
        Self {
            alg: HashAlg::Sha512,
            digest,
        }
    }

    pub fn alg(&self) -> HashAlg {
        self.alg
    }

    pub fn digest(&self) -> &[u8; DIGEST_LEN] {
        &self.digest
    }

    pub fn is_zero(&self) -> bool {
        self.digest == [0; DIGEST_LEN]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.digest)
    }

    /// First 12 hex characters, for human-facing listings.
    pub fn short(&self) -> String {
        hex::encode(&self.digest[..6])
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({})", self.short())
    }
}

#[derive(Debug, Error)]
#[error("invalid block id: {0}")]
pub struct ParseBlockIdError(String);

impl FromStr for BlockId {
    type Err = ParseBlockIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = hex::decode(s.trim()).map_err(|e| ParseBlockIdError(e.to_string()))?;
        let digest: [u8; DIGEST_LEN] = raw
            .try_into()
            .map_err(|v: Vec<u8>| ParseBlockIdError(format!("{} bytes, want {DIGEST_LEN}", v.len())))?;
        Ok(BlockId::from_digest(digest))
    }
}

/// Accounting class of a block, fixed by its first write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// File content chunk.
    Data,
    /// Manifest, chunk list, ACL or any other structural object.
    Meta,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub unique_blocks: u64,
    /// Sum of the lengths of every write as presented, duplicates included.
    pub logical_bytes: u64,
    /// Sum of the sizes of distinct stored blocks.
    pub physical_bytes: u64,
    pub data_blocks: u64,
    pub manifest_blocks: u64,
}

impl StoreStats {
    fn encode(&self) -> String {
        format!(
            "unique_blocks={}\nlogical_bytes={}\nphysical_bytes={}\ndata_blocks={}\nmanifest_blocks={}\n",
            self.unique_blocks, self.logical_bytes, self.physical_bytes, self.data_blocks, self.manifest_blocks
        )
    }

    fn decode(text: &str) -> Result<Self, StoreError> {
        let mut stats = StoreStats::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| StoreError::Config(format!("bad stats line {line:?}")))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| StoreError::Config(format!("bad stats value {line:?}")))?;
            match key.trim() {
                "unique_blocks" => stats.unique_blocks = value,
                "logical_bytes" => stats.logical_bytes = value,
                "physical_bytes" => stats.physical_bytes = value,
                "data_blocks" => stats.data_blocks = value,
                "manifest_blocks" => stats.manifest_blocks = value,
                other => return Err(StoreError::Config(format!("unknown stats key {other:?}"))),
            }
        }
        Ok(stats)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreConfig {
    pub hash_bits: u32,
    pub chunk_size: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            hash_bits: DEFAULT_HASH_BITS,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl StoreConfig {
    pub fn encode(&self) -> String {
        format!("hash_bits={}\nchunk_size={}\n", self.hash_bits, self.chunk_size)
    }

    pub fn decode(text: &str) -> Result<Self, StoreError> {
        let mut cfg = StoreConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| StoreError::Config(format!("bad line {line:?}")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| StoreError::Config(format!("bad value {line:?}")))
            };
            match key.trim() {
                "hash_bits" => cfg.hash_bits = parse(value)? as u32,
                "chunk_size" => cfg.chunk_size = parse(value)? as usize,
                other => return Err(StoreError::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<HashAlg, StoreError> {
        if self.chunk_size == 0 {
            return Err(StoreError::Config("chunk_size must be positive".into()));
        }
        HashAlg::from_bits(self.hash_bits).ok_or_else(|| StoreError::Config(format!("no digest family with {} bits", self.hash_bits)))
    }
}

/// Anything blocks can be pulled from: a local store, a remote peer, a cache.
pub trait BlockSource {
    fn fetch(&self, id: &BlockId) -> Result<Vec<u8>, StoreError>;
}

trait Backend: Send + Sync {
    fn read(&self, id: &BlockId) -> io::Result<Option<Vec<u8>>>;
    /// Writes atomically. Overwriting an existing block is harmless.
    fn write(&self, id: &BlockId, bytes: &[u8]) -> io::Result<()>;
    fn contains(&self, id: &BlockId) -> io::Result<bool>;
    fn ids(&self) -> io::Result<Vec<BlockId>>;
    fn save_stats(&self, stats: &StoreStats) -> io::Result<()>;
}

#[derive(Default)]
struct MemBackend {
    blocks: RwLock<HashMap<BlockId, Vec<u8>>>,
}

impl Backend for MemBackend {
    fn read(&self, id: &BlockId) -> io::Result<Option<Vec<u8>>> {
        Ok(self.blocks.read().unwrap().get(id).cloned())
    }

    fn write(&self, id: &BlockId, bytes: &[u8]) -> io::Result<()> {
        self.blocks.write().unwrap().insert(*id, bytes.to_vec());
        Ok(())
    }

    fn contains(&self, id: &BlockId) -> io::Result<bool> {
        Ok(self.blocks.read().unwrap().contains_key(id))
    }

    fn ids(&self) -> io::Result<Vec<BlockId>> {
        let mut ids: Vec<_> = self.blocks.read().unwrap().keys().copied().collect();
        ids.sort();
        Ok(ids)
    }

    fn save_stats(&self, _stats: &StoreStats) -> io::Result<()> {
        Ok(())
    }
}

struct DiskBackend {
    root: PathBuf,
}

impl DiskBackend {
    fn block_path(&self, id: &BlockId) -> PathBuf {
        let hex = id.to_hex();
        self.root.join(BLOCKS_DIR).join(&hex[..2]).join(hex)
    }
}

fn write_atomic(dir: &Path, target: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_data()?;
    tmp.persist(target).map_err(|e| e.error)?;
    Ok(())
}

impl Backend for DiskBackend {
    fn read(&self, id: &BlockId) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.block_path(id)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn write(&self, id: &BlockId, bytes: &[u8]) -> io::Result<()> {
        let path = self.block_path(id);
        let shard = path.parent().expect("block path has a shard dir");
        fs::create_dir_all(shard)?;
        write_atomic(shard, &path, bytes)
    }

    fn contains(&self, id: &BlockId) -> io::Result<bool> {
        Ok(self.block_path(id).is_file())
    }

    fn ids(&self) -> io::Result<Vec<BlockId>> {
        let mut ids = Vec::new();
        let blocks = self.root.join(BLOCKS_DIR);
        if !blocks.is_dir() {
            return Ok(ids);
        }
        for shard in fs::read_dir(blocks)? {
            let shard = shard?;
            if !shard.file_type()?.is_dir() {
                continue;
            }
            for file in fs::read_dir(shard.path())? {
                let name = file?.file_name();
                if let Ok(id) = name.to_string_lossy().parse::<BlockId>() {
                    ids.push(id);
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn save_stats(&self, stats: &StoreStats) -> io::Result<()> {
        write_atomic(&self.root, &self.root.join(STATS_FILE), stats.encode().as_bytes())
    }
}

/// A content-addressed block store over memory or a directory.
///
/// Puts are atomic and idempotent; racing identical puts converge on one
/// block. Counters are kept under a mutex that only writers take.
pub struct Store {
    backend: Box<dyn Backend>,
    config: StoreConfig,
    alg: HashAlg,
    stats: Mutex<StoreStats>,
}

impl Store {
    pub fn memory() -> Self {
        Self::memory_with(StoreConfig::default()).expect("default config is valid")
    }

    pub fn memory_with(config: StoreConfig) -> Result<Self, StoreError> {
        let alg = config.validate()?;
        Ok(Self {
            backend: Box::new(MemBackend::default()),
            config,
            alg,
            stats: Mutex::new(StoreStats::default()),
        })
    }

    /// Creates a new on-disk store, or opens it if one already exists there.
    pub fn create(root: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let root = root.as_ref();
        if root.join(CONFIG_FILE).is_file() {
            return Self::open(root);
        }
        config.validate()?;
        fs::create_dir_all(root.join(BLOCKS_DIR))?;
        fs::write(root.join(CONFIG_FILE), config.encode())?;
        Self::open(root)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let config = StoreConfig::decode(&fs::read_to_string(root.join(CONFIG_FILE))?)?;
        let alg = config.validate()?;
        let stats = match fs::read_to_string(root.join(STATS_FILE)) {
            Ok(text) => StoreStats::decode(&text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => StoreStats::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            backend: Box::new(DiskBackend { root }),
            config,
            alg,
            stats: Mutex::new(stats),
        })
    }

    pub fn config(&self) -> StoreConfig {
        self.config
    }

    pub fn chunk_size(&self) -> usize {
        self.config.chunk_size
    }

    pub fn hash(&self, bytes: &[u8]) -> BlockId {
        self.alg.digest(bytes)
    }

    /// Stores one file-content block of at most `chunk_size` bytes.
    pub fn put_block(&self, bytes: &[u8]) -> Result<BlockId, StoreError> {
        self.put(bytes, BlockKind::Data)
    }

    pub fn put(&self, bytes: &[u8], kind: BlockKind) -> Result<BlockId, StoreError> {
        let limit = match kind {
            BlockKind::Data => self.config.chunk_size,
            BlockKind::Meta => MAX_META_SIZE,
        };
        if bytes.len() > limit {
            return Err(StoreError::TooLarge { len: bytes.len(), limit });
        }
        let id = self.hash(bytes);
        let mut stats = self.stats.lock().unwrap();
        if !self.backend.contains(&id)? {
            self.backend.write(&id, bytes)?;
            stats.unique_blocks += 1;
            stats.physical_bytes += bytes.len() as u64;
            match kind {
                BlockKind::Data => stats.data_blocks += 1,
                BlockKind::Meta => stats.manifest_blocks += 1,
            }
        }
        stats.logical_bytes += bytes.len() as u64;
        Ok(id)
    }

    /// Returns the block's bytes after checking they still hash to `id`.
    pub fn get_block(&self, id: &BlockId) -> Result<Vec<u8>, StoreError> {
        let bytes = self.backend.read(id)?.ok_or(StoreError::NotFound(*id))?;
        let actual = id.alg().digest(&bytes);
        if actual != *id {
            return Err(StoreError::Corrupt { id: *id, actual });
        }
        Ok(bytes)
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.backend.contains(id).unwrap_or(false)
    }

    /// All block ids present, sorted.
    pub fn block_ids(&self) -> Result<Vec<BlockId>, StoreError> {
        Ok(self.backend.ids()?)
    }

    /// Splits `bytes` into fixed-size chunks and stores each one.
    pub fn chunk_and_store(&self, bytes: &[u8], chunk_size: usize) -> Result<Vec<BlockId>, StoreError> {
        if chunk_size == 0 {
            return Err(StoreError::Config("chunk_size must be positive".into()));
        }
        bytes.chunks(chunk_size).map(|c| self.put_block(c)).collect()
    }

    /// Stores a whole file as chunks plus a chunk-list object; returns the
    /// chunk list's id.
    pub fn store_file(&self, bytes: &[u8]) -> Result<BlockId, StoreError> {
        let chunks = self.chunk_and_store(bytes, self.config.chunk_size)?;
        let list = ChunkList {
            total_len: bytes.len() as u64,
            chunks,
        };
        self.put(&list.encode(), BlockKind::Meta)
    }

    pub fn chunk_list(&self, id: &BlockId) -> Result<ChunkList, StoreError> {
        let bytes = self.get_block(id)?;
        ChunkList::decode(&bytes).map_err(|source| StoreError::Malformed { id: *id, source })
    }

    pub fn read_file(&self, list_id: &BlockId) -> Result<Vec<u8>, StoreError> {
        let list = self.chunk_list(list_id)?;
        let mut out = Vec::with_capacity(list.total_len as usize);
        for chunk in &list.chunks {
            out.extend_from_slice(&self.get_block(chunk)?);
        }
        if out.len() as u64 != list.total_len {
            return Err(StoreError::Malformed {
                id: *list_id,
                source: DecodeError::Invalid {
                    offset: 0,
                    what: format!("chunks total {} bytes, list says {}", out.len(), list.total_len),
                },
            });
        }
        Ok(out)
    }

    pub fn stats(&self) -> StoreStats {
        *self.stats.lock().unwrap()
    }

    /// Persists counters; a no-op for memory stores.
    pub fn flush(&self) -> Result<(), StoreError> {
        let stats = self.stats();
        self.backend.save_stats(&stats)?;
        Ok(())
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

impl BlockSource for Store {
    fn fetch(&self, id: &BlockId) -> Result<Vec<u8>, StoreError> {
        self.get_block(id)
    }
}

const CHUNK_LIST_MAGIC: u8 = 0xC1;
const CHUNK_LIST_VERSION: u8 = 0x01;

/// Ordered chunk ids of one file, stored as a single metadata block so any
/// file has one target hash regardless of size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkList {
    pub total_len: u64,
    pub chunks: Vec<BlockId>,
}

impl ChunkList {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.chunks.len() * DIGEST_LEN);
        out.push(CHUNK_LIST_MAGIC);
        out.push(CHUNK_LIST_VERSION);
        out.extend_from_slice(&self.total_len.to_be_bytes());
        out.extend_from_slice(&(self.chunks.len() as u32).to_be_bytes());
        for c in &self.chunks {
            out.extend_from_slice(c.digest());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.header(CHUNK_LIST_MAGIC, CHUNK_LIST_VERSION)?;
        let total_len = r.u64()?;
        let n = r.u32()? as usize;
        let mut chunks = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            chunks.push(BlockId::from_digest(r.array()?));
        }
        r.finish()?;
        Ok(Self { total_len, chunks })
    }
}

/// Largest digest width for which the exact product is evaluated.
pub const EXACT_MAX_BITS: u32 = 20;

/// Expected number of colliding pairs, `n(n-1)/2 * 2^-bits`, evaluated in
/// log space. Not clamped; can exceed 1.
pub fn birthday_bound(n_items: f64, hash_bits: u32) -> f64 {
    if n_items <= 1.0 {
        return 0.0;
    }
    let log2 = n_items.log2() + (n_items - 1.0).log2() - 1.0 - hash_bits as f64;
    log2.exp2()
}

/// Probability that `n_items` uniformly random `hash_bits`-bit digests are
/// not all distinct.
///
/// For widths up to [`EXACT_MAX_BITS`] the exact product
/// `1 - prod_{i<n} (1 - i/2^bits)` is summed in log space; wider digests use
/// `1 - exp(-birthday_bound)`, which equals the birthday bound to within
/// rounding whenever it is small.
pub fn collision_probability(n_items: f64, hash_bits: u32) -> f64 {
    if n_items.is_nan() || n_items <= 1.0 {
        return 0.0;
    }
    if hash_bits == 0 {
        return 1.0;
    }
    if hash_bits <= EXACT_MAX_BITS {
        let outcomes = (1u64 << hash_bits) as f64;
        let n = n_items.floor();
        if n > outcomes {
            return 1.0;
        }
        let ln_distinct: f64 = (1..n as u64).map(|i| (-(i as f64) / outcomes).ln_1p()).sum();
        return -ln_distinct.exp_m1();
    }
    -(-birthday_bound(n_items, hash_bits)).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_block_is_idempotent() {
        let store = Store::memory();
        let d0 = store.put_block(b"").unwrap();
        let before = store.stats().unique_blocks;
        assert_eq!(store.put_block(b"").unwrap(), d0);
        assert_eq!(store.stats().unique_blocks, before);
    }

    #[test]
    fn zero_blocks_stored_once() {
        let store = Store::memory();
        let a = store.put_block(&[0u8; 4096]).unwrap();
        let b = store.put_block(&[0u8; 4096]).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.stats().unique_blocks, 1);
        assert_eq!(store.stats().logical_bytes, 8192);
        assert_eq!(store.stats().physical_bytes, 4096);
    }

    #[test]
    fn one_bit_changes_the_id() {
        let store = Store::memory();
        let b1 = vec![0x5au8; 100];
        let mut b2 = b1.clone();
        b2[37] ^= 0x10;
        assert_ne!(store.put_block(&b1).unwrap(), store.put_block(&b2).unwrap());
        assert_eq!(store.stats().unique_blocks, 2);
    }

    #[test]
    fn oversized_data_block_rejected() {
        let store = Store::memory();
        let err = store.put_block(&vec![1u8; DEFAULT_CHUNK_SIZE + 1]).unwrap_err();
        assert!(matches!(
            err,
            StoreError::TooLarge {
                limit: DEFAULT_CHUNK_SIZE,
                ..
            }
        ));
        assert_eq!(store.stats(), StoreStats::default());
    }

    #[test]
    fn unknown_id_is_not_found() {
        let store = Store::memory();
        let id = BlockId::of(b"never stored");
        assert!(matches!(store.get_block(&id), Err(StoreError::NotFound(x)) if x == id));
    }

    #[test]
    fn chunking_shapes() {
        let store = Store::memory();
        assert!(store.chunk_and_store(b"", 4096).unwrap().is_empty());

        let zeros = vec![0u8; 1 << 20];
        let ids = store.chunk_and_store(&zeros, 4096).unwrap();
        assert_eq!(ids.len(), 256);
        assert!(ids.iter().all(|id| *id == ids[0]));
        let s = store.stats();
        assert_eq!(s.data_blocks, 1);
        assert_eq!(s.logical_bytes, 1 << 20);
        assert_eq!(s.physical_bytes, 4096);

        assert!(matches!(store.chunk_and_store(b"x", 0), Err(StoreError::Config(_))));
    }

    #[test]
    fn fresh_store_counters_are_zero() {
        assert_eq!(Store::memory().stats(), StoreStats::default());
    }

    #[test]
    fn block_id_hex_roundtrip() {
        let id = BlockId::of(b"abc");
        assert_eq!(id.to_hex().parse::<BlockId>().unwrap(), id);
        assert!("abcd".parse::<BlockId>().is_err());
        assert!(id.to_hex().starts_with("ddaf35a1"));
    }

    #[test]
    fn config_text_roundtrip() {
        let cfg = StoreConfig {
            hash_bits: 512,
            chunk_size: 1024,
        };
        assert_eq!(cfg.encode(), "hash_bits=512\nchunk_size=1024\n");
        assert_eq!(StoreConfig::decode(&cfg.encode()).unwrap(), cfg);
        assert!(StoreConfig::decode("hash_bits=256\n").is_err());
        assert!(StoreConfig::decode("chunk_size=0\n").is_err());
    }

    #[test]
    fn collision_edge_values() {
        assert_eq!(collision_probability(0.0, 512), 0.0);
        assert_eq!(collision_probability(1.0, 512), 0.0);
        assert!((collision_probability(3.0, 4) - 0.1796875).abs() < 1e-15);
        assert_eq!(collision_probability(17.0, 4), 1.0);
        assert!(collision_probability(2f64.powi(140), 512) < 1e-70);
    }

    #[test]
    fn birthday_bound_matches_closed_form() {
        let n = 1000.0;
        let direct = n * (n - 1.0) / 2.0 / 2f64.powi(64);
        let rel = (birthday_bound(n, 64) - direct).abs() / direct;
        assert!(rel < 1e-12);
    }
}

//! Canonical directory listings.
//!
//! Layout: `0xCA 0x01`, prev flag (+64-byte digest), history flag (+64-byte
//! digest), u32 entry count, then per entry: u16 name length and name, kind
//! byte, 64-byte target (zeros for lwf), u16 inline length and bytes (lwf
//! only), 64-byte ACL digest. All integers big-endian. Entries are sorted
//! bytewise by name with no duplicates, so every directory state has exactly
//! one encoding.

use std::fmt;

use crate::castore::{BlockId, DIGEST_LEN};
use crate::codec::{put_bytes16, DecodeError, Reader};

pub const MANIFEST_MAGIC: u8 = 0xCA;
pub const MANIFEST_VERSION: u8 = 0x01;

/// Names with special meaning during path resolution.
pub const RESERVED_NAMES: [&[u8]; 3] = [b".", b"..", b"..."];

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name(Vec<u8>);

impl Name {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, String> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err("empty name".into());
        }
        if bytes.len() > u16::MAX as usize {
            return Err(format!("name of {} bytes is too long", bytes.len()));
        }
        if bytes.contains(&b'/') {
            return Err(format!("name {:?} contains '/'", String::from_utf8_lossy(&bytes)));
        }
        if RESERVED_NAMES.contains(&bytes.as_slice()) {
            return Err(format!("name {:?} is reserved", String::from_utf8_lossy(&bytes)));
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", String::from_utf8_lossy(&self.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryKind {
    File = 0,
    Dir = 1,
    /// Light-weight file: content inlined in the parent manifest.
    Lwf = 2,
    /// File that exists for the display engine to deposit events into.
    Receptor = 3,
}

impl EntryKind {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => EntryKind::File,
            1 => EntryKind::Dir,
            2 => EntryKind::Lwf,
            3 => EntryKind::Receptor,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            EntryKind::File => "file",
            EntryKind::Dir => "dir",
            EntryKind::Lwf => "lwf",
            EntryKind::Receptor => "receptor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: Name,
    pub kind: EntryKind,
    /// Chunk list for file/receptor, manifest for dir, zero for lwf.
    pub target: BlockId,
    pub inline: Option<Vec<u8>>,
    /// ACL block id; zero means no ACL (world-readable).
    pub perms: BlockId,
}

impl ManifestEntry {
    pub fn dir(name: Name, target: BlockId) -> Self {
        Self {
            name,
            kind: EntryKind::Dir,
            target,
            inline: None,
            perms: BlockId::ZERO,
        }
    }

    pub fn file(name: Name, list: BlockId) -> Self {
        Self {
            name,
            kind: EntryKind::File,
            target: list,
            inline: None,
            perms: BlockId::ZERO,
        }
    }

    pub fn lwf(name: Name, bytes: Vec<u8>) -> Self {
        Self {
            name,
            kind: EntryKind::Lwf,
            target: BlockId::ZERO,
            inline: Some(bytes),
            perms: BlockId::ZERO,
        }
    }

    pub fn receptor(name: Name, list: BlockId) -> Self {
        Self {
            kind: EntryKind::Receptor,
            ..Self::file(name, list)
        }
    }

    pub fn is_dir(&self) -> bool {
        self.kind == EntryKind::Dir
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    /// The `.` link: this directory's manifest just before the mutation
    /// that produced this one.
    pub prev: Option<BlockId>,
    /// The `...` link: manifest whose entries name every past version.
    pub history: Option<BlockId>,
}

impl Manifest {
    pub fn new(mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        entries.dedup_by(|later, earlier| later.name == earlier.name);
        Self {
            entries,
            prev: None,
            history: None,
        }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ManifestEntry> {
        self.entries
    }

    pub fn get(&self, name: &[u8]) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.name.as_bytes().cmp(name))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Inserts or replaces the entry with the same name.
    pub fn upsert(&mut self, entry: ManifestEntry) {
        match self.entries.binary_search_by(|e| e.name.cmp(&entry.name)) {
            Ok(i) => self.entries[i] = entry,
            Err(i) => self.entries.insert(i, entry),
        }
    }

    pub fn remove(&mut self, name: &[u8]) -> Option<ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.name.as_bytes().cmp(name))
            .ok()
            .map(|i| self.entries.remove(i))
    }

    pub fn set_entries(&mut self, entries: Vec<ManifestEntry>) {
        let Manifest { prev, history, .. } = *self;
        *self = Manifest::new(entries);
        self.prev = prev;
        self.history = history;
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 2 * (1 + DIGEST_LEN) + 4 + self.entries.len() * 160);
        out.push(MANIFEST_MAGIC);
        out.push(MANIFEST_VERSION);
        for link in [&self.prev, &self.history] {
            match link {
                Some(id) => {
                    out.push(1);
                    out.extend_from_slice(id.digest());
                }
                None => out.push(0),
            }
        }
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        for e in &self.entries {
            put_bytes16(&mut out, e.name.as_bytes());
            out.push(e.kind as u8);
            out.extend_from_slice(e.target.digest());
            if e.kind == EntryKind::Lwf {
                put_bytes16(&mut out, e.inline.as_deref().unwrap_or_default());
            }
            out.extend_from_slice(e.perms.digest());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.header(MANIFEST_MAGIC, MANIFEST_VERSION)?;
        let mut links = [None, None];
        for link in &mut links {
            match r.u8()? {
                0 => {}
                1 => *link = Some(BlockId::from_digest(r.array()?)),
                f => return Err(r.invalid(format!("link flag {f}"))),
            }
        }
        let count = r.u32()? as usize;
        let mut entries: Vec<ManifestEntry> = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = Name::new(r.bytes16()?).map_err(|e| r.invalid(e))?;
            if let Some(last) = entries.last() {
                if last.name >= name {
                    return Err(r.invalid(format!("entry {name} out of order")));
                }
            }
            let kind = EntryKind::from_byte(r.u8()?).ok_or_else(|| r.invalid("entry kind"))?;
            let target = BlockId::from_digest(r.array()?);
            let inline = if kind == EntryKind::Lwf {
                if !target.is_zero() {
                    return Err(r.invalid("lwf entry with a target"));
                }
                Some(r.bytes16()?.to_vec())
            } else {
                None
            };
            let perms = BlockId::from_digest(r.array()?);
            entries.push(ManifestEntry {
                name,
                kind,
                target,
                inline,
                perms,
            });
        }
        r.finish()?;
        Ok(Self {
            entries,
            prev: links[0],
            history: links[1],
        })
    }
}

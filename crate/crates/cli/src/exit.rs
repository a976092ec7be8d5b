//! Exit codes by error class.

use std::error::Error as StdError;
use std::fmt;

use cane_core::appdir::AppDirError;
use cane_core::castore::{BlockId, StoreError};
use cane_core::identity::{DenyReason, IdentityError};
use cane_core::merklefs::FsError;
use cane_core::netsim::SimError;
use cane_core::scenefs::SceneError;
use cane_core::DecodeError;

pub const OK: u8 = 0;
pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const NOT_FOUND: u8 = 3;
pub const CORRUPT: u8 = 4;
pub const DENIED: u8 = 5;
pub const SPEC: u8 = 6;

/// Bad arguments that clap could not catch.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StdError for Usage {}

/// Someone else moved the workspace root during this command.
#[derive(Debug)]
pub struct Conflict {
    pub expected: BlockId,
    pub found: BlockId,
    pub attempted: BlockId,
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "workspace root moved from {} to {}; new root {} was not recorded",
            self.expected.short(),
            self.found.short(),
            self.attempted
        )
    }
}

impl StdError for Conflict {}

/// A signature or hash check failed.
#[derive(Debug)]
pub struct Tampered(pub String);

impl fmt::Display for Tampered {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl StdError for Tampered {}

#[derive(Debug)]
pub struct Denied(pub DenyReason);

impl fmt::Display for Denied {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "access denied: {}", self.0)
    }
}

impl StdError for Denied {}

fn store(e: &StoreError) -> u8 {
    match e {
        StoreError::NotFound(_) => NOT_FOUND,
        StoreError::Corrupt { .. } | StoreError::Malformed { .. } => CORRUPT,
        _ => OTHER,
    }
}

fn fs(e: &FsError) -> u8 {
    match e {
        FsError::Store(s) => store(s),
        FsError::NotFound(_) | FsError::NoHistory(_) | FsError::UnknownStamp { .. } => NOT_FOUND,
        FsError::BadHistory { .. } | FsError::BrokenChain(_) => CORRUPT,
        FsError::Name { .. } => USAGE,
        FsError::Stamp { .. } | FsError::Type { .. } => OTHER,
    }
}

fn identity(e: &IdentityError) -> u8 {
    match e {
        IdentityError::Store(s) => store(s),
        IdentityError::Decode(_) => CORRUPT,
        IdentityError::BadKey(_) | IdentityError::Window { .. } => USAGE,
        IdentityError::MissingKey(_) => OTHER,
    }
}

fn appdir(e: &AppDirError) -> u8 {
    match e {
        AppDirError::Store(s) | AppDirError::Fetch { source: s, .. } => store(s),
        AppDirError::MissingDep(_) | AppDirError::MissingTree(_) | AppDirError::Platform { .. } => NOT_FOUND,
        AppDirError::Malformed { .. } => CORRUPT,
        AppDirError::Cycle(_) => SPEC,
    }
}

fn scene(e: &SceneError) -> u8 {
    match e {
        SceneError::Fs(f) => fs(f),
        SceneError::Attr { .. } | SceneError::Parse { .. } | SceneError::NoTarget { .. } => SPEC,
    }
}

fn classify(e: &(dyn StdError + 'static)) -> Option<u8> {
    if e.is::<Usage>() || e.is::<clap::Error>() {
        return Some(USAGE);
    }
    if e.is::<Conflict>() {
        return Some(OTHER);
    }
    if e.is::<Tampered>() {
        return Some(CORRUPT);
    }
    if e.is::<Denied>() {
        return Some(DENIED);
    }
    if e.is::<SimError>() {
        return Some(SPEC);
    }
    if e.is::<DecodeError>() {
        return Some(CORRUPT);
    }
    e.downcast_ref::<StoreError>()
        .map(store)
        .or_else(|| e.downcast_ref::<FsError>().map(fs))
        .or_else(|| e.downcast_ref::<IdentityError>().map(identity))
        .or_else(|| e.downcast_ref::<AppDirError>().map(appdir))
        .or_else(|| e.downcast_ref::<SceneError>().map(scene))
}

/// Exit code for an error: the first recognised cause in its chain.
pub fn code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify).unwrap_or(OTHER)
}

pub mod apps;
pub mod scene;
pub mod sim;
pub mod tree;
pub mod trust;

use anyhow::Result;
use cane_core::merklefs::{MerkleFs, Node, TreeHandle, VersionStamp};

use crate::exit::Usage;

/// The directory at `path`, as a tree of its own.
pub fn subtree(fs: &MerkleFs<'_>, tree: TreeHandle, path: &str) -> Result<TreeHandle> {
    match fs.resolve(tree, path)? {
        Node::Dir(id) => Ok(TreeHandle::new(id)),
        _ => Err(Usage(format!("{path:?} is not a directory")).into()),
    }
}

/// Microseconds from an integer or a version stamp (with or without `.seq`).
pub fn parse_time(s: &str) -> Result<i64, String> {
    if let Ok(n) = s.parse::<i64>() {
        return Ok(n);
    }
    s.parse::<VersionStamp>()
        .or_else(|_| format!("{s}.0").parse::<VersionStamp>())
        .map(|st| st.micros)
        .map_err(|_| format!("bad time {s:?}: want microseconds or YYYY-MM-DDTHH:MM:SS.ffffffZ"))
}

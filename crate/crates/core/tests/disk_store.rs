use std::path::Path;

use cane_core::castore::{BlockId, Store, StoreConfig, StoreError};
use proptest::prelude::*;

fn block_path(root: &Path, id: &BlockId) -> std::path::PathBuf {
    let hex = id.to_hex();
    root.join("blocks").join(&hex[..2]).join(hex)
}

fn bytes(len: usize, seed: u8) -> Vec<u8> {
    (0..len)
        .map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed) ^ (i >> 12) as u8)
        .collect()
}

#[test]
fn survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let data = bytes(10_000, 1);
    let id = {
        let store = Store::create(dir.path(), StoreConfig::default()).unwrap();
        let id = store.store_file(&data).unwrap();
        store.flush().unwrap();
        id
    };
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.read_file(&id).unwrap(), data);
    let stats = store.stats();
    assert_eq!(stats.data_blocks, 3);
    assert_eq!(stats.logical_bytes, stats.physical_bytes);
}

#[test]
fn flipped_bit_on_disk_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path(), StoreConfig::default()).unwrap();
    let data = bytes(9_000, 2);
    let id = store.store_file(&data).unwrap();
    let chunk = store.chunk_list(&id).unwrap().chunks[1];
    let path = block_path(dir.path(), &chunk);
    let mut raw = std::fs::read(&path).unwrap();
    raw[123] ^= 0x10;
    std::fs::write(&path, &raw).unwrap();
    match store.read_file(&id) {
        Err(StoreError::Corrupt { id: bad, actual }) => {
            assert_eq!(bad, chunk);
            assert_eq!(actual, BlockId::of(&raw));
        }
        other => panic!("{other:?}"),
    }
    std::fs::remove_file(&path).unwrap();
    assert!(matches!(store.read_file(&id), Err(StoreError::NotFound(missing)) if missing == chunk));
}

proptest! {
    #[test]
    fn files_round_trip_in_whole_chunks(len in 0usize..20_000, seed: u8) {
        let store = Store::memory();
        let data = bytes(len, seed);
        let id = store.store_file(&data).unwrap();
        let list = store.chunk_list(&id).unwrap();
        prop_assert_eq!(list.total_len, len as u64);
        prop_assert_eq!(list.chunks.len(), len.div_ceil(4096));
        for (i, c) in list.chunks.iter().enumerate() {
            let piece = &data[i * 4096..((i + 1) * 4096).min(len)];
            prop_assert_eq!(*c, BlockId::of(piece));
        }
        prop_assert_eq!(store.read_file(&id).unwrap(), data);
    }

    #[test]
    fn storing_twice_adds_nothing(len in 0usize..12_000, seed: u8) {
        let store = Store::memory();
        let data = bytes(len, seed);
        let a = store.store_file(&data).unwrap();
        let before = store.stats();
        let b = store.store_file(&data).unwrap();
        let after = store.stats();
        prop_assert_eq!(a, b);
        prop_assert_eq!(before.unique_blocks, after.unique_blocks);
        prop_assert_eq!(before.physical_bytes, after.physical_bytes);
    }
}

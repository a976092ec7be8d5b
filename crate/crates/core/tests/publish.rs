//! Publish a signed, access-controlled tree from one disk store and pick it
//! up from another.

use std::collections::BTreeMap;

use cane_core::appdir::{build_appdir, closure, materialize};
use cane_core::castore::{BlockKind, Store, StoreConfig};
use cane_core::identity::{check_access, generate_identity, sign_manifest, verify_manifest, Access, Acl, DenyReason, Mode, SignedManifest};
use cane_core::merklefs::{MerkleFs, TreeHandle, VersionStamp};

fn stamp(i: i64) -> VersionStamp {
    VersionStamp::new(1_121_350_997_000_000 + i, 1)
}

#[test]
fn signed_release_travels_between_stores() {
    let dir = tempfile::tempdir().unwrap();
    let publisher = Store::create(dir.path().join("pub"), StoreConfig::default()).unwrap();
    let fs = MerkleFs::new(&publisher);
    let author = generate_identity(Some(21));
    let reader = generate_identity(Some(22));

    let mut t = TreeHandle::new(fs.empty_root_id());
    t = fs.write_file(t, "bin/tool", &vec![7u8; 9000], stamp(1)).unwrap();
    t = fs.write_file(t, "README", b"read me", stamp(2)).unwrap();
    let acl = Acl {
        readers: vec![reader.public()],
        writers: vec![author.public()],
    }
    .store(&publisher)
    .unwrap();
    t = fs.set_perms(t, "bin/tool", acl, stamp(3)).unwrap();
    let signed = sign_manifest(&author, t.root).unwrap();
    let signed_id = publisher.put(&signed.encode(), BlockKind::Meta).unwrap();
    let app = build_appdir(&publisher, "tool", &BTreeMap::from([("any".to_string(), t)]), &[]).unwrap();
    publisher.flush().unwrap();

    let mirror = Store::create(dir.path().join("mirror"), StoreConfig::default()).unwrap();
    let log = materialize(&mirror, &publisher, app, "any").unwrap();
    assert_eq!(log.requested.len(), closure(&publisher, app, "any").unwrap().len());
    assert!(!mirror.contains(&signed_id), "signatures are not part of the closure");
    mirror.put(&publisher.get_block(&signed_id).unwrap(), BlockKind::Meta).unwrap();

    // everything the mirror needs to check and serve is now local
    let sm = SignedManifest::decode(&mirror.get_block(&signed_id).unwrap()).unwrap();
    assert!(verify_manifest(&sm));
    assert_eq!(sm.manifest, t.root);
    let mfs = MerkleFs::new(&mirror);
    assert_eq!(mfs.read_file(t, "bin/tool").unwrap(), vec![7u8; 9000]);
    let entry_acl = mfs.read_dir(t, "bin").unwrap().get(b"tool").unwrap().perms;
    let acl = Acl::load(&mirror, &entry_acl).unwrap();
    assert_eq!(check_access(&acl, &reader.public(), &[], None, Mode::Read, 0), Access::Allow);
    assert_eq!(
        check_access(&acl, &generate_identity(Some(23)).public(), &[], None, Mode::Read, 0),
        Access::Deny(DenyReason::NotListed)
    );

    // the history did not travel: only current content is in the closure
    assert!(mfs.resolve(t, ".").is_err());
    assert!(fs.resolve(t, ".").is_ok());
}

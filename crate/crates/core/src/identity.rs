//! Committee member identities and the signature scheme used for views and
//! bulletin-board submissions (Ed25519, strict verification).

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(String);

impl MemberId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// Conventional simulator naming: `m1`, `m2`, ...
    pub fn indexed(i: usize) -> Self {
        Self(format!("m{}", i + 1))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8; 32]) -> Option<Self> {
        VerifyingKey::from_bytes(bytes).ok().map(Self)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        self.0.verify_strict(msg, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.to_bytes()))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes: [u8; 32] = hex::decode(&s)
            .map_err(D::Error::custom)?
            .try_into()
            .map_err(|_| D::Error::custom("public key must be 32 bytes"))?;
        Self::from_bytes(&bytes).ok_or_else(|| D::Error::custom("invalid ed25519 public key"))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Self)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::encoding::to_b64(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        crate::encoding::from_b64(&s)
            .and_then(|b| Self::from_slice(&b))
            .ok_or_else(|| D::Error::custom("signature must be 64 base64-encoded bytes"))
    }
}

/// A member's signing key. Only committee-side code holds these.
#[derive(Clone)]
pub struct MemberKey {
    id: MemberId,
    signing: SigningKey,
}

impl MemberKey {
    /// Deterministic key derivation so that simulations replay bit-exactly.
    pub fn derive(id: MemberId, seed: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(b"postate/member-key/");
        h.update((seed.len() as u64).to_be_bytes());
        h.update(seed);
        h.update(id.as_str().as_bytes());
        let secret: [u8; 32] = h.finalize().into();
        Self { id, signing: SigningKey::from_bytes(&secret) }
    }

    pub fn id(&self) -> &MemberId {
        &self.id
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

impl fmt::Debug for MemberKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemberKey").field("id", &self.id).finish_non_exhaustive()
    }
}

/// The registered committee public keys, as known to the bulletin board and
/// to external clients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeKeys {
    members: BTreeMap<MemberId, PublicKey>,
}

impl CommitteeKeys {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and leaves the registry unchanged) on a duplicate id.
    pub fn insert(&mut self, id: MemberId, key: PublicKey) -> bool {
        if self.members.contains_key(&id) {
            return false;
        }
        self.members.insert(id, key);
        true
    }

    pub fn get(&self, id: &MemberId) -> Option<&PublicKey> {
        self.members.get(id)
    }

    pub fn contains(&self, id: &MemberId) -> bool {
        self.members.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MemberId, &PublicKey)> {
        self.members.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &MemberId> {
        self.members.keys()
    }

    /// True iff `signer` is registered and `sig` verifies under its key.
    pub fn verify(&self, signer: &MemberId, msg: &[u8], sig: &Signature) -> bool {
        self.members.get(signer).is_some_and(|pk| pk.verify(msg, sig))
    }
}

impl FromIterator<(MemberId, PublicKey)> for CommitteeKeys {
    fn from_iter<T: IntoIterator<Item = (MemberId, PublicKey)>>(iter: T) -> Self {
        let mut keys = Self::new();
        for (id, pk) in iter {
            keys.insert(id, pk);
        }
        keys
    }
}

//! Proofs of ledger state for external clients: assertions (witnesses bound
//! to a digest), signed views of a digest at a height, and wrapped proofs
//! that combine the two. Every `*ver` function is trapdoor-free.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accumulator::{verify_membership, AccumulatorError, AccumulatorParams, PrimeRepresentation, Witness};
use crate::encoding::{b64_bytes, hex_biguint, to_hex};
use crate::identity::{CommitteeKeys, MemberId, Signature};
use crate::ledger::{
    canonical_decode, canonical_encode, Agent, KVWrite, LedgerError, Version, COMMITTEE_PREFIX, POLICY_PREFIX,
};

/// Keys under this prefix hold transaction records.
pub const TRANSACTION_PREFIX: &[u8] = b"/tx/";

#[derive(Debug, Error)]
pub enum ProofError {
    #[error("fact is not accumulated in the digest at height {0}")]
    NotProvable(u64),
    #[error("key has no live version at height {0}")]
    Absent(u64),
    #[error("no snapshot at height {0}")]
    MissingSnapshot(u64),
    #[error("fact kind does not match its key prefix")]
    InconsistentFact,
    #[error("assertion and view disagree: {0}")]
    Mismatch(&'static str),
    #[error("no view published at or before board block {0}")]
    NoView(u64),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FactKind {
    Application,
    Transaction,
    Committee,
    Policy,
}

impl FactKind {
    pub fn of_key(key: &[u8]) -> Self {
        if key.starts_with(COMMITTEE_PREFIX) {
            Self::Committee
        } else if key.starts_with(POLICY_PREFIX) {
            Self::Policy
        } else if key.starts_with(TRANSACTION_PREFIX) {
            Self::Transaction
        } else {
            Self::Application
        }
    }
}

/// A versioned key/value fact about the ledger state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub kind: FactKind,
    #[serde(rename = "key_b64", with = "b64_bytes")]
    pub key: Vec<u8>,
    #[serde(rename = "value_b64", with = "b64_bytes")]
    pub value: Vec<u8>,
    pub version: Version,
}

impl Fact {
    pub fn new(key: Vec<u8>, value: Vec<u8>, version: Version) -> Self {
        Self { kind: FactKind::of_key(&key), key, value, version }
    }

    /// The live write a fact describes; deletes are not facts.
    pub fn from_write(w: &KVWrite) -> Option<Self> {
        (!w.is_delete).then(|| Self::new(w.key.clone(), w.value.clone(), w.version))
    }

    pub fn is_consistent(&self) -> bool {
        !self.key.is_empty() && self.kind == FactKind::of_key(&self.key)
    }

    /// The accumulated element for this fact.
    pub fn element(&self) -> Vec<u8> {
        canonical_encode(&KVWrite::put(self.key.clone(), self.value.clone(), self.version))
    }
}

/// Membership witness for a fact against the digest at `height`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub witness: Witness,
    pub height: u64,
}

impl Assertion {
    pub fn digest(&self) -> &BigUint {
        &self.witness.digest
    }
}

/// A member's signed claim that the digest at `height` is `digest`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    #[serde(rename = "z_hex", with = "hex_biguint")]
    pub digest: BigUint,
    pub height: u64,
    #[serde(rename = "sig_b64")]
    pub signature: Signature,
    pub signer: MemberId,
}

impl View {
    /// Signed bytes: `hex(z) || u64_be(height)`.
    pub fn message(digest: &BigUint, height: u64) -> Vec<u8> {
        let mut m = to_hex(digest).into_bytes();
        m.extend_from_slice(&height.to_be_bytes());
        m
    }

    pub fn sign(key: &crate::identity::MemberKey, digest: BigUint, height: u64) -> Self {
        let signature = key.sign(&Self::message(&digest, height));
        Self { digest, height, signature, signer: key.id().clone() }
    }

    pub fn signature_valid(&self, committee: &CommitteeKeys) -> bool {
        committee.verify(&self.signer, &Self::message(&self.digest, self.height), &self.signature)
    }
}

/// An assertion bound to the view it verifies against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrappedProof {
    pub assertion: Assertion,
    pub view: View,
    pub fact: Fact,
}

#[derive(Serialize, Deserialize)]
struct WireProof {
    fact: Fact,
    prime: PrimeRepresentation,
    #[serde(with = "hex_biguint")]
    witness_hex: BigUint,
    view: View,
}

impl Serialize for WrappedProof {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WireProof {
            fact: self.fact.clone(),
            prime: self.assertion.witness.subject.clone(),
            witness_hex: self.assertion.witness.value.clone(),
            view: self.view.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WrappedProof {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = WireProof::deserialize(d)?;
        Ok(Self {
            assertion: Assertion {
                witness: Witness { value: w.witness_hex, subject: w.prime, digest: w.view.digest.clone() },
                height: w.view.height,
            },
            view: w.view,
            fact: w.fact,
        })
    }
}

/// Assertion that `fact` is in the agent's digest at `height`.
pub fn pgen(fact: &Fact, agent: &Agent, height: u64) -> Result<Assertion, ProofError> {
    if !fact.is_consistent() {
        return Err(ProofError::InconsistentFact);
    }
    match agent.witness_at(&fact.element(), height) {
        Ok(witness) => Ok(Assertion { witness, height }),
        Err(LedgerError::MissingSnapshot(h)) => Err(ProofError::MissingSnapshot(h)),
        Err(LedgerError::Accumulator(AccumulatorError::NotAMember)) => Err(ProofError::NotProvable(height)),
        Err(e) => Err(e.into()),
    }
}

/// Trapdoor-free check of an assertion against digest `z`.
pub fn pver(params: &AccumulatorParams, fact: &Fact, assertion: &Assertion, z: &BigUint) -> bool {
    let w = &assertion.witness;
    &w.digest == z && fact.is_consistent() && verify_membership(params, z, &fact.element(), &w.subject, &w.value)
}

/// The agent's signed view of its digest at `height`.
pub fn vgen(agent: &Agent, height: u64) -> Result<View, ProofError> {
    let snapshot = agent.snapshot(height).ok_or(ProofError::MissingSnapshot(height))?;
    Ok(View::sign(agent.member_key(), snapshot.digest.clone(), height))
}

/// `view` claims digest `z` and carries a valid signature by a registered member.
pub fn vver(z: &BigUint, committee: &CommitteeKeys, view: &View) -> bool {
    &view.digest == z && view.signature_valid(committee)
}

pub fn wpgen(fact: &Fact, assertion: &Assertion, digest: &BigUint, view: &View) -> Result<WrappedProof, ProofError> {
    if assertion.digest() != digest || &view.digest != digest {
        return Err(ProofError::Mismatch("digest"));
    }
    if assertion.height != view.height {
        return Err(ProofError::Mismatch("height"));
    }
    Ok(WrappedProof { assertion: assertion.clone(), view: view.clone(), fact: fact.clone() })
}

/// External-client check: the proof is about `fact`, is wrapped around
/// exactly `view`, the view is signed by a registered member, and the
/// assertion verifies against the view's digest.
pub fn wpver(
    params: &AccumulatorParams,
    committee: &CommitteeKeys,
    fact: &Fact,
    wrapped: &WrappedProof,
    view: &View,
) -> bool {
    &wrapped.view == view
        && &wrapped.fact == fact
        && wrapped.assertion.height == view.height
        && view.signature_valid(committee)
        && pver(params, fact, &wrapped.assertion, &view.digest)
}

/// The version of `key` accumulated in the agent's digest at `view.height`.
pub fn find_latest_in_view(key: &[u8], agent: &Agent, view: &View) -> Result<Fact, ProofError> {
    if agent.snapshot(view.height).is_none() {
        return Err(ProofError::MissingSnapshot(view.height));
    }
    let element = agent.element_at(key, view.height).ok_or(ProofError::Absent(view.height))?;
    let write = canonical_decode(element)?;
    Ok(Fact::from_write(&write).expect("accumulated elements are never deletes"))
}

/// A view together with the board block `tau` at which it was published.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedView {
    pub tau: u64,
    pub view: View,
}

/// Index `j` with `tau(j) <= t < tau(j+1)`, the last bracket being open-ended.
/// `taus` must be nondecreasing.
pub fn select_bracket(t: u64, taus: &[u64]) -> Option<usize> {
    debug_assert!(taus.windows(2).all(|w| w[0] <= w[1]));
    taus.partition_point(|&tau| tau <= t).checked_sub(1)
}

/// Whether `fact` is current at board block `t`: it verifies against the
/// view bracketing `t`. `prove` supplies an assertion for a chosen view.
pub fn is_current(
    params: &AccumulatorParams,
    fact: &Fact,
    t: u64,
    timeline: &[TimedView],
    prove: impl FnOnce(&View) -> Option<Assertion>,
) -> Result<bool, ProofError> {
    let taus: Vec<u64> = timeline.iter().map(|tv| tv.tau).collect();
    let j = select_bracket(t, &taus).ok_or(ProofError::NoView(t))?;
    let view = &timeline[j].view;
    Ok(prove(view).is_some_and(|a| a.height == view.height && pver(params, fact, &a, &view.digest)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accumulator::setup;
    use crate::identity::MemberKey;
    use crate::ledger::tests::{committee, policy};
    use crate::ledger::{Block, LedgerState, Transaction};

    fn agent() -> (Agent, CommitteeKeys) {
        let keys = committee(4);
        let genesis = LedgerState::genesis(&keys, policy()).unwrap();
        let (params, trapdoor) = setup(b"proofs-test", 128).unwrap();
        let mut a =
            Agent::new(MemberKey::derive(MemberId::indexed(0), b"test"), b"chain", params, trapdoor, &genesis).unwrap();
        for h in 1..=8u64 {
            let mut writes = vec![];
            if h == 3 || h == 7 {
                writes.push(KVWrite::put(b"k".to_vec(), format!("v{h}").into_bytes(), Version::new(h, 0)));
            }
            writes.push(KVWrite::put(format!("other{h}").into_bytes(), b"x".to_vec(), Version::new(h, 0)));
            a.dgen(&Block { height: h, transactions: vec![Transaction { writes, valid: true }] }).unwrap();
        }
        (a, keys)
    }

    #[test]
    fn fact_kinds_follow_prefixes() {
        assert_eq!(FactKind::of_key(b"/committee/m1"), FactKind::Committee);
        assert_eq!(FactKind::of_key(b"/policy/k"), FactKind::Policy);
        assert_eq!(FactKind::of_key(b"/tx/1/0"), FactKind::Transaction);
        assert_eq!(FactKind::of_key(b"acct"), FactKind::Application);
        let mut f = Fact::new(b"/policy/k".to_vec(), b"2".to_vec(), Version::new(0, 0));
        assert!(f.is_consistent());
        f.kind = FactKind::Application;
        assert!(!f.is_consistent());
    }

    #[test]
    fn end_to_end_and_negative_paths() {
        let (a, keys) = agent();
        let params = a.params().clone();
        let fact = find_latest_in_view(b"k", &a, &vgen(&a, 8).unwrap()).unwrap();
        assert_eq!(fact.value, b"v7");

        let view = vgen(&a, 8).unwrap();
        let assertion = pgen(&fact, &a, 8).unwrap();
        assert!(pver(&params, &fact, &assertion, &view.digest));
        assert!(vver(&view.digest, &keys, &view));
        let wrapped = wpgen(&fact, &assertion, &view.digest, &view).unwrap();
        assert!(wpver(&params, &keys, &fact, &wrapped, &view));

        // wrong height's digest
        let z5 = &a.snapshot(5).unwrap().digest;
        assert!(!pver(&params, &fact, &assertion, z5));
        // view from another height
        assert!(matches!(wpgen(&fact, &assertion, &view.digest, &vgen(&a, 5).unwrap()), Err(ProofError::Mismatch(_))));
        // tampered value
        let mut tampered = fact.clone();
        tampered.value = b"v8".to_vec();
        assert!(!wpver(&params, &keys, &tampered, &WrappedProof { fact: tampered.clone(), ..wrapped.clone() }, &view));
        assert!(matches!(pgen(&tampered, &a, 8), Err(ProofError::NotProvable(8))));
        // unregistered signer
        let outsider = View::sign(&MemberKey::derive(MemberId::new("m9"), b"test"), view.digest.clone(), 8);
        assert!(!vver(&view.digest, &keys, &outsider));
    }

    #[test]
    fn latest_version_interval_lookup() {
        let (a, _) = agent();
        let at = |h| find_latest_in_view(b"k", &a, &vgen(&a, h).unwrap());
        assert!(matches!(at(2), Err(ProofError::Absent(2))));
        assert_eq!(at(3).unwrap().version, Version::new(3, 0));
        assert_eq!(at(5).unwrap().version, Version::new(3, 0));
        assert_eq!(at(7).unwrap().version, Version::new(7, 0));
        assert!(matches!(vgen(&a, 9), Err(ProofError::MissingSnapshot(9))));
    }

    #[test]
    fn wire_format_roundtrip() {
        let (a, _) = agent();
        let view = vgen(&a, 4).unwrap();
        let fact = find_latest_in_view(b"k", &a, &view).unwrap();
        let wrapped = wpgen(&fact, &pgen(&fact, &a, 4).unwrap(), &view.digest, &view).unwrap();
        let json = serde_json::to_value(&wrapped).unwrap();
        let obj = json.as_object().unwrap();
        let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        assert_eq!(keys, ["fact", "prime", "view", "witness_hex"]);
        assert!(obj["fact"].get("key_b64").is_some());
        assert!(obj["prime"].get("prime_hex").is_some());
        assert!(obj["view"].get("sig_b64").is_some());
        let back: WrappedProof = serde_json::from_value(json).unwrap();
        assert_eq!(back, wrapped);
    }

    #[test]
    fn bracket_selection() {
        let taus = [2, 5, 5, 9];
        assert_eq!(select_bracket(1, &taus), None);
        assert_eq!(select_bracket(2, &taus), Some(0));
        assert_eq!(select_bracket(4, &taus), Some(0));
        assert_eq!(select_bracket(5, &taus), Some(2));
        assert_eq!(select_bracket(100, &taus), Some(3));
        assert_eq!(select_bracket(0, &[]), None);
    }

    /// Anyone holding the trapdoor can root any digest by any prime, so a
    /// trapdoor-holder can prove arbitrary well-formed facts; verification
    /// alone cannot distinguish this from an honest proof.
    #[test]
    fn trapdoor_holder_can_prove_unaccumulated_facts() {
        let (params, trapdoor) = setup(b"proofs-test", 128).unwrap();
        let (a, _) = agent();
        let fake = Fact::new(b"k".to_vec(), b"forged".to_vec(), Version::new(8, 0));
        let rep = crate::accumulator::prime_gen(&fake.element(), Some(trapdoor.phi())).unwrap();
        let z = a.snapshot(8).unwrap().digest.clone();
        let value = trapdoor.root(&z, &rep.prime, &params.modulus).unwrap();
        let assertion = Assertion { witness: Witness { value, subject: rep, digest: z.clone() }, height: 8 };
        assert!(pver(&params, &fake, &assertion, &z));
    }
}

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{canonical_decode, canonical_encode, state_gen_detailed, Block, KVWrite, LedgerError, LedgerState};
use crate::accumulator::{
    AccumulatorError, AccumulatorParams, AccumulatorState, PrimeRepresentation, Trapdoor, Witness,
};
use crate::encoding::{hex_biguint, hex_bytes32, to_hex};
use crate::identity::{MemberId, MemberKey};

/// `(z_i, H_i)` recorded after processing block `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub height: u64,
    #[serde(rename = "z_hex", with = "hex_biguint")]
    pub digest: BigUint,
    #[serde(rename = "h_hex", with = "hex_bytes32")]
    pub rolling_hash: [u8; 32],
}

/// `H_0 = SHA-256(chain_id)`.
pub fn genesis_rolling_hash(chain_id: &[u8]) -> [u8; 32] {
    Sha256::digest(chain_id).into()
}

/// `H_i = SHA-256(H_{i-1} || hex(z_{i-1}))`.
pub fn rolling_hash_step(prev_hash: &[u8; 32], prev_digest: &BigUint) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev_hash);
    h.update(to_hex(prev_digest).as_bytes());
    h.finalize().into()
}

/// Element live for a key from `height` on; `None` once deleted.
type KeyEpoch = (u64, Option<Vec<u8>>);

/// A committee member's agent: mirrors the ledger, keeps the accumulator
/// digest of the current state, and remembers every height's `(z, H)`.
#[derive(Clone, Debug)]
pub struct Agent {
    key: MemberKey,
    accumulator: AccumulatorState,
    ledger: LedgerState,
    // key -> element currently accumulated for it
    live: BTreeMap<Vec<u8>, Vec<u8>>,
    key_history: BTreeMap<Vec<u8>, Vec<KeyEpoch>>,
    // every element ever accumulated, with its prime representation
    archive: BTreeMap<Vec<u8>, PrimeRepresentation>,
    history: Vec<Snapshot>,
}

impl Agent {
    /// Agent at height 0, with the genesis state already accumulated.
    pub fn new(
        key: MemberKey,
        chain_id: &[u8],
        params: AccumulatorParams,
        trapdoor: Trapdoor,
        genesis: &LedgerState,
    ) -> Result<Self, LedgerError> {
        let mut agent = Self {
            key,
            accumulator: AccumulatorState::new(params, Some(trapdoor)),
            ledger: genesis.clone(),
            live: BTreeMap::new(),
            key_history: BTreeMap::new(),
            archive: BTreeMap::new(),
            history: Vec::new(),
        };
        let writes: Vec<KVWrite> = genesis.live_writes().collect();
        let elements: Vec<Vec<u8>> = writes.iter().map(canonical_encode).collect();
        let reps = agent.accumulator.apply_batch(&[], &elements)?;
        for ((w, element), rep) in writes.iter().zip(elements).zip(reps) {
            agent.live.insert(w.key.clone(), element.clone());
            agent.record(&w.key, genesis.height(), Some(element.clone()));
            agent.archive.insert(element, rep);
        }
        agent.history.push(Snapshot {
            height: genesis.height(),
            digest: agent.accumulator.value().clone(),
            rolling_hash: genesis_rolling_hash(chain_id),
        });
        Ok(agent)
    }

    pub fn id(&self) -> &MemberId {
        self.key.id()
    }

    pub fn member_key(&self) -> &MemberKey {
        &self.key
    }

    pub fn params(&self) -> &AccumulatorParams {
        self.accumulator.params()
    }

    pub fn accumulator(&self) -> &AccumulatorState {
        &self.accumulator
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn height(&self) -> u64 {
        self.ledger.height()
    }

    pub fn current(&self) -> &Snapshot {
        self.history.last().expect("genesis snapshot always present")
    }

    pub fn snapshot(&self, height: u64) -> Option<&Snapshot> {
        let first = self.history.first()?.height;
        self.history.get(height.checked_sub(first)? as usize)
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.history
    }

    pub fn representation(&self, element: &[u8]) -> Option<&PrimeRepresentation> {
        self.archive.get(element)
    }

    /// Digest generation for the next block: each applied write replaces the
    /// key's accumulated element (deletes only remove it), then the rolling
    /// hash advances once and a snapshot is stored.
    pub fn dgen(&mut self, block: &Block) -> Result<(), LedgerError> {
        if block.height != self.height() + 1 {
            return Err(LedgerError::HeightMismatch { current: self.height(), got: block.height });
        }
        let (next, applied) = state_gen_detailed(&block.transactions, &self.ledger);
        // Net effect of the block: an element added and then replaced within
        // the block is never accumulated.
        let mut deletes = Vec::new();
        let mut adds: Vec<Vec<u8>> = Vec::new();
        for (tx, ok) in block.transactions.iter().zip(applied) {
            if !ok {
                continue;
            }
            for w in &tx.writes {
                if let Some(old) = self.live.remove(&w.key) {
                    match adds.iter().position(|e| e == &old) {
                        Some(pos) => {
                            adds.remove(pos);
                        }
                        None => deletes.push(old),
                    }
                    self.record(&w.key, block.height, None);
                } else if w.is_delete {
                    log::warn!(
                        "{}: delete of never-accumulated key {:?} at height {}",
                        self.id(),
                        String::from_utf8_lossy(&w.key),
                        block.height
                    );
                }
                if !w.is_delete {
                    let element = canonical_encode(w);
                    self.live.insert(w.key.clone(), element.clone());
                    self.record(&w.key, block.height, Some(element.clone()));
                    adds.push(element);
                }
            }
        }
        let reps = self.accumulator.apply_batch(&deletes, &adds)?;
        for (element, rep) in adds.into_iter().zip(reps) {
            self.archive.insert(element, rep);
        }
        let prev = self.current();
        let rolling_hash = rolling_hash_step(&prev.rolling_hash, &prev.digest);
        self.history.push(Snapshot { height: block.height, digest: self.accumulator.value().clone(), rolling_hash });
        self.ledger = next;
        Ok(())
    }

    fn record(&mut self, key: &[u8], height: u64, element: Option<Vec<u8>>) {
        let entries = self.key_history.entry(key.to_vec()).or_default();
        match entries.last_mut() {
            Some(last) if last.0 == height => last.1 = element,
            _ => entries.push((height, element)),
        }
    }

    /// The element accumulated for `key` in the digest at `height`.
    pub fn element_at(&self, key: &[u8], height: u64) -> Option<&[u8]> {
        if height > self.height() {
            return None;
        }
        let entries = self.key_history.get(key)?;
        let idx = entries.partition_point(|(h, _)| *h <= height);
        entries.get(idx.checked_sub(1)?)?.1.as_deref()
    }

    /// Witness for `element` against the digest at `height`, using the
    /// trapdoor: `z_h^(x^-1 mod phi)`.
    pub fn witness_at(&self, element: &[u8], height: u64) -> Result<Witness, LedgerError> {
        let snapshot = self.snapshot(height).ok_or(LedgerError::MissingSnapshot(height))?;
        let write = canonical_decode(element)?;
        if self.element_at(&write.key, height) != Some(element) {
            return Err(AccumulatorError::NotAMember.into());
        }
        let rep = self.archive.get(element).ok_or(AccumulatorError::NotAMember)?;
        let trapdoor = self.accumulator.trapdoor().ok_or(AccumulatorError::MissingTrapdoor)?;
        Ok(Witness {
            value: trapdoor.root(&snapshot.digest, &rep.prime, &self.params().modulus)?,
            subject: rep.clone(),
            digest: snapshot.digest.clone(),
        })
    }
}

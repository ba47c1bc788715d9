//! Simulated permissioned ledger and the committee agent that digests it.
//!
//! A ledger state is `(app_state, committee, policy)` at some height. The
//! committee and policy are themselves stored in `app_state` under the
//! reserved prefixes [`COMMITTEE_PREFIX`] and [`POLICY_PREFIX`], so every
//! part of the state is accumulated and provable the same way.

mod agent;
mod encode;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{genesis_rolling_hash, rolling_hash_step, Agent, Snapshot};
pub use encode::{canonical_decode, canonical_encode};
pub use io::{read_blocks, read_snapshots, write_blocks, write_snapshots};

use crate::accumulator::AccumulatorError;
use crate::encoding::b64_bytes;
use crate::identity::{CommitteeKeys, MemberId};

pub const COMMITTEE_PREFIX: &[u8] = b"/committee/";
pub const POLICY_PREFIX: &[u8] = b"/policy/";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("block height {got} does not follow height {current}")]
    HeightMismatch { current: u64, got: u64 },
    #[error("committee must be non-empty")]
    EmptyCommittee,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("malformed encoding: {0}")]
    Malformed(String),
    #[error("no snapshot at height {0}")]
    MissingSnapshot(u64),
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position of a write in the ledger.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub block_height: u64,
    pub tx_index: u32,
}

impl Version {
    pub const fn new(block_height: u64, tx_index: u32) -> Self {
        Self { block_height, tx_index }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.block_height, self.tx_index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KVWrite {
    #[serde(rename = "key_b64", with = "b64_bytes")]
    pub key: Vec<u8>,
    #[serde(rename = "value_b64", with = "b64_bytes")]
    pub value: Vec<u8>,
    pub is_delete: bool,
    pub version: Version,
}

impl KVWrite {
    pub fn put(key: Vec<u8>, value: Vec<u8>, version: Version) -> Self {
        Self { key, value, is_delete: false, version }
    }

    pub fn delete(key: Vec<u8>, version: Version) -> Self {
        Self { key, value: Vec::new(), is_delete: true, version }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.key.is_empty() && (!self.is_delete || self.value.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub writes: Vec<KVWrite>,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub transactions: Vec<Transaction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PublishStrategy {
    All,
    RoundRobin,
    RandomSubset,
}

impl PublishStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::All => "ALL",
            Self::RoundRobin => "ROUND_ROBIN",
            Self::RandomSubset => "RANDOM_SUBSET",
        }
    }
}

impl FromStr for PublishStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ALL" => Ok(Self::All),
            "ROUND_ROBIN" => Ok(Self::RoundRobin),
            "RANDOM_SUBSET" => Ok(Self::RandomSubset),
            _ => Err(format!("unknown publish strategy {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub failure_threshold: u32,
    pub round_interval: u32,
    pub publish_strategy: PublishStrategy,
    pub subcommittee_size: u32,
}

impl Policy {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.round_interval == 0 {
            return Err(LedgerError::InvalidPolicy("round interval must be at least 1".into()));
        }
        if self.subcommittee_size < self.failure_threshold + 1 {
            return Err(LedgerError::InvalidPolicy(format!(
                "subcommittee size {} is below f+1 = {}",
                self.subcommittee_size,
                self.failure_threshold + 1
            )));
        }
        Ok(())
    }

    fn entries(&self) -> [(&'static str, String); 4] {
        [
            ("failure_threshold", self.failure_threshold.to_string()),
            ("round_interval", self.round_interval.to_string()),
            ("publish_strategy", self.publish_strategy.as_str().to_string()),
            ("subcommittee_size", self.subcommittee_size.to_string()),
        ]
    }

    fn set(&mut self, field: &[u8], value: &[u8]) -> bool {
        let Ok(value) = std::str::from_utf8(value) else { return false };
        let num = || value.parse::<u32>().ok();
        match field {
            b"failure_threshold" => num().map(|v| self.failure_threshold = v).is_some(),
            b"round_interval" => num().map(|v| self.round_interval = v).is_some(),
            b"subcommittee_size" => num().map(|v| self.subcommittee_size = v).is_some(),
            b"publish_strategy" => value.parse().map(|s| self.publish_strategy = s).is_ok(),
            _ => false,
        }
    }
}

pub fn committee_key(id: &MemberId) -> Vec<u8> {
    [COMMITTEE_PREFIX, id.as_str().as_bytes()].concat()
}

pub fn policy_key(field: &str) -> Vec<u8> {
    [POLICY_PREFIX, field.as_bytes()].concat()
}

/// `S_i = (A_i, M_i, P_i)` at height `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerState {
    app_state: BTreeMap<Vec<u8>, (Vec<u8>, Version)>,
    committee: BTreeSet<MemberId>,
    policy: Policy,
    height: u64,
}

impl LedgerState {
    /// `S_0`: committee entries (value = hex public key) and policy entries
    /// at version `0:0`.
    pub fn genesis(committee: &CommitteeKeys, policy: Policy) -> Result<Self, LedgerError> {
        let members: BTreeSet<MemberId> = committee.ids().cloned().collect();
        check_membership_invariants(&members, &policy)?;
        let mut app_state = BTreeMap::new();
        for id in &members {
            let pk = committee.get(id).expect("id from registry");
            app_state.insert(committee_key(id), (hex::encode(pk.to_bytes()).into_bytes(), Version::default()));
        }
        for (field, value) in policy.entries() {
            app_state.insert(policy_key(field), (value.into_bytes(), Version::default()));
        }
        Ok(Self { app_state, committee: members, policy, height: 0 })
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn committee(&self) -> &BTreeSet<MemberId> {
        &self.committee
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn app_state(&self) -> &BTreeMap<Vec<u8>, (Vec<u8>, Version)> {
        &self.app_state
    }

    pub fn get(&self, key: &[u8]) -> Option<&(Vec<u8>, Version)> {
        self.app_state.get(key)
    }

    /// The write that produced each live entry.
    pub fn live_writes(&self) -> impl Iterator<Item = KVWrite> + '_ {
        self.app_state.iter().map(|(k, (v, version))| KVWrite::put(k.clone(), v.clone(), *version))
    }

    /// Apply one transaction atomically. Returns false (state untouched) if
    /// the transaction is flagged invalid, malformed, or would break the
    /// committee/policy invariants.
    fn apply(&mut self, tx: &Transaction, height: u64, tx_index: u32) -> bool {
        if !tx.valid {
            return false;
        }
        let expected = Version::new(height, tx_index);
        let mut keys = BTreeSet::new();
        for w in &tx.writes {
            if !w.is_well_formed() || w.version != expected || !keys.insert(w.key.as_slice()) {
                return false;
            }
        }

        let mut committee = self.committee.clone();
        let mut policy = self.policy;
        for w in &tx.writes {
            if let Some(id) = w.key.strip_prefix(COMMITTEE_PREFIX) {
                let Ok(id) = std::str::from_utf8(id) else { return false };
                if id.is_empty() {
                    return false;
                }
                if w.is_delete {
                    committee.remove(&MemberId::new(id));
                } else {
                    committee.insert(MemberId::new(id));
                }
            } else if let Some(field) = w.key.strip_prefix(POLICY_PREFIX) {
                if w.is_delete || !policy.set(field, &w.value) {
                    return false;
                }
            }
        }
        if check_membership_invariants(&committee, &policy).is_err() {
            return false;
        }

        for w in &tx.writes {
            if w.is_delete {
                self.app_state.remove(&w.key);
            } else {
                self.app_state.insert(w.key.clone(), (w.value.clone(), w.version));
            }
        }
        self.committee = committee;
        self.policy = policy;
        true
    }
}

fn check_membership_invariants(committee: &BTreeSet<MemberId>, policy: &Policy) -> Result<(), LedgerError> {
    if committee.is_empty() {
        return Err(LedgerError::EmptyCommittee);
    }
    policy.validate()?;
    if policy.subcommittee_size as usize > committee.len() {
        return Err(LedgerError::InvalidPolicy(format!(
            "subcommittee size {} exceeds committee size {}",
            policy.subcommittee_size,
            committee.len()
        )));
    }
    Ok(())
}

/// StateGen plus the per-transaction applied flags.
pub fn state_gen_detailed(transactions: &[Transaction], prev: &LedgerState) -> (LedgerState, Vec<bool>) {
    let mut next = prev.clone();
    next.height = prev.height + 1;
    let applied = transactions.iter().enumerate().map(|(j, tx)| next.apply(tx, next.height, j as u32)).collect();
    (next, applied)
}

/// `StateGen(T_i, S_{i-1})`: apply the valid transactions of the next block
/// in order. Malformed transactions are skipped.
pub fn state_gen(transactions: &[Transaction], prev: &LedgerState) -> LedgerState {
    state_gen_detailed(transactions, prev).0
}

/// `StateVer(T_i, S_{i-1}, S_i)`.
pub fn state_ver(transactions: &[Transaction], prev: &LedgerState, next: &LedgerState) -> bool {
    state_gen(transactions, prev) == *next
}

/// A ledger is valid iff every recorded transition verifies. `states[0]` is
/// the genesis state and `states[i]` follows `blocks[i - 1]`.
pub fn is_valid_ledger(blocks: &[Block], states: &[LedgerState]) -> bool {
    states.len() == blocks.len() + 1
        && blocks
            .iter()
            .zip(states.windows(2))
            .all(|(b, pair)| b.height == pair[1].height && state_ver(&b.transactions, &pair[0], &pair[1]))
}

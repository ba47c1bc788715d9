#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use postate::accumulator::{from_safe_primes, setup, AccumulatorParams, Trapdoor};
use postate::identity::{CommitteeKeys, MemberId, MemberKey};
use postate::ledger::{
    state_ver, Agent, Block, KVWrite, LedgerState, Policy, PublishStrategy, Snapshot, Transaction, Version,
};
use postate::proofs::{find_latest_in_view, pgen, pver, vgen, vver, wpgen, wpver, Fact};

pub const CHAIN_ID: &[u8] = b"test-chain";

/// `p = 23, q = 47, N = 1081, g = 4`.
pub fn toy() -> (AccumulatorParams, Trapdoor) {
    from_safe_primes(&BigUint::from(23u32), &BigUint::from(47u32), &BigUint::from(4u32)).unwrap()
}

/// Primes below 32 that are invertible modulo phi(1081) = 1012 = 4 * 11 * 23.
pub const TOY_PRIMES: [u32; 8] = [3, 5, 7, 13, 17, 19, 29, 31];

/// 128-bit parameters shared by every property test in a binary.
pub fn small() -> &'static (AccumulatorParams, Trapdoor) {
    static PARAMS: OnceLock<(AccumulatorParams, Trapdoor)> = OnceLock::new();
    PARAMS.get_or_init(|| setup(b"property-tests", 128).unwrap())
}

pub fn committee(n: usize) -> (Vec<MemberKey>, CommitteeKeys) {
    let keys: Vec<MemberKey> = (0..n).map(|i| MemberKey::derive(MemberId::indexed(i), b"tests")).collect();
    let registry = keys.iter().map(|k| (k.id().clone(), k.public())).collect();
    (keys, registry)
}

pub fn policy() -> Policy {
    Policy { failure_threshold: 1, round_interval: 2, publish_strategy: PublishStrategy::All, subcommittee_size: 2 }
}

pub fn genesis(registry: &CommitteeKeys) -> LedgerState {
    LedgerState::genesis(registry, policy()).unwrap()
}

/// One agent per member over the same genesis state.
pub fn agents(n: usize, params: &(AccumulatorParams, Trapdoor)) -> (Vec<Agent>, CommitteeKeys) {
    let (keys, registry) = committee(n);
    let g = genesis(&registry);
    let agents =
        keys.into_iter().map(|k| Agent::new(k, CHAIN_ID, params.0.clone(), params.1.clone(), &g).unwrap()).collect();
    (agents, registry)
}

pub fn key_name(i: u32) -> Vec<u8> {
    format!("k{i}").into_bytes()
}

/// A block of zero to four transactions over `key_space` keys. Some
/// transactions are flagged invalid or are malformed (empty key, duplicate
/// key, wrong version) and must be skipped.
pub fn random_block(rng: &mut impl Rng, height: u64, key_space: u32) -> Block {
    let transactions = (0..rng.gen_range(0..=4u32))
        .map(|j| {
            let mut keys: Vec<u32> = (0..key_space).collect();
            keys.shuffle(rng);
            let mut writes: Vec<KVWrite> = keys[..rng.gen_range(1..=3usize.min(key_space as usize))]
                .iter()
                .map(|&k| {
                    let version = Version::new(height, j);
                    if rng.gen_bool(0.15) {
                        KVWrite::delete(key_name(k), version)
                    } else {
                        let len = rng.gen_range(0..8);
                        KVWrite::put(key_name(k), (0..len).map(|_| rng.gen()).collect(), version)
                    }
                })
                .collect();
            match rng.gen_range(0..100) {
                0..=2 => writes[0].key.clear(),
                3..=5 => writes.push(writes[0].clone()),
                6..=8 => writes[0].version.tx_index += 1,
                _ => {}
            }
            Transaction { writes, valid: rng.gen_bool(0.9) }
        })
        .collect();
    Block { height, transactions }
}

pub fn random_schedule(seed: u64, blocks: u64, key_space: u32) -> Vec<Block> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (1..=blocks).map(|h| random_block(&mut rng, h, key_space)).collect()
}

pub type Table = HashMap<Vec<u8>, (Vec<u8>, u64, u32)>;

pub fn table_of(state: &LedgerState) -> Table {
    state.app_state().iter().map(|(k, (v, ver))| (k.clone(), (v.clone(), ver.block_height, ver.tx_index))).collect()
}

/// Independent replay: a transaction applies iff it is flagged valid and
/// every write has a non-empty key, an empty value when deleting, the
/// version `(height, tx index)`, and a key not repeated within it. Returns
/// the table after each block.
pub fn replay_oracle(initial: &Table, blocks: &[Block]) -> Vec<Table> {
    let mut table = initial.clone();
    let mut out = Vec::new();
    for block in blocks {
        for (j, tx) in block.transactions.iter().enumerate() {
            let mut seen = HashSet::new();
            let ok = tx.valid
                && tx.writes.iter().all(|w| {
                    !w.key.is_empty()
                        && (!w.is_delete || w.value.is_empty())
                        && (w.version.block_height, w.version.tx_index) == (block.height, j as u32)
                        && seen.insert(w.key.clone())
                });
            if !ok {
                continue;
            }
            for w in &tx.writes {
                if w.is_delete {
                    table.remove(&w.key);
                } else {
                    table.insert(w.key.clone(), (w.value.clone(), block.height, j as u32));
                }
            }
        }
        out.push(table.clone());
    }
    out
}

/// `H_0 = SHA-256(chain id)`, `H_i = SHA-256(H_{i-1} || lowercase hex of z_{i-1})`.
pub fn rolling_hash_oracle(chain_id: &[u8], snapshots: &[Snapshot]) -> Vec<[u8; 32]> {
    let mut out: Vec<[u8; 32]> = vec![Sha256::digest(chain_id).into()];
    for s in &snapshots[..snapshots.len() - 1] {
        let mut h = Sha256::new();
        h.update(out.last().unwrap());
        h.update(format!("{:x}", s.digest).as_bytes());
        out.push(h.finalize().into());
    }
    out
}

/// Byte encoding of a live entry, written independently of the library.
pub fn encode_oracle(key: &[u8], value: &[u8], height: u64, tx: u32, is_delete: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((key.len() as u32).to_be_bytes());
    out.extend(key);
    out.extend((value.len() as u32).to_be_bytes());
    out.extend(value);
    out.extend(height.to_be_bytes());
    out.extend(tx.to_be_bytes());
    out.push(u8::from(is_delete));
    out
}

/// `g^(product of primes) mod N`.
pub fn accumulate_oracle(params: &AccumulatorParams, primes: &[&BigUint]) -> BigUint {
    let product: BigUint = primes.iter().copied().product();
    params.generator.modpow(&product, &params.modulus)
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IdentityCounts {
    pub transitions: usize,
    pub assertions: usize,
    pub views: usize,
    pub wrapped: usize,
}

/// Runs one random schedule through an agent and checks, on honestly
/// generated data: every ledger transition re-verifies; every height's view
/// verifies against its digest; and for up to three live keys at two
/// sampled heights, the assertion verifies and the wrapped proof verifies
/// against its view.
pub fn check_identities(
    seed: u64,
    blocks: u64,
    params: &(AccumulatorParams, Trapdoor),
) -> Result<IdentityCounts, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut agents, registry) = agents(2, params);
    let agent = &mut agents[0];
    let schedule = random_schedule(seed, blocks, 6);
    let mut keys: Vec<Vec<u8>> = agent.ledger().app_state().keys().cloned().collect();
    keys.extend(schedule.iter().flat_map(|b| &b.transactions).flat_map(|t| &t.writes).map(|w| w.key.clone()));
    keys.sort();
    keys.dedup();
    let mut counts = IdentityCounts::default();
    for block in &schedule {
        let prev = agent.ledger().clone();
        agent.dgen(block).map_err(|e| e.to_string())?;
        if !state_ver(&block.transactions, &prev, agent.ledger()) {
            return Err(format!("state transition to height {} does not verify", block.height));
        }
        counts.transitions += 1;
    }
    for h in 0..=agent.height() {
        let view = vgen(agent, h).map_err(|e| e.to_string())?;
        if !vver(&agent.snapshot(h).unwrap().digest, &registry, &view) {
            return Err(format!("view at height {h} does not verify"));
        }
        counts.views += 1;
    }
    for _ in 0..2 {
        let h = rng.gen_range(0..=agent.height());
        let view = vgen(agent, h).map_err(|e| e.to_string())?;
        let z = agent.snapshot(h).unwrap().digest.clone();
        keys.shuffle(&mut rng);
        let live: Vec<Fact> = keys.iter().filter_map(|k| find_latest_in_view(k, agent, &view).ok()).take(3).collect();
        for fact in live {
            let assertion = pgen(&fact, agent, h).map_err(|e| e.to_string())?;
            if !pver(agent.params(), &fact, &assertion, &z) {
                return Err(format!("assertion for {:?} at height {h} does not verify", fact.key));
            }
            counts.assertions += 1;
            let wrapped = wpgen(&fact, &assertion, &z, &view).map_err(|e| e.to_string())?;
            if !wpver(agent.params(), &registry, &fact, &wrapped, &view) {
                return Err(format!("wrapped proof for {:?} at height {h} does not verify", fact.key));
            }
            counts.wrapped += 1;
        }
    }
    Ok(counts)
}

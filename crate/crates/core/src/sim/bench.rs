use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, SimError};
use crate::accumulator::setup;
use crate::identity::{CommitteeKeys, MemberId, MemberKey};
use crate::ledger::{Agent, Block, KVWrite, LedgerState, Policy, PublishStrategy, Transaction, Version};
use crate::proofs::{find_latest_in_view, pgen, vgen, wpgen, wpver, WrappedProof};

/// Reference throughput of a Fabric deployment running the Smallbank
/// workload, and its reported external query latency. Context only.
pub const REFERENCE_BPS: f64 = 27.8;
pub const REFERENCE_TPS: f64 = 278.4;
pub const REFERENCE_QUERY_MS: f64 = 231.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub modulus_bits: u32,
    /// Keys accumulated before timing starts.
    pub prefill_keys: u32,
    pub blocks: u64,
    pub writes_per_block: u32,
    pub queries: u32,
    pub seed: u64,
}

impl BenchConfig {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self {
                modulus_bits: 2048,
                prefill_keys: 10_000,
                blocks: 30,
                writes_per_block: 10,
                queries: 20,
                seed: 1,
            }),
            "smoke" => Some(Self {
                modulus_bits: 512,
                prefill_keys: 500,
                blocks: 10,
                writes_per_block: 10,
                queries: 5,
                seed: 1,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub setup_secs: f64,
    pub prefill_secs: f64,
    pub blocks_per_sec: f64,
    pub tx_per_sec: f64,
    pub query_ms_mean: f64,
    pub query_ms_max: f64,
    pub proof_bytes: usize,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        out += &format!(
            "modulus {} bits, {} keys accumulated, {} writes/block, {} blocks, {} queries\n",
            c.modulus_bits, c.prefill_keys, c.writes_per_block, c.blocks, c.queries
        );
        out += &format!("setup {:.2} s, prefill {:.2} s\n", self.setup_secs, self.prefill_secs);
        out += &format!("{:<26} {:>12} {:>12}\n", "metric", "measured", "reference");
        out += &format!("{:<26} {:>12.1} {:>12.1}\n", "agent blocks/s", self.blocks_per_sec, REFERENCE_BPS);
        out += &format!("{:<26} {:>12.1} {:>12.1}\n", "agent tx/s", self.tx_per_sec, REFERENCE_TPS);
        out +=
            &format!("{:<26} {:>12.1} {:>12.1}\n", "query latency mean (ms)", self.query_ms_mean, REFERENCE_QUERY_MS);
        out += &format!("{:<26} {:>12.1} {:>12}\n", "query latency max (ms)", self.query_ms_max, "-");
        out += &format!("{:<26} {:>12} {:>12}\n", "proof size (bytes)", self.proof_bytes, "-");
        out += "reference: Fabric, Smallbank workload, different hardware; not comparable in absolute terms\n";
        out
    }
}

/// Single-agent throughput on `writes_per_block` single-write transactions
/// per block, then end-to-end query latency: view, proof generation,
/// serialization round trip and trapdoor-free verification.
pub fn bench(config: &BenchConfig) -> Result<BenchReport, SimError> {
    let mut rng = ChaCha20Rng::from_seed(derive_seed(config.seed, "bench", 0));
    let key = MemberKey::derive(MemberId::indexed(0), &config.seed.to_be_bytes());
    let committee: CommitteeKeys = [(key.id().clone(), key.public())].into_iter().collect();
    let policy = Policy {
        failure_threshold: 0,
        round_interval: 1,
        publish_strategy: PublishStrategy::All,
        subcommittee_size: 1,
    };
    let genesis = LedgerState::genesis(&committee, policy)?;

    let start = Instant::now();
    let (params, trapdoor) = setup(&config.seed.to_be_bytes(), config.modulus_bits)?;
    let setup_secs = start.elapsed().as_secs_f64();
    let mut agent = Agent::new(key, b"postate-bench", params.clone(), trapdoor, &genesis)?;

    let key_name = |i: u32| format!("acct{i:06}").into_bytes();
    let start = Instant::now();
    let prefill = Block {
        height: 1,
        transactions: (0..config.prefill_keys)
            .map(|i| Transaction {
                writes: vec![KVWrite::put(key_name(i), b"100".to_vec(), Version::new(1, i))],
                valid: true,
            })
            .collect(),
    };
    agent.dgen(&prefill)?;
    let prefill_secs = start.elapsed().as_secs_f64();

    let space = config.prefill_keys.max(1);
    let blocks: Vec<Block> = (0..config.blocks)
        .map(|b| {
            let height = b + 2;
            Block {
                height,
                transactions: (0..config.writes_per_block)
                    .map(|t| {
                        let k = key_name(rng.gen_range(0..space));
                        let v = rng.gen_range(0..1_000_000u32).to_string().into_bytes();
                        Transaction { writes: vec![KVWrite::put(k, v, Version::new(height, t))], valid: true }
                    })
                    .collect(),
            }
        })
        .collect();
    let start = Instant::now();
    for block in &blocks {
        agent.dgen(block)?;
    }
    let elapsed = start.elapsed().as_secs_f64().max(f64::EPSILON);
    let blocks_per_sec = config.blocks as f64 / elapsed;

    let mut latencies = Vec::new();
    let mut proof_bytes = 0;
    let height = agent.height();
    for _ in 0..config.queries {
        let k = key_name(rng.gen_range(0..space));
        let start = Instant::now();
        let view = vgen(&agent, height)?;
        let fact = find_latest_in_view(&k, &agent, &view)?;
        let assertion = pgen(&fact, &agent, height)?;
        let wire = serde_json::to_string(&wpgen(&fact, &assertion, &view.digest, &view)?).expect("proof serializes");
        let received: WrappedProof = serde_json::from_str(&wire).expect("proof parses");
        let ok = wpver(&params, &committee, &received.fact, &received, &view);
        latencies.push(start.elapsed().as_secs_f64() * 1e3);
        proof_bytes = wire.len();
        assert!(ok, "honest proof failed to verify");
    }
    let query_ms_mean = latencies.iter().sum::<f64>() / latencies.len().max(1) as f64;
    let query_ms_max = latencies.iter().copied().fold(0.0, f64::max);

    Ok(BenchReport {
        config: config.clone(),
        setup_secs,
        prefill_secs,
        blocks_per_sec,
        tx_per_sec: blocks_per_sec * f64::from(config.writes_per_block),
        query_ms_mean,
        query_ms_max,
        proof_bytes,
    })
}

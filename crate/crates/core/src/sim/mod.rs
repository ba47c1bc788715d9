//! Deterministic multi-agent simulation of the committee protocol: ledger
//! generation, per-agent digests, rounds every `k` blocks, subcommittee
//! publication, observation and conflict reporting, scripted adversaries and
//! external client queries.

mod bench;
mod engine;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use bench::{bench, BenchConfig, BenchReport};
pub use engine::{run_scenario, ClaimedHistories, QueryResult, Simulation};

use crate::accumulator::AccumulatorError;
use crate::bulletin::{BoardError, Event};
use crate::encoding::hex_biguint;
use crate::identity::MemberId;
use crate::ledger::{LedgerError, PublishStrategy};
use crate::proofs::ProofError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("no safe view for collusion bound {0}")]
    NoSafeView(usize),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Proof(#[from] ProofError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Behavior {
    /// Publish a false digest for the round's height while keeping an honest history.
    EquivocateDigest,
    /// Every group member adopts and publishes one shared false digest and
    /// keeps chaining its rolling hash over it.
    FalseDigestCollude { group: Vec<MemberId> },
    /// Take no part in publishing, observing or answering for `rounds` rounds.
    Crash { rounds: u32 },
    /// Skip this round's publication.
    Withhold,
    /// Answer a client query for `key` with a proof relabelled to `fake_value`.
    ForgeProof { key: String, fake_value: String },
}

impl Behavior {
    /// Safety misbehavior, as opposed to a liveness fault.
    pub fn is_malicious(&self) -> bool {
        !matches!(self, Behavior::Crash { .. } | Behavior::Withhold)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryAction {
    pub member: MemberId,
    pub round: u32,
    pub behavior: Behavior,
}

/// `MEMBER@ROUND:BEHAVIOR`, where BEHAVIOR is one of `equivocate`,
/// `collude=m1+m2`, `crash=ROUNDS`, `withhold`, `forge=KEY/VALUE`.
impl FromStr for AdversaryAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let err = || format!("bad adversary action {s:?}");
        let (member, rest) = s.split_once('@').ok_or_else(err)?;
        let (round, behavior) = rest.split_once(':').ok_or_else(err)?;
        let (name, arg) = behavior.split_once('=').map_or((behavior, None), |(n, a)| (n, Some(a)));
        let behavior = match (name, arg) {
            ("equivocate", None) => Behavior::EquivocateDigest,
            ("withhold", None) => Behavior::Withhold,
            ("crash", Some(r)) => Behavior::Crash { rounds: r.parse().map_err(|_| err())? },
            ("collude", Some(g)) => Behavior::FalseDigestCollude { group: g.split('+').map(MemberId::new).collect() },
            ("forge", Some(kv)) => {
                let (key, value) = kv.split_once('/').ok_or_else(err)?;
                Behavior::ForgeProof { key: key.into(), fake_value: value.into() }
            }
            _ => return Err(err()),
        };
        Ok(Self { member: MemberId::new(member), round: round.parse().map_err(|_| err())?, behavior })
    }
}

impl fmt::Display for AdversaryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:", self.member, self.round)?;
        match &self.behavior {
            Behavior::EquivocateDigest => write!(f, "equivocate"),
            Behavior::Withhold => write!(f, "withhold"),
            Behavior::Crash { rounds } => write!(f, "crash={rounds}"),
            Behavior::FalseDigestCollude { group } => {
                let ids: Vec<&str> = group.iter().map(MemberId::as_str).collect();
                write!(f, "collude={}", ids.join("+"))
            }
            Behavior::ForgeProof { key, fake_value } => write!(f, "forge={key}/{fake_value}"),
        }
    }
}

fn default_modulus_bits() -> u32 {
    128
}

fn default_key_space() -> u32 {
    32
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub committee_size: u32,
    pub failure_threshold: u32,
    pub round_interval: u32,
    pub strategy: PublishStrategy,
    pub blocks: u64,
    pub writes_per_block: u32,
    pub rng_seed: u64,
    #[serde(default)]
    pub adversary_script: Vec<AdversaryAction>,
    #[serde(default = "default_modulus_bits")]
    pub modulus_bits: u32,
    /// Sample size for RANDOM_SUBSET; defaults to `f + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommittee_size: Option<u32>,
    /// Number of distinct application keys the workload draws from.
    #[serde(default = "default_key_space")]
    pub key_space: u32,
    /// Honest members outside the subcommittee watch board events.
    #[serde(default = "default_true")]
    pub observers: bool,
    /// Rounds between a board event and honest observers acting on it.
    #[serde(default)]
    pub observation_delay: u32,
    /// Adversaries abstain whenever an active honest member would notice.
    #[serde(default)]
    pub cautious: bool,
    /// Collusion bound `c` assumed by the simulated external client.
    #[serde(default)]
    pub client_collusion_bound: u32,
    /// Permit scripts in which no member is honest (model-boundary control).
    #[serde(default)]
    pub allow_zero_honest: bool,
}

impl ScenarioConfig {
    pub fn new(committee_size: u32, failure_threshold: u32, round_interval: u32, strategy: PublishStrategy) -> Self {
        Self {
            committee_size,
            failure_threshold,
            round_interval,
            strategy,
            blocks: u64::from(round_interval) * 4,
            writes_per_block: 4,
            rng_seed: 1,
            adversary_script: Vec::new(),
            modulus_bits: default_modulus_bits(),
            subcommittee_size: None,
            key_space: default_key_space(),
            observers: true,
            observation_delay: 0,
            cautious: false,
            client_collusion_bound: 0,
            allow_zero_honest: false,
        }
    }

    pub fn members(&self) -> Vec<MemberId> {
        (0..self.committee_size as usize).map(MemberId::indexed).collect()
    }

    pub fn rounds(&self) -> u32 {
        (self.blocks / u64::from(self.round_interval.max(1))) as u32
    }

    /// Ledger height whose view is published in `round`.
    pub fn round_height(&self, round: u32) -> u64 {
        (u64::from(round) + 1) * u64::from(self.round_interval)
    }

    pub fn effective_subcommittee_size(&self) -> u32 {
        self.subcommittee_size.unwrap_or(self.failure_threshold + 1)
    }

    /// Members with a scripted safety misbehavior, including collusion groups.
    pub fn malicious(&self) -> BTreeSet<MemberId> {
        let mut out = BTreeSet::new();
        for a in &self.adversary_script {
            if a.behavior.is_malicious() {
                out.insert(a.member.clone());
            }
            if let Behavior::FalseDigestCollude { group } = &a.behavior {
                out.extend(group.iter().cloned());
            }
        }
        out
    }

    pub fn honest(&self) -> BTreeSet<MemberId> {
        let bad = self.malicious();
        self.members().into_iter().filter(|m| !bad.contains(m)).collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        let (n, f) = (self.committee_size, self.failure_threshold);
        if n == 0 || n < f + 1 {
            return bad(format!("committee size {n} must be at least f + 1 = {}", f + 1));
        }
        if self.round_interval == 0 {
            return bad("round interval must be at least 1".into());
        }
        if self.blocks == 0 || self.writes_per_block == 0 || self.key_space == 0 {
            return bad("blocks, writes per block and key space must be positive".into());
        }
        let s = self.effective_subcommittee_size();
        if s < f + 1 || s > n {
            return bad(format!("subcommittee size {s} must lie in [f + 1, n] = [{}, {n}]", f + 1));
        }
        let members: BTreeSet<MemberId> = self.members().into_iter().collect();
        for a in &self.adversary_script {
            if !members.contains(&a.member) {
                return bad(format!("{} is not a committee member", a.member));
            }
            if a.round >= self.rounds() {
                return bad(format!("{a}: scenario has only {} rounds", self.rounds()));
            }
            if let Behavior::FalseDigestCollude { group } = &a.behavior {
                let distinct: BTreeSet<&MemberId> = group.iter().collect();
                if distinct.len() != group.len() || !distinct.contains(&a.member) {
                    return bad(format!("{a}: group must list distinct members including the actor"));
                }
                if let Some(m) = group.iter().find(|m| !members.contains(m)) {
                    return bad(format!("{a}: {m} is not a committee member"));
                }
                if group.len() as u32 > n - 1 && !self.allow_zero_honest {
                    return bad(format!("{a}: colluding group larger than n - 1"));
                }
            }
        }
        if self.honest().is_empty() && !self.allow_zero_honest {
            return bad("at least one member must be honest".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Stream seed derived from the scenario seed and a purpose label.
pub(crate) fn derive_seed(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"postate/sim/");
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    h.update(index.to_be_bytes());
    h.finalize().into()
}

/// Members expected to publish in `round`. ALL is the whole committee;
/// ROUND_ROBIN a window of `f + 1` consecutive members advancing by `f + 1`
/// each round; RANDOM_SUBSET a sample of `max(size, f + 1)` members drawn
/// from a stream seeded by `(seed, round)`. Result is in committee order.
pub fn select_subcommittee(
    round: u32,
    strategy: PublishStrategy,
    committee: &[MemberId],
    f: u32,
    size: u32,
    seed: u64,
) -> Result<Vec<MemberId>, SimError> {
    let n = committee.len();
    let window = f as usize + 1;
    if n < window {
        return Err(SimError::Config(format!("committee of {n} is smaller than f + 1 = {window}")));
    }
    Ok(match strategy {
        PublishStrategy::All => committee.to_vec(),
        PublishStrategy::RoundRobin => {
            let start = (round as usize * window) % n;
            let mut idx: Vec<usize> = (0..window).map(|j| (start + j) % n).collect();
            idx.sort_unstable();
            idx.into_iter().map(|i| committee[i].clone()).collect()
        }
        PublishStrategy::RandomSubset => {
            let size = (size as usize).clamp(window, n);
            let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, "subcommittee", u64::from(round)));
            let mut idx = sample(&mut rng, n, size).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| committee[i].clone()).collect()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    RejectedByVerifier,
    DetectedOnBoard,
    Undetected,
}

/// A scripted safety misbehavior that was carried out, and how it ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misbehavior {
    pub action: AdversaryAction,
    pub height: u64,
    /// The false digest published, for digest misbehaviors.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex")]
    pub false_digest: Option<BigUint>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_round: Option<u32>,
    /// Honest member holding both conflicting views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub honest_witness: Option<MemberId>,
}

impl Misbehavior {
    pub fn latency_rounds(&self) -> Option<u32> {
        self.detected_round.map(|r| r.saturating_sub(self.action.round))
    }
}

mod opt_hex {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => hex_biguint::serialize(n, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigUint>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "hex_biguint")] BigUint);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abstention {
    pub action: AdversaryAction,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LivenessFault {
    pub member: MemberId,
    pub round: u32,
    pub behavior: Behavior,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientOutcome {
    pub round: u32,
    pub board_block: u64,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responder: Option<MemberId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_height: Option<u64>,
    pub verified: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub height: u64,
    pub subcommittee: Vec<MemberId>,
    pub publishers: Vec<MemberId>,
    pub first_board_block: u64,
    pub last_board_block: u64,
    pub events: Vec<Event>,
    pub queries: Vec<ClientOutcome>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: ScenarioConfig,
    pub honest: Vec<MemberId>,
    pub rounds: Vec<RoundRecord>,
    pub misbehaviors: Vec<Misbehavior>,
    pub abstentions: Vec<Abstention>,
    pub liveness_faults: Vec<LivenessFault>,
    pub conflicts: usize,
    pub alerts: usize,
}

impl Transcript {
    pub fn queries(&self) -> impl Iterator<Item = &ClientOutcome> {
        self.rounds.iter().flat_map(|r| &r.queries)
    }

    /// One JSON record per line: a header, then every round, misbehavior,
    /// abstention and liveness fault.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Scenario { config: &'a ScenarioConfig, honest: &'a [MemberId] },
            Round(&'a RoundRecord),
            Misbehavior(&'a Misbehavior),
            Abstention(&'a Abstention),
            LivenessFault(&'a LivenessFault),
            Totals { conflicts: usize, alerts: usize },
        }
        let mut lines = vec![Line::Scenario { config: &self.config, honest: &self.honest }];
        lines.extend(self.rounds.iter().map(Line::Round));
        lines.extend(self.misbehaviors.iter().map(Line::Misbehavior));
        lines.extend(self.abstentions.iter().map(Line::Abstention));
        lines.extend(self.liveness_faults.iter().map(Line::LivenessFault));
        lines.push(Line::Totals { conflicts: self.conflicts, alerts: self.alerts });
        lines.iter().map(|l| serde_json::to_string(l).expect("transcript serializes") + "\n").collect()
    }

    /// Inverse of [`Transcript::to_jsonl`].
    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        #[derive(Deserialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line {
            Scenario { config: ScenarioConfig, honest: Vec<MemberId> },
            Round(RoundRecord),
            Misbehavior(Misbehavior),
            Abstention(Abstention),
            LivenessFault(LivenessFault),
            Totals { conflicts: usize, alerts: usize },
        }
        let mut header = None;
        let (mut rounds, mut misbehaviors, mut abstentions, mut liveness_faults) = (vec![], vec![], vec![], vec![]);
        let mut totals = (0, 0);
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: Line =
                serde_json::from_str(line).map_err(|e| SimError::Config(format!("transcript line {}: {e}", i + 1)))?;
            match parsed {
                Line::Scenario { config, honest } => header = Some((config, honest)),
                Line::Round(r) => rounds.push(r),
                Line::Misbehavior(m) => misbehaviors.push(m),
                Line::Abstention(a) => abstentions.push(a),
                Line::LivenessFault(l) => liveness_faults.push(l),
                Line::Totals { conflicts, alerts } => totals = (conflicts, alerts),
            }
        }
        let (config, honest) = header.ok_or_else(|| SimError::Config("transcript has no scenario header".into()))?;
        Ok(Self {
            config,
            honest,
            rounds,
            misbehaviors,
            abstentions,
            liveness_faults,
            conflicts: totals.0,
            alerts: totals.1,
        })
    }

    /// Human-readable summary table.
    pub fn summary(&self) -> String {
        let verdict = assert_type2(self);
        let queries: Vec<&ClientOutcome> = self.queries().collect();
        let ok = queries.iter().filter(|q| q.verified).count();
        let mut out = String::new();
        out += &format!(
            "committee {} (f = {}, k = {}, {}), {} blocks, {} rounds\n",
            self.config.committee_size,
            self.config.failure_threshold,
            self.config.round_interval,
            self.config.strategy.as_str(),
            self.config.blocks,
            self.rounds.len()
        );
        out += &format!("{} conflicts, {} alerts\n", self.conflicts, self.alerts);
        out += &format!("client queries verified: {ok}/{}\n", queries.len());
        out += &format!(
            "{:<28} {:>5} {:>7} {:<22} {:>8} {:<8}\n",
            "misbehavior", "round", "height", "outcome", "latency", "witness"
        );
        for m in &self.misbehaviors {
            out += &format!(
                "{:<28} {:>5} {:>7} {:<22} {:>8} {:<8}\n",
                m.action.to_string(),
                m.action.round,
                m.height,
                format!("{:?}", m.outcome),
                m.latency_rounds().map_or("-".into(), |l| l.to_string()),
                m.honest_witness.as_ref().map_or("-", MemberId::as_str),
            );
        }
        for a in &self.abstentions {
            out += &format!("abstained: {} ({})\n", a.action, a.reason);
        }
        for l in &self.liveness_faults {
            out += &format!("liveness fault: {}@{} {:?}\n", l.member, l.round, l.behavior);
        }
        out += &format!("type-2 verdict: {}\n", if verdict.passed { "PASS" } else { "FAIL" });
        for v in &verdict.violations {
            out += &format!("  {v}\n");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Type2Verdict {
    pub passed: bool,
    /// `(index into misbehaviors, honest member holding both views)`.
    pub witnesses: Vec<(usize, MemberId)>,
    pub violations: Vec<String>,
    /// The committee had no honest member, so nothing is guaranteed.
    pub model_boundary: bool,
}

/// Every carried-out misbehavior must be rejected by the verifier or
/// detected on the board, and each detection must be backed by an honest
/// member that holds both conflicting views.
pub fn assert_type2(t: &Transcript) -> Type2Verdict {
    let mut witnesses = Vec::new();
    let mut violations = Vec::new();
    for (i, m) in t.misbehaviors.iter().enumerate() {
        match m.outcome {
            Outcome::Undetected => violations.push(format!("{} went undetected", m.action)),
            Outcome::RejectedByVerifier => {}
            Outcome::DetectedOnBoard => match &m.honest_witness {
                Some(w) => witnesses.push((i, w.clone())),
                None => violations.push(format!("{}: no honest member holds both views", m.action)),
            },
        }
    }
    let model_boundary = t.honest.is_empty();
    if model_boundary {
        violations.push("no honest committee member: outside the security model".into());
    }
    Type2Verdict { passed: violations.is_empty(), witnesses, violations, model_boundary }
}

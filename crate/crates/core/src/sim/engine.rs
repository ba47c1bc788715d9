use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{
    derive_seed, select_subcommittee, Abstention, AdversaryAction, Behavior, ClientOutcome, LivenessFault, Misbehavior,
    Outcome, RoundRecord, ScenarioConfig, SimError, Transcript,
};
use crate::accumulator::{prime_gen, setup, AccumulatorParams, PrimeRepresentation, Trapdoor, Witness};
use crate::bulletin::{BoardOp, BoardState, ChainVerifier, Commitment, Event};
use crate::identity::{CommitteeKeys, MemberId, MemberKey};
use crate::ledger::{
    genesis_rolling_hash, rolling_hash_step, Agent, Block, KVWrite, LedgerState, Policy, Transaction, Version,
};
use crate::proofs::{
    find_latest_in_view, is_current, pgen, wpgen, wpver, Assertion, Fact, FactKind, ProofError, TimedView, View,
    WrappedProof,
};

/// Share of transactions generated as invalid, and of writes that delete.
const INVALID_TX_PERCENT: u32 = 5;
const DELETE_PERCENT: u32 = 10;

type Claim = (BigUint, [u8; 32]);

/// Per member, the `(z, H)` it holds (or claims) at every height. Honest
/// members' claims are their agent's snapshots; colluders' include the
/// phantom element they agreed on.
#[derive(Clone, Debug, Default)]
pub struct ClaimedHistories {
    claims: BTreeMap<MemberId, Vec<Claim>>,
}

impl ClaimedHistories {
    pub fn get(&self, member: &MemberId, height: u64) -> Option<&Claim> {
        self.claims.get(member)?.get(height as usize)
    }
}

impl ChainVerifier for ClaimedHistories {
    /// Recompute the member's hash chain from `earlier` to `later` over the
    /// digests it holds in between.
    fn chains_over(&self, member: &MemberId, later: &Commitment, earlier: &Commitment) -> bool {
        let (from, to) = (earlier.view.height, later.view.height);
        let Some(history) = self.claims.get(member) else {
            return false;
        };
        if from >= to || history.len() <= to as usize || history[from as usize].0 != earlier.view.digest {
            return false;
        }
        let mut h = earlier.rolling_hash;
        for (z, _) in &history[from as usize..to as usize] {
            h = rolling_hash_step(&h, z);
        }
        h == later.rolling_hash && history[to as usize].0 == later.view.digest
    }
}

/// Outcome of one external-client query.
#[derive(Clone, Debug)]
pub struct QueryResult {
    pub view: TimedView,
    pub responder: MemberId,
    pub fact: Option<Fact>,
    pub proof: Option<WrappedProof>,
    pub verified: bool,
    pub detail: String,
}

/// A running scenario. All randomness comes from streams derived from the
/// scenario seed, and all collections iterate in a fixed order.
pub struct Simulation {
    config: ScenarioConfig,
    members: Vec<MemberId>,
    keys: Vec<MemberKey>,
    committee: CommitteeKeys,
    honest: Vec<bool>,
    params: AccumulatorParams,
    trapdoor: Trapdoor,
    agents: Vec<Agent>,
    claims: ClaimedHistories,
    // per member: (first height, phantom prime) of adopted false digests
    overlays: Vec<Vec<(u64, BigUint)>>,
    board: BoardState,
    blocks: Vec<Block>,
    ledger_rng: ChaCha20Rng,
    client_rng: ChaCha20Rng,
    generated_live: BTreeSet<u32>,
    knowledge: Vec<BTreeSet<(u64, BigUint, [u8; 32])>>,
    cursors: Vec<u64>,
    reported: BTreeSet<(usize, u64)>,
    crashed_until: Vec<u32>,
    round_end_blocks: Vec<u64>,
    pending: Vec<(AdversaryAction, u64, BigUint)>,
    misbehaviors: Vec<Misbehavior>,
    abstentions: Vec<Abstention>,
    liveness_faults: Vec<LivenessFault>,
    rounds: Vec<RoundRecord>,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<Transcript, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    sim.run()
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let members = config.members();
        let seed = config.rng_seed.to_be_bytes();
        let keys: Vec<MemberKey> = members.iter().map(|m| MemberKey::derive(m.clone(), &seed)).collect();
        let committee: CommitteeKeys = keys.iter().map(|k| (k.id().clone(), k.public())).collect();
        let policy = Policy {
            failure_threshold: config.failure_threshold,
            round_interval: config.round_interval,
            publish_strategy: config.strategy,
            subcommittee_size: config.effective_subcommittee_size(),
        };
        let genesis = LedgerState::genesis(&committee, policy)?;
        let (params, trapdoor) = setup(&seed, config.modulus_bits)?;
        let chain_id = format!("postate-sim/{}", config.rng_seed).into_bytes();
        let agents = keys
            .iter()
            .map(|k| Agent::new(k.clone(), &chain_id, params.clone(), trapdoor.clone(), &genesis))
            .collect::<Result<Vec<_>, _>>()?;
        let mut claims = ClaimedHistories::default();
        for (m, a) in members.iter().zip(&agents) {
            let s = a.current();
            debug_assert_eq!(s.rolling_hash, genesis_rolling_hash(&chain_id));
            claims.claims.insert(m.clone(), vec![(s.digest.clone(), s.rolling_hash)]);
        }
        let malicious = config.malicious();
        let n = members.len();
        let board = BoardState::register_committee(committee.iter().map(|(id, k)| (id.clone(), *k)), policy)?;
        Ok(Self {
            honest: members.iter().map(|m| !malicious.contains(m)).collect(),
            ledger_rng: ChaCha20Rng::from_seed(derive_seed(config.rng_seed, "ledger", 0)),
            client_rng: ChaCha20Rng::from_seed(derive_seed(config.rng_seed, "client", 0)),
            config,
            members,
            keys,
            committee,
            params,
            trapdoor,
            agents,
            claims,
            overlays: vec![Vec::new(); n],
            board,
            blocks: Vec::new(),
            generated_live: BTreeSet::new(),
            knowledge: vec![BTreeSet::new(); n],
            cursors: vec![0; n],
            reported: BTreeSet::new(),
            crashed_until: vec![0; n],
            round_end_blocks: Vec::new(),
            pending: Vec::new(),
            misbehaviors: Vec::new(),
            abstentions: Vec::new(),
            liveness_faults: Vec::new(),
            rounds: Vec::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn params(&self) -> &AccumulatorParams {
        &self.params
    }

    pub fn committee(&self) -> &CommitteeKeys {
        &self.committee
    }

    pub fn board(&self) -> &BoardState {
        &self.board
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn claims(&self) -> &ClaimedHistories {
        &self.claims
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    fn index(&self, m: &MemberId) -> usize {
        self.members.iter().position(|x| x == m).expect("validated member")
    }

    fn key_name(i: u32) -> Vec<u8> {
        format!("k{i}").into_bytes()
    }

    fn generate_block(&mut self) -> Block {
        let height = self.height() + 1;
        let mut transactions = Vec::new();
        for tx_index in 0..self.config.writes_per_block {
            let rng = &mut self.ledger_rng;
            let k = rng.gen_range(0..self.config.key_space);
            let valid = rng.gen_range(0..100) >= INVALID_TX_PERCENT;
            let delete = self.generated_live.contains(&k) && rng.gen_range(0..100) < DELETE_PERCENT;
            let version = Version::new(height, tx_index);
            let write = if delete {
                KVWrite::delete(Self::key_name(k), version)
            } else {
                let value: u64 = rng.gen();
                KVWrite::put(Self::key_name(k), format!("{value:016x}").into_bytes(), version)
            };
            if valid {
                if delete {
                    self.generated_live.remove(&k);
                } else {
                    self.generated_live.insert(k);
                }
            }
            transactions.push(Transaction { writes: vec![write], valid });
        }
        Block { height, transactions }
    }

    fn claimed_digest(&self, i: usize, height: u64, true_z: &BigUint) -> BigUint {
        let exponent: BigUint =
            self.overlays[i].iter().filter(|(from, _)| *from <= height).map(|(_, p)| p.clone()).product();
        true_z.modpow(&exponent, &self.params.modulus)
    }

    /// Append the claim at the newest height for member `i`, or rewrite it.
    fn refresh_claim(&mut self, i: usize, height: u64) {
        let true_z = self.agents[i].snapshot(height).expect("processed").digest.clone();
        let z = self.claimed_digest(i, height, &true_z);
        let history = self.claims.claims.get_mut(&self.members[i]).expect("member");
        let h = match height.checked_sub(1) {
            Some(prev) => {
                let (pz, ph) = &history[prev as usize];
                rolling_hash_step(ph, pz)
            }
            None => history[0].1,
        };
        history.truncate(height as usize);
        history.push((z, h));
    }

    fn advance_to(&mut self, height: u64) -> Result<(), SimError> {
        while self.height() < height {
            let block = self.generate_block();
            for i in 0..self.agents.len() {
                self.agents[i].dgen(&block)?;
            }
            self.blocks.push(block);
            for i in 0..self.agents.len() {
                self.refresh_claim(i, self.height());
            }
        }
        Ok(())
    }

    fn active(&self, i: usize, round: u32) -> bool {
        self.crashed_until[i] <= round
    }

    fn learn(&mut self, i: usize, events: &[Event]) {
        for e in events {
            match e {
                Event::ViewPublished { height, view, rolling_hash, .. } => {
                    self.knowledge[i].insert((*height, view.digest.clone(), *rolling_hash));
                }
                Event::ViewCommitmentConflict { report, .. } => {
                    let r = &report.reference;
                    self.knowledge[i].insert((report.height, r.view.digest.clone(), r.rolling_hash));
                    self.knowledge[i].insert((
                        report.height,
                        report.conflicting_view.digest.clone(),
                        report.conflicting_hash,
                    ));
                }
            }
        }
    }

    fn knows(&self, i: usize, height: u64, z: &BigUint, h: &[u8; 32]) -> bool {
        self.claims.get(&self.members[i], height).is_some_and(|(cz, ch)| cz == z && ch == h)
            || self.knowledge[i].contains(&(height, z.clone(), *h))
    }

    fn phantom(&self, action: &AdversaryAction, height: u64) -> Result<PrimeRepresentation, SimError> {
        let fact = Fact::new(
            format!("phantom/{}/{}", action.member, action.round).into_bytes(),
            b"injected".to_vec(),
            Version::new(height, u32::MAX),
        );
        Ok(prime_gen(&fact.element(), Some(self.trapdoor.phi()))?)
    }

    /// Whether some active honest member would see a false digest this round.
    fn would_be_detected(&self, round: u32, publishers: &BTreeSet<usize>) -> bool {
        (0..self.members.len())
            .any(|i| self.honest[i] && self.active(i, round) && (publishers.contains(&i) || self.config.observers))
    }

    /// Run every round, then let observers drain the remaining events.
    pub fn run(&mut self) -> Result<Transcript, SimError> {
        let rounds = self.config.rounds();
        for r in 0..rounds {
            self.run_round(r)?;
        }
        self.advance_to(self.config.blocks)?;
        for r in rounds..rounds + self.config.observation_delay {
            self.observe(r)?;
            self.round_end_blocks.push(self.board.clock());
        }
        Ok(self.transcript())
    }

    fn run_round(&mut self, r: u32) -> Result<(), SimError> {
        let height = self.config.round_height(r);
        self.advance_to(height)?;
        let first_board_block = self.board.clock() + 1;
        let actions: Vec<AdversaryAction> =
            self.config.adversary_script.iter().filter(|a| a.round == r).cloned().collect();

        let mut withholding = BTreeSet::new();
        for a in &actions {
            let i = self.index(&a.member);
            match a.behavior {
                Behavior::Crash { rounds } => self.crashed_until[i] = self.crashed_until[i].max(r + rounds),
                Behavior::Withhold => {
                    withholding.insert(i);
                }
                _ => continue,
            }
            self.liveness_faults.push(LivenessFault {
                member: a.member.clone(),
                round: r,
                behavior: a.behavior.clone(),
            });
        }

        let subcommittee = select_subcommittee(
            r,
            self.config.strategy,
            &self.members,
            self.config.failure_threshold,
            self.config.effective_subcommittee_size(),
            self.config.rng_seed,
        )?;
        let mut publishers: BTreeSet<usize> = subcommittee
            .iter()
            .map(|m| self.index(m))
            .filter(|&i| self.active(i, r) && !withholding.contains(&i))
            .collect();

        // Adversaries decide; false publications bypass the schedule.
        let mut false_views: BTreeMap<usize, Claim> = BTreeMap::new();
        for a in &actions {
            let i = self.index(&a.member);
            let group: Vec<usize> = match &a.behavior {
                Behavior::EquivocateDigest => vec![i],
                Behavior::FalseDigestCollude { group } => group.iter().map(|m| self.index(m)).collect(),
                _ => continue,
            };
            if !self.active(i, r) {
                self.abstentions.push(Abstention { action: a.clone(), reason: "actor crashed".into() });
                continue;
            }
            if self.config.cautious && self.would_be_detected(r, &publishers) {
                self.abstentions.push(Abstention { action: a.clone(), reason: "cautious: would be detected".into() });
                continue;
            }
            let phantom = self.phantom(a, height)?;
            let (true_z, true_h) = self.claims.get(&a.member, height).expect("claimed").clone();
            let false_z = true_z.modpow(&phantom.prime, &self.params.modulus);
            if let Behavior::FalseDigestCollude { .. } = a.behavior {
                for &g in &group {
                    self.overlays[g].push((height, phantom.prime.clone()));
                    self.refresh_claim(g, height);
                }
            }
            for &g in &group {
                if self.active(g, r) && !withholding.contains(&g) {
                    let claim = match a.behavior {
                        Behavior::EquivocateDigest => (false_z.clone(), true_h),
                        _ => self.claims.get(&self.members[g], height).expect("claimed").clone(),
                    };
                    false_views.insert(g, claim);
                    publishers.insert(g);
                }
            }
            self.pending.push((a.clone(), height, false_z));
        }

        for &i in &publishers {
            if self.honest[i] {
                // Publishing endorses every earlier reference; check them first.
                let earlier: Vec<u64> = self.board.records().range(..height).map(|(h, _)| *h).collect();
                for h in earlier {
                    self.report_if_divergent(i, h)?;
                }
            }
            let (z, h) = match false_views.get(&i) {
                Some(c) => c.clone(),
                None => self.claims.get(&self.members[i], height).expect("claimed").clone(),
            };
            let view = View::sign(&self.keys[i], z, height);
            let events = self.board.apply(BoardOp::publish(&self.keys[i], view, h))?;
            if self.honest[i] {
                self.learn(i, &events);
            }
        }

        self.observe(r)?;
        self.round_end_blocks.push(self.board.clock());

        let mut queries = Vec::new();
        self.random_query(r, &mut queries)?;
        for a in &actions {
            if let Behavior::ForgeProof { key, fake_value } = &a.behavior {
                self.forge_query(r, a, key, fake_value, &mut queries)?;
            }
        }

        let last_board_block = self.board.clock();
        self.rounds.push(RoundRecord {
            round: r,
            height,
            subcommittee,
            publishers: publishers.iter().map(|&i| self.members[i].clone()).collect(),
            first_board_block,
            last_board_block,
            events: self.board.events_since(first_board_block).to_vec(),
            queries,
        });
        Ok(())
    }

    /// Honest, active observers process events up to the delayed horizon and
    /// report every reference that disagrees with their own history.
    fn observe(&mut self, r: u32) -> Result<(), SimError> {
        if !self.config.observers {
            return Ok(());
        }
        let horizon = match r.checked_sub(self.config.observation_delay) {
            Some(past) if (past as usize) < self.round_end_blocks.len() => self.round_end_blocks[past as usize],
            Some(_) => self.board.clock(),
            None => return Ok(()),
        };
        for i in 0..self.members.len() {
            if !self.honest[i] || !self.active(i, r) {
                continue;
            }
            let events: Vec<Event> = self
                .board
                .events_since(self.cursors[i] + 1)
                .iter()
                .take_while(|e| e.board_block() <= horizon)
                .cloned()
                .collect();
            self.cursors[i] = self.cursors[i].max(horizon);
            self.learn(i, &events);
            for e in &events {
                let Event::ViewPublished { height, .. } = e else { continue };
                self.report_if_divergent(i, *height)?;
            }
        }
        Ok(())
    }

    fn report_if_divergent(&mut self, i: usize, height: u64) -> Result<(), SimError> {
        let (z, h) = self.claims.get(&self.members[i], height).expect("observed heights are processed").clone();
        let Some((reference, reference_h)) = self.board.get_commitment_for(height) else {
            return Ok(());
        };
        let own_on_record = (reference.digest == z && reference_h == &h)
            || self
                .board
                .conflicts()
                .iter()
                .any(|c| c.height == height && c.conflicting_view.digest == z && c.conflicting_hash == h);
        if own_on_record || !self.reported.insert((i, height)) {
            return Ok(());
        }
        let view = View::sign(&self.keys[i], z, height);
        let events = self.board.apply(BoardOp::report(&self.keys[i], view, h))?;
        self.learn(i, &events);
        Ok(())
    }

    fn random_query(&mut self, r: u32, out: &mut Vec<ClientOutcome>) -> Result<(), SimError> {
        let t = self.board.clock();
        let c = self.config.client_collusion_bound as usize;
        let safe = self.board.safe_views_at(c, t, &self.claims);
        let Some(latest) = safe.last() else {
            out.push(ClientOutcome {
                round: r,
                board_block: t,
                key: String::new(),
                responder: None,
                view_height: None,
                verified: false,
                detail: format!("no safe view for c = {c}"),
            });
            return Ok(());
        };
        let reference = self.honest.iter().position(|&h| h).unwrap_or(0);
        let live: Vec<u32> = (0..self.config.key_space)
            .filter(|&k| self.agents[reference].element_at(&Self::key_name(k), latest.view.height).is_some())
            .collect();
        if live.is_empty() {
            return Ok(());
        }
        let key = Self::key_name(live[self.client_rng.gen_range(0..live.len())]);
        let candidates: Vec<usize> = (0..self.members.len()).filter(|&i| self.active(i, r)).collect();
        let responder = candidates[self.client_rng.gen_range(0..candidates.len())];
        let q = self.external_client_query(&key, c, t, &self.members[responder].clone())?;
        out.push(ClientOutcome {
            round: r,
            board_block: t,
            key: String::from_utf8_lossy(&key).into_owned(),
            responder: Some(q.responder),
            view_height: Some(q.view.view.height),
            verified: q.verified,
            detail: q.detail,
        });
        Ok(())
    }

    fn forge_query(
        &mut self,
        r: u32,
        action: &AdversaryAction,
        key: &str,
        fake_value: &str,
        out: &mut Vec<ClientOutcome>,
    ) -> Result<(), SimError> {
        let i = self.index(&action.member);
        let t = self.board.clock();
        let c = self.config.client_collusion_bound as usize;
        let abstain = |s: &mut Self, reason: &str| {
            s.abstentions.push(Abstention { action: action.clone(), reason: reason.into() });
        };
        if !self.active(i, r) {
            abstain(self, "actor crashed");
            return Ok(());
        }
        if self.config.cautious {
            abstain(self, "cautious: verifiers reject relabelled proofs");
            return Ok(());
        }
        let safe = self.board.safe_views_at(c, t, &self.claims);
        let Some(latest) = safe.last().cloned() else {
            abstain(self, "no safe view to answer against");
            return Ok(());
        };
        let (fact, proof) = match self.forged_answer(i, key.as_bytes(), fake_value.as_bytes(), &latest.view) {
            Ok(x) => x,
            Err(e) => {
                abstain(self, &format!("nothing to relabel: {e}"));
                return Ok(());
            }
        };
        let verified = self.client_check(&fact, &proof, &latest, t, &safe);
        out.push(ClientOutcome {
            round: r,
            board_block: t,
            key: key.into(),
            responder: Some(action.member.clone()),
            view_height: Some(latest.view.height),
            verified,
            detail: if verified { "forged proof accepted".into() } else { "membership check failed".into() },
        });
        self.misbehaviors.push(Misbehavior {
            action: action.clone(),
            height: latest.view.height,
            false_digest: None,
            outcome: if verified { Outcome::Undetected } else { Outcome::RejectedByVerifier },
            detected_round: (!verified).then_some(r),
            honest_witness: None,
        });
        Ok(())
    }

    /// A genuine proof for some live key, relabelled to `(key, fake_value)`.
    fn forged_answer(
        &self,
        i: usize,
        key: &[u8],
        fake_value: &[u8],
        view: &View,
    ) -> Result<(Fact, WrappedProof), ProofError> {
        let live_key = if self.agents[i].element_at(key, view.height).is_some() {
            key.to_vec()
        } else {
            (0..self.config.key_space)
                .map(Self::key_name)
                .find(|k| self.agents[i].element_at(k, view.height).is_some())
                .ok_or(ProofError::Absent(view.height))?
        };
        let (fact, mut proof) = self.answer(i, &live_key, view)?;
        let forged = Fact { key: key.to_vec(), value: fake_value.to_vec(), ..fact };
        proof.fact = forged.clone();
        Ok((forged, proof))
    }

    /// Member `i`'s answer for `key` against `view`. Honest members answer
    /// from their agent; members holding a false digest answer against it
    /// with the trapdoor.
    fn answer(&self, i: usize, key: &[u8], view: &View) -> Result<(Fact, WrappedProof), ProofError> {
        let agent = &self.agents[i];
        let fact = find_latest_in_view(key, agent, view)?;
        let true_z = &agent.snapshot(view.height).ok_or(ProofError::MissingSnapshot(view.height))?.digest;
        let assertion = if &view.digest == true_z {
            pgen(&fact, agent, view.height)?
        } else {
            let claimed = self.claims.get(&self.members[i], view.height).map(|c| &c.0);
            if claimed != Some(&view.digest) {
                return Err(ProofError::Mismatch("view digest differs from the responder's state"));
            }
            let rep = agent.representation(&fact.element()).ok_or(ProofError::NotProvable(view.height))?.clone();
            let value = self
                .trapdoor
                .root(&view.digest, &rep.prime, &self.params.modulus)
                .map_err(|e| ProofError::Ledger(e.into()))?;
            Assertion { witness: Witness { value, subject: rep, digest: view.digest.clone() }, height: view.height }
        };
        let proof = wpgen(&fact, &assertion, &view.digest, view)?;
        Ok((fact, proof))
    }

    fn client_check(&self, fact: &Fact, proof: &WrappedProof, view: &TimedView, t: u64, safe: &[TimedView]) -> bool {
        fact.kind == FactKind::Application
            && wpver(&self.params, &self.committee, fact, proof, &view.view)
            && is_current(&self.params, fact, t, safe, |v| (v == &view.view).then(|| proof.assertion.clone()))
                .unwrap_or(false)
    }

    /// External client flow: take the latest view safe for collusion bound
    /// `c` as of board block `t`, ask `responder` for `key`, and check the
    /// answer with no trapdoor and no ledger access.
    pub fn external_client_query(
        &self,
        key: &[u8],
        c: usize,
        t: u64,
        responder: &MemberId,
    ) -> Result<QueryResult, SimError> {
        let safe = self.board.safe_views_at(c, t, &self.claims);
        let latest = safe.last().cloned().ok_or(SimError::NoSafeView(c))?;
        let i = self.index(responder);
        Ok(match self.answer(i, key, &latest.view) {
            Ok((fact, proof)) => {
                let verified = fact.key == key && self.client_check(&fact, &proof, &latest, t, &safe);
                QueryResult {
                    view: latest,
                    responder: responder.clone(),
                    fact: Some(fact),
                    proof: Some(proof),
                    verified,
                    detail: if verified { "verified".into() } else { "membership check failed".into() },
                }
            }
            Err(e) => QueryResult {
                view: latest,
                responder: responder.clone(),
                fact: None,
                proof: None,
                verified: false,
                detail: format!("responder could not answer: {e}"),
            },
        })
    }

    fn round_of_board_block(&self, board_block: u64) -> u32 {
        self.round_end_blocks.partition_point(|&end| end < board_block) as u32
    }

    fn transcript(&self) -> Transcript {
        let mut misbehaviors: Vec<Misbehavior> = self
            .pending
            .iter()
            .map(|(action, height, false_z)| {
                let first = self.board.conflicts().iter().find(|c| {
                    c.height == *height
                        && (c.reference.view.digest == *false_z || c.conflicting_view.digest == *false_z)
                });
                let Some(report) = first else {
                    return Misbehavior {
                        action: action.clone(),
                        height: *height,
                        false_digest: Some(false_z.clone()),
                        outcome: Outcome::Undetected,
                        detected_round: None,
                        honest_witness: None,
                    };
                };
                let sides = [
                    (&report.reference.view.digest, &report.reference.rolling_hash),
                    (&report.conflicting_view.digest, &report.conflicting_hash),
                ];
                let honest_witness = (0..self.members.len())
                    .find(|&i| self.honest[i] && sides.iter().all(|(z, h)| self.knows(i, *height, z, h)))
                    .map(|i| self.members[i].clone());
                Misbehavior {
                    action: action.clone(),
                    height: *height,
                    false_digest: Some(false_z.clone()),
                    outcome: Outcome::DetectedOnBoard,
                    detected_round: Some(self.round_of_board_block(report.board_block)),
                    honest_witness,
                }
            })
            .collect();
        misbehaviors.extend(self.misbehaviors.iter().cloned());
        misbehaviors.sort_by_key(|m| m.action.round);
        Transcript {
            config: self.config.clone(),
            honest: (0..self.members.len()).filter(|&i| self.honest[i]).map(|i| self.members[i].clone()).collect(),
            rounds: self.rounds.clone(),
            misbehaviors,
            abstentions: self.abstentions.clone(),
            liveness_faults: self.liveness_faults.clone(),
            conflicts: self.board.conflicts().len(),
            alerts: self.board.alerts().len(),
        }
    }
}

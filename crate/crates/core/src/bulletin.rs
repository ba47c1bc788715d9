//! Bulletin board: a serialized state machine that records signed view
//! commitments per ledger height, flags conflicting commitments, tracks
//! endorsements and keeps a block clock.
//!
//! Every accepted mutation advances the clock by one and is appended to the
//! operation log; rejected operations leave the board untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{hex_bytes32, to_hex};
use crate::identity::{CommitteeKeys, MemberId, MemberKey, PublicKey, Signature};
use crate::ledger::{rolling_hash_step, Policy};
use crate::proofs::{TimedView, View};

#[derive(Debug, Error)]
pub enum BoardError {
    #[error("committee must be non-empty")]
    EmptyCommittee,
    #[error("member {0} registered twice")]
    DuplicateMember(MemberId),
    #[error("committee already registered")]
    AlreadyRegistered,
    #[error("{0} is not a registered committee member")]
    Unregistered(MemberId),
    #[error("invalid signature from {0}")]
    BadSignature(MemberId),
    #[error("view is not signed by its submitter or is for another height")]
    MalformedView,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommitmentStatus {
    Accepted,
    Disputed,
}

/// One member's recorded `(V, H)` submission.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub view: View,
    #[serde(rename = "h_hex", with = "hex_bytes32")]
    pub rolling_hash: [u8; 32],
    pub submitter: MemberId,
    pub board_block: u64,
}

impl Commitment {
    /// Views agree on `(digest, height)`; signatures naturally differ per member.
    pub fn agrees_with(&self, view: &View, rolling_hash: &[u8; 32]) -> bool {
        self.view.digest == view.digest && self.view.height == view.height && &self.rolling_hash == rolling_hash
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub height: u64,
    pub reference: Commitment,
    pub conflicting_view: View,
    #[serde(rename = "conflicting_h_hex", with = "hex_bytes32")]
    pub conflicting_hash: [u8; 32],
    pub reporter: MemberId,
    pub board_block: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertReason {
    /// A conflict report for a height with no reference commitment.
    NoReference,
    /// A first submission whose `H` does not extend the reference one height below.
    RollingHashMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub height: u64,
    pub reporter: MemberId,
    pub view: View,
    #[serde(rename = "h_hex", with = "hex_bytes32")]
    pub rolling_hash: [u8; 32],
    pub reason: AlertReason,
    pub board_block: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Event {
    ViewPublished {
        board_block: u64,
        height: u64,
        member: MemberId,
        view: View,
        #[serde(rename = "h_hex", with = "hex_bytes32")]
        rolling_hash: [u8; 32],
    },
    ViewCommitmentConflict {
        board_block: u64,
        report: ConflictReport,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    ViewPublished,
    ViewCommitmentConflict,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::ViewPublished { .. } => EventKind::ViewPublished,
            Event::ViewCommitmentConflict { .. } => EventKind::ViewCommitmentConflict,
        }
    }

    pub fn board_block(&self) -> u64 {
        match self {
            Event::ViewPublished { board_block, .. } | Event::ViewCommitmentConflict { board_block, .. } => {
                *board_block
            }
        }
    }

    pub fn height(&self) -> u64 {
        match self {
            Event::ViewPublished { height, .. } => *height,
            Event::ViewCommitmentConflict { report, .. } => report.height,
        }
    }

    pub fn member(&self) -> &MemberId {
        match self {
            Event::ViewPublished { member, .. } => member,
            Event::ViewCommitmentConflict { report, .. } => &report.reporter,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EventFilter {
    pub kind: Option<EventKind>,
    pub height: Option<u64>,
    pub member: Option<MemberId>,
}

impl EventFilter {
    pub fn matches(&self, e: &Event) -> bool {
        self.kind.is_none_or(|k| e.kind() == k)
            && self.height.is_none_or(|h| e.height() == h)
            && self.member.as_ref().is_none_or(|m| e.member() == m)
    }
}

/// Everything recorded for one ledger height.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeightRecord {
    /// First accepted submission (first writer wins).
    pub reference: Commitment,
    pub status: CommitmentStatus,
    /// Agreeing submissions in acceptance order, starting with the reference.
    pub submissions: Vec<Commitment>,
    pub disputed_at: Option<u64>,
}

impl HeightRecord {
    fn submitted_by(&self, m: &MemberId) -> bool {
        self.submissions.iter().any(|c| &c.submitter == m)
    }
}

/// Decides whether a member's later rolling hash chains over an earlier
/// `(z, H)`. The board only sees every k-th digest, so parties holding
/// full snapshot histories answer this.
pub trait ChainVerifier {
    fn chains_over(&self, member: &MemberId, later: &Commitment, earlier: &Commitment) -> bool;
}

/// Counts explicit endorsements only.
pub struct ExplicitOnly;

impl ChainVerifier for ExplicitOnly {
    fn chains_over(&self, _: &MemberId, _: &Commitment, _: &Commitment) -> bool {
        false
    }
}

impl ChainVerifier for fn(&MemberId, &Commitment, &Commitment) -> bool {
    fn chains_over(&self, member: &MemberId, later: &Commitment, earlier: &Commitment) -> bool {
        self(member, later, earlier)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Endorsements {
    pub explicit: BTreeSet<MemberId>,
    pub implicit: BTreeSet<MemberId>,
}

impl Endorsements {
    pub fn all(&self) -> BTreeSet<MemberId> {
        self.explicit.union(&self.implicit).cloned().collect()
    }
}

/// Operations as persisted in the append-only log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BoardOp {
    Register {
        members: CommitteeKeys,
        policy: Policy,
    },
    Publish {
        height: u64,
        member: MemberId,
        view: View,
        #[serde(rename = "h_hex", with = "hex_bytes32")]
        rolling_hash: [u8; 32],
        #[serde(rename = "sig_b64")]
        signature: Signature,
    },
    Report {
        height: u64,
        member: MemberId,
        view: View,
        #[serde(rename = "h_hex", with = "hex_bytes32")]
        rolling_hash: [u8; 32],
        #[serde(rename = "sig_b64")]
        signature: Signature,
    },
}

/// Bytes a member signs to publish `(view, H)` at `height`.
pub fn publish_message(height: u64, digest: &BigUint, rolling_hash: &[u8; 32]) -> Vec<u8> {
    submission_message(b"postate/publish/", height, digest, rolling_hash)
}

/// Bytes a member signs to report `(view, H)` at `height` as conflicting.
pub fn report_message(height: u64, digest: &BigUint, rolling_hash: &[u8; 32]) -> Vec<u8> {
    submission_message(b"postate/report/", height, digest, rolling_hash)
}

fn submission_message(domain: &[u8], height: u64, digest: &BigUint, rolling_hash: &[u8; 32]) -> Vec<u8> {
    let mut m = domain.to_vec();
    m.extend_from_slice(&height.to_be_bytes());
    m.extend_from_slice(to_hex(digest).as_bytes());
    m.push(b'/');
    m.extend_from_slice(rolling_hash);
    m
}

impl BoardOp {
    pub fn publish(key: &MemberKey, view: View, rolling_hash: [u8; 32]) -> Self {
        let signature = key.sign(&publish_message(view.height, &view.digest, &rolling_hash));
        BoardOp::Publish { height: view.height, member: key.id().clone(), view, rolling_hash, signature }
    }

    pub fn report(key: &MemberKey, view: View, rolling_hash: [u8; 32]) -> Self {
        let signature = key.sign(&report_message(view.height, &view.digest, &rolling_hash));
        BoardOp::Report { height: view.height, member: key.id().clone(), view, rolling_hash, signature }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BoardState {
    registry: CommitteeKeys,
    policy: Option<Policy>,
    records: BTreeMap<u64, HeightRecord>,
    conflicts: Vec<ConflictReport>,
    alerts: Vec<Alert>,
    events: Vec<Event>,
    op_log: Vec<BoardOp>,
    clock: u64,
}

impl BoardState {
    /// Board bootstrapped with the committee's public keys; clock at 0.
    pub fn register_committee(
        members: impl IntoIterator<Item = (MemberId, PublicKey)>,
        policy: Policy,
    ) -> Result<Self, BoardError> {
        let mut registry = CommitteeKeys::new();
        for (id, key) in members {
            if !registry.insert(id.clone(), key) {
                return Err(BoardError::DuplicateMember(id));
            }
        }
        if registry.is_empty() {
            return Err(BoardError::EmptyCommittee);
        }
        let op_log = vec![BoardOp::Register { members: registry.clone(), policy }];
        Ok(Self { registry, policy: Some(policy), op_log, ..Self::default() })
    }

    pub fn registry(&self) -> &CommitteeKeys {
        &self.registry
    }

    pub fn policy(&self) -> Option<&Policy> {
        self.policy.as_ref()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn conflicts(&self) -> &[ConflictReport] {
        &self.conflicts
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn op_log(&self) -> &[BoardOp] {
        &self.op_log
    }

    pub fn records(&self) -> &BTreeMap<u64, HeightRecord> {
        &self.records
    }

    pub fn record(&self, height: u64) -> Option<&HeightRecord> {
        self.records.get(&height)
    }

    /// Reference `(V, H)` at `height`, if any.
    pub fn get_commitment_for(&self, height: u64) -> Option<(&View, &[u8; 32])> {
        self.records.get(&height).map(|r| (&r.reference.view, &r.reference.rolling_hash))
    }

    /// Board block at which the reference at `height` was accepted.
    pub fn tau(&self, height: u64) -> Option<u64> {
        self.records.get(&height).map(|r| r.reference.board_block)
    }

    pub fn query_events(&self, filter: &EventFilter) -> Vec<&Event> {
        self.events.iter().filter(|e| filter.matches(e)).collect()
    }

    /// Ordered replay from board block `from` onwards.
    pub fn events_since(&self, from: u64) -> &[Event] {
        let idx = self.events.partition_point(|e| e.board_block() < from);
        &self.events[idx..]
    }

    fn authorize(&self, member: &MemberId, msg: &[u8], sig: &Signature) -> Result<(), BoardError> {
        let key = self.registry.get(member).ok_or_else(|| BoardError::Unregistered(member.clone()))?;
        if !key.verify(msg, sig) {
            return Err(BoardError::BadSignature(member.clone()));
        }
        Ok(())
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Apply a logged operation. `Register` is only valid as the first entry.
    pub fn apply(&mut self, op: BoardOp) -> Result<Vec<Event>, BoardError> {
        match op {
            BoardOp::Register { .. } => Err(BoardError::AlreadyRegistered),
            BoardOp::Publish { height, member, view, rolling_hash, signature } => {
                self.publish_view(height, &member, view, rolling_hash, &signature)
            }
            BoardOp::Report { height, member, view, rolling_hash, signature } => {
                self.report_view_conflict(height, &member, view, rolling_hash, &signature)
            }
        }
    }

    /// Record `m`'s commitment `(view, H)` at `height`. A submission that
    /// disagrees with the existing reference is handled as a conflict report.
    pub fn publish_view(
        &mut self,
        height: u64,
        member: &MemberId,
        view: View,
        rolling_hash: [u8; 32],
        signature: &Signature,
    ) -> Result<Vec<Event>, BoardError> {
        self.authorize(member, &publish_message(height, &view.digest, &rolling_hash), signature)?;
        if &view.signer != member || view.height != height || !view.signature_valid(&self.registry) {
            return Err(BoardError::MalformedView);
        }
        let op = BoardOp::Publish { height, member: member.clone(), view, rolling_hash, signature: *signature };
        let BoardOp::Publish { view, .. } = &op else { unreachable!() };
        let view = view.clone();

        if let Some(record) = self.records.get(&height) {
            if !record.reference.agrees_with(&view, &rolling_hash) {
                return Ok(self.conflict(height, member, view, rolling_hash, op));
            }
            if record.submitted_by(member) {
                return Ok(Vec::new());
            }
        } else if let Some(below) =
            height.checked_sub(1).and_then(|h| self.records.get(&h)).filter(|r| r.status == CommitmentStatus::Accepted)
        {
            let expected = rolling_hash_step(&below.reference.rolling_hash, &below.reference.view.digest);
            if expected != rolling_hash {
                let board_block = self.tick();
                self.alerts.push(Alert {
                    height,
                    reporter: member.clone(),
                    view,
                    rolling_hash,
                    reason: AlertReason::RollingHashMismatch,
                    board_block,
                });
                self.op_log.push(op);
                return Ok(Vec::new());
            }
        }

        let board_block = self.tick();
        let commitment = Commitment { view: view.clone(), rolling_hash, submitter: member.clone(), board_block };
        self.records.entry(height).and_modify(|r| r.submissions.push(commitment.clone())).or_insert_with(|| {
            HeightRecord {
                reference: commitment.clone(),
                status: CommitmentStatus::Accepted,
                submissions: vec![commitment],
                disputed_at: None,
            }
        });
        let event = Event::ViewPublished { board_block, height, member: member.clone(), view, rolling_hash };
        self.events.push(event.clone());
        self.op_log.push(op);
        Ok(vec![event])
    }

    /// Report `(view, H)` observed for `height` as conflicting with the board.
    pub fn report_view_conflict(
        &mut self,
        height: u64,
        member: &MemberId,
        view: View,
        rolling_hash: [u8; 32],
        signature: &Signature,
    ) -> Result<Vec<Event>, BoardError> {
        self.authorize(member, &report_message(height, &view.digest, &rolling_hash), signature)?;
        // The reported view must itself be a genuine member signature.
        if view.height != height || !view.signature_valid(&self.registry) {
            return Err(BoardError::MalformedView);
        }
        let op =
            BoardOp::Report { height, member: member.clone(), view: view.clone(), rolling_hash, signature: *signature };
        match self.records.get(&height) {
            Some(r) if r.reference.agrees_with(&view, &rolling_hash) => Ok(Vec::new()),
            Some(_) => Ok(self.conflict(height, member, view, rolling_hash, op)),
            None => {
                let board_block = self.tick();
                self.alerts.push(Alert {
                    height,
                    reporter: member.clone(),
                    view,
                    rolling_hash,
                    reason: AlertReason::NoReference,
                    board_block,
                });
                self.op_log.push(op);
                Ok(Vec::new())
            }
        }
    }

    fn conflict(&mut self, height: u64, reporter: &MemberId, view: View, hash: [u8; 32], op: BoardOp) -> Vec<Event> {
        let board_block = self.tick();
        let record = self.records.get_mut(&height).expect("conflict requires a reference");
        if record.status == CommitmentStatus::Accepted {
            record.status = CommitmentStatus::Disputed;
            record.disputed_at = Some(board_block);
        }
        let report = ConflictReport {
            height,
            reference: record.reference.clone(),
            conflicting_view: view,
            conflicting_hash: hash,
            reporter: reporter.clone(),
            board_block,
        };
        self.conflicts.push(report.clone());
        let event = Event::ViewCommitmentConflict { board_block, report };
        self.events.push(event.clone());
        self.op_log.push(op);
        vec![event]
    }

    /// Endorsements of the reference at `height` as of board block `at`:
    /// explicit from agreeing submitters, implicit from members whose later
    /// accepted submission chains over the reference.
    pub fn endorsements_at(&self, height: u64, at: u64, chain: &impl ChainVerifier) -> Endorsements {
        let mut out = Endorsements::default();
        let Some(record) = self.records.get(&height) else {
            return out;
        };
        out.explicit = record.submissions.iter().filter(|c| c.board_block <= at).map(|c| c.submitter.clone()).collect();
        for later in self.records.range(height + 1..).map(|(_, r)| r) {
            if later.disputed_at.is_some_and(|d| d <= at) {
                continue;
            }
            for c in later.submissions.iter().filter(|c| c.board_block <= at) {
                if !out.explicit.contains(&c.submitter)
                    && !out.implicit.contains(&c.submitter)
                    && chain.chains_over(&c.submitter, c, &record.reference)
                {
                    out.implicit.insert(c.submitter.clone());
                }
            }
        }
        out
    }

    pub fn endorsements(&self, height: u64, chain: &impl ChainVerifier) -> Endorsements {
        self.endorsements_at(height, self.clock, chain)
    }

    fn status_at(&self, record: &HeightRecord, at: u64) -> CommitmentStatus {
        match record.disputed_at {
            Some(d) if d <= at => CommitmentStatus::Disputed,
            _ => CommitmentStatus::Accepted,
        }
    }

    /// Views usable by a client assuming at most `c` colluders, as of board
    /// block `at`: accepted references with at least `c + 1` endorsers.
    pub fn safe_views_at(&self, c: usize, at: u64, chain: &impl ChainVerifier) -> Vec<TimedView> {
        let mut out: Vec<TimedView> = self
            .records
            .iter()
            .filter(|(_, r)| r.reference.board_block <= at && self.status_at(r, at) == CommitmentStatus::Accepted)
            .filter(|(h, _)| self.endorsements_at(**h, at, chain).all().len() > c)
            .map(|(_, r)| TimedView { tau: r.reference.board_block, view: r.reference.view.clone() })
            .collect();
        out.sort_by_key(|tv| tv.tau);
        out
    }

    pub fn safe_views(&self, c: usize, chain: &impl ChainVerifier) -> Vec<TimedView> {
        self.safe_views_at(c, self.clock, chain)
    }

    /// For a disputed height, every `(V, H)` on record and the members who
    /// endorse it, explicitly or through a later chained submission.
    pub fn dispute_sides(&self, height: u64, chain: &impl ChainVerifier) -> Vec<(Commitment, BTreeSet<MemberId>)> {
        let Some(record) = self.records.get(&height) else {
            return Vec::new();
        };
        let mut sides: Vec<(Commitment, BTreeSet<MemberId>)> = vec![(record.reference.clone(), BTreeSet::new())];
        for report in self.conflicts.iter().filter(|r| r.height == height) {
            let c = Commitment {
                view: report.conflicting_view.clone(),
                rolling_hash: report.conflicting_hash,
                submitter: report.conflicting_view.signer.clone(),
                board_block: report.board_block,
            };
            if !sides.iter().any(|(s, _)| s.agrees_with(&c.view, &c.rolling_hash)) {
                sides.push((c, BTreeSet::new()));
            }
        }
        for (side, endorsers) in &mut sides {
            endorsers.insert(side.submitter.clone());
            if side == &record.reference {
                endorsers.extend(record.submissions.iter().map(|c| c.submitter.clone()));
            }
            for later in self.records.range(height + 1..).flat_map(|(_, r)| &r.submissions) {
                if chain.chains_over(&later.submitter, later, side) {
                    endorsers.insert(later.submitter.clone());
                }
            }
        }
        sides
    }

    pub fn write_op_log<W: Write>(&self, mut out: W) -> Result<(), BoardError> {
        for op in &self.op_log {
            let line = serde_json::to_string(op).map_err(|e| BoardError::Parse { line: 0, msg: e.to_string() })?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Rebuild a board by replaying its operation log.
    pub fn replay<R: BufRead>(input: R) -> Result<Self, BoardError> {
        let mut board: Option<Self> = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |msg: String| BoardError::Parse { line: i + 1, msg };
            let op: BoardOp = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            match (&mut board, op) {
                (None, BoardOp::Register { members, policy }) => {
                    let members: Vec<_> = members.iter().map(|(id, k)| (id.clone(), *k)).collect();
                    board = Some(Self::register_committee(members, policy)?);
                }
                (None, _) => return Err(parse("log must start with a registration".into())),
                (Some(b), op) => {
                    b.apply(op)?;
                }
            }
        }
        board.ok_or(BoardError::Parse { line: 0, msg: "empty operation log".into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{genesis_rolling_hash, PublishStrategy};

    fn keys(n: usize) -> Vec<MemberKey> {
        (0..n).map(|i| MemberKey::derive(MemberId::indexed(i), b"board")).collect()
    }

    fn policy() -> Policy {
        Policy { failure_threshold: 1, round_interval: 1, publish_strategy: PublishStrategy::All, subcommittee_size: 2 }
    }

    fn board(ks: &[MemberKey]) -> BoardState {
        BoardState::register_committee(ks.iter().map(|k| (k.id().clone(), k.public())), policy()).unwrap()
    }

    fn publish(b: &mut BoardState, k: &MemberKey, z: u32, h: u64, hash: [u8; 32]) -> Result<Vec<Event>, BoardError> {
        b.apply(BoardOp::publish(k, View::sign(k, BigUint::from(z), h), hash))
    }

    #[test]
    fn registration() {
        let ks = keys(4);
        let mut b = board(&ks);
        assert_eq!(b.clock(), 0);
        for k in &ks {
            publish(&mut b, k, 7, 1, [1; 32]).unwrap();
        }
        let outsider = MemberKey::derive(MemberId::indexed(4), b"board");
        assert!(matches!(publish(&mut b, &outsider, 7, 1, [1; 32]), Err(BoardError::Unregistered(_))));
        assert_eq!(b.clock(), 4);
        assert!(matches!(BoardState::register_committee(vec![], policy()), Err(BoardError::EmptyCommittee)));
        let dup = [&ks[0], &ks[0]].map(|k| (k.id().clone(), k.public()));
        assert!(matches!(BoardState::register_committee(dup, policy()), Err(BoardError::DuplicateMember(_))));
    }

    #[test]
    fn bad_signatures_change_nothing() {
        let ks = keys(2);
        let mut b = board(&ks);
        let view = View::sign(&ks[0], BigUint::from(5u32), 1);
        let BoardOp::Publish { height, member, view, rolling_hash, .. } = BoardOp::publish(&ks[0], view, [0; 32])
        else {
            unreachable!()
        };
        let forged = ks[1].sign(&publish_message(height, &view.digest, &rolling_hash));
        assert!(matches!(
            b.publish_view(height, &member, view.clone(), rolling_hash, &forged),
            Err(BoardError::BadSignature(_))
        ));
        // a view signed by someone else cannot be submitted as one's own
        assert!(matches!(b.apply(BoardOp::publish(&ks[1], view, [0; 32])), Err(BoardError::MalformedView)));
        assert_eq!(b.clock(), 0);
        assert!(b.events().is_empty() && b.op_log().len() == 1);
    }

    #[test]
    fn agreement_and_conflict() {
        let ks = keys(3);
        let mut b = board(&ks);
        let ev = publish(&mut b, &ks[0], 7, 1, [1; 32]).unwrap();
        assert!(matches!(ev[..], [Event::ViewPublished { board_block: 1, height: 1, .. }]));
        publish(&mut b, &ks[1], 7, 1, [1; 32]).unwrap();
        assert_eq!(b.record(1).unwrap().submissions.len(), 2);
        assert_eq!(b.record(1).unwrap().status, CommitmentStatus::Accepted);
        // resubmission is a no-op
        assert!(publish(&mut b, &ks[1], 7, 1, [1; 32]).unwrap().is_empty());
        assert_eq!(b.clock(), 2);

        let ev = publish(&mut b, &ks[2], 8, 1, [1; 32]).unwrap();
        let [Event::ViewCommitmentConflict { report, .. }] = &ev[..] else { panic!("expected conflict") };
        assert_eq!(report.reference.view.digest, BigUint::from(7u32));
        assert_eq!(report.conflicting_view.digest, BigUint::from(8u32));
        let record = b.record(1).unwrap();
        assert_eq!(record.status, CommitmentStatus::Disputed);
        assert_eq!(record.disputed_at, Some(3));

        // a second, different conflicting report is logged without a second transition
        let v9 = View::sign(&ks[2], BigUint::from(9u32), 1);
        b.apply(BoardOp::report(&ks[0], v9, [2; 32])).unwrap();
        assert_eq!(b.conflicts().len(), 2);
        assert_eq!(b.record(1).unwrap().disputed_at, Some(3));
        // a report matching the reference is a no-op
        let v7 = View::sign(&ks[1], BigUint::from(7u32), 1);
        assert!(b.apply(BoardOp::report(&ks[0], v7, [1; 32])).unwrap().is_empty());
        assert_eq!(b.clock(), 4);
    }

    #[test]
    fn standalone_alerts() {
        let ks = keys(2);
        let mut b = board(&ks);
        let v = View::sign(&ks[1], BigUint::from(3u32), 5);
        assert!(b.apply(BoardOp::report(&ks[0], v, [0; 32])).unwrap().is_empty());
        assert_eq!(b.alerts()[0].reason, AlertReason::NoReference);
        assert!(b.record(5).is_none());

        // adjacent heights are chain-checked by the board itself
        let h0 = genesis_rolling_hash(b"c");
        publish(&mut b, &ks[0], 4, 0, h0).unwrap();
        publish(&mut b, &ks[1], 4, 1, [9; 32]).unwrap();
        assert_eq!(b.alerts()[1].reason, AlertReason::RollingHashMismatch);
        assert!(b.record(1).is_none());
        publish(&mut b, &ks[1], 4, 1, rolling_hash_step(&h0, &BigUint::from(4u32))).unwrap();
        assert!(b.record(1).is_some());
    }

    #[test]
    fn reads_and_filters() {
        let ks = keys(2);
        let mut b = board(&ks);
        assert!(b.get_commitment_for(1).is_none());
        publish(&mut b, &ks[0], 7, 1, [1; 32]).unwrap();
        publish(&mut b, &ks[1], 8, 1, [1; 32]).unwrap();
        publish(&mut b, &ks[1], 9, 3, [2; 32]).unwrap();
        assert_eq!(b.get_commitment_for(1).unwrap().0.digest, BigUint::from(7u32));
        assert_eq!(b.tau(3), Some(3));
        let conflicts = EventFilter { kind: Some(EventKind::ViewCommitmentConflict), ..Default::default() };
        assert_eq!(b.query_events(&conflicts).len(), 1);
        let by_m2 = EventFilter { member: Some(ks[1].id().clone()), ..Default::default() };
        assert_eq!(b.query_events(&by_m2).len(), 2);
        assert_eq!(b.events_since(2).len(), 2);
        assert_eq!(b.query_events(&EventFilter { height: Some(9), ..Default::default() }).len(), 0);
    }

    #[test]
    fn endorsements_and_safe_views() {
        let ks = keys(3);
        let mut b = board(&ks);
        publish(&mut b, &ks[0], 7, 1, [1; 32]).unwrap();
        publish(&mut b, &ks[1], 8, 3, [2; 32]).unwrap();
        publish(&mut b, &ks[2], 8, 3, [2; 32]).unwrap();
        // all later submitters are taken to chain over everything
        let yes: fn(&MemberId, &Commitment, &Commitment) -> bool = |_, _, _| true;
        let e = b.endorsements(1, &yes);
        assert_eq!(e.explicit.len(), 1);
        assert_eq!(e.implicit.len(), 2);
        assert_eq!(b.endorsements(1, &ExplicitOnly).all().len(), 1);

        assert_eq!(b.safe_views(0, &ExplicitOnly).len(), 2);
        assert_eq!(b.safe_views(1, &ExplicitOnly).len(), 1);
        assert_eq!(b.safe_views(2, &yes).len(), 1);
        // as of board block 1 only height 1 exists
        assert_eq!(b.safe_views_at(0, 1, &yes).len(), 1);

        publish(&mut b, &ks[0], 9, 3, [2; 32]).unwrap();
        assert!(b.safe_views(0, &yes).iter().all(|tv| tv.view.height != 3));
        // the dispute at height 3 voids its submissions as implicit endorsements
        assert!(b.endorsements(1, &yes).implicit.is_empty());
        let sides = b.dispute_sides(3, &ExplicitOnly);
        assert_eq!(sides.len(), 2);
        assert_eq!(sides[0].1.len(), 2);
        assert_eq!(sides[1].1.iter().collect::<Vec<_>>(), [ks[0].id()]);
    }

    #[test]
    fn op_log_replay() {
        let ks = keys(3);
        let mut b = board(&ks);
        publish(&mut b, &ks[0], 7, 1, [1; 32]).unwrap();
        publish(&mut b, &ks[1], 8, 1, [1; 32]).unwrap();
        b.apply(BoardOp::report(&ks[2], View::sign(&ks[1], BigUint::from(3u32), 4), [0; 32])).unwrap();
        let mut buf = Vec::new();
        b.write_op_log(&mut buf).unwrap();
        let r = BoardState::replay(&buf[..]).unwrap();
        assert_eq!(r.events(), b.events());
        assert_eq!(r.records(), b.records());
        assert_eq!(r.alerts(), b.alerts());
        assert_eq!(r.clock(), b.clock());
        assert!(BoardState::replay(&b"{\"op\":\"publish\"}\n"[..]).is_err());
    }
}

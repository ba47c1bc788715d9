mod common;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use proptest::prelude::*;

use common::policy;
use postate::bulletin::{
    publish_message, report_message, Alert, BoardError, BoardOp, BoardState, CommitmentStatus, ConflictReport, Event,
    EventKind, HeightRecord,
};
use postate::identity::{MemberId, MemberKey};
use postate::ledger::rolling_hash_step;
use postate::proofs::View;

const MEMBERS: usize = 4;

/// Members `0..MEMBERS` are registered; index `MEMBERS` is an outsider.
fn keys() -> Vec<MemberKey> {
    let mut ks: Vec<MemberKey> =
        (0..MEMBERS).map(|i| MemberKey::derive(MemberId::indexed(i), b"board-props")).collect();
    ks.push(MemberKey::derive(MemberId::new("outsider"), b"board-props"));
    ks
}

fn board(ks: &[MemberKey]) -> BoardState {
    BoardState::register_committee(ks[..MEMBERS].iter().map(|k| (k.id().clone(), k.public())), policy()).unwrap()
}

#[derive(Clone, Debug)]
struct FuzzOp {
    actor: usize,
    view_signer: usize,
    report: bool,
    height: u64,
    digest: u32,
    /// 0 chains over the reference one height below; otherwise a fixed value.
    hash: u8,
    /// Signature over the message by another key.
    forge_signature: bool,
}

fn arb_op() -> impl Strategy<Value = FuzzOp> {
    (
        0..=MEMBERS,
        prop_oneof![4 => Just(None), 1 => (0..=MEMBERS).prop_map(Some)],
        prop::bool::weighted(0.25),
        1u64..6,
        0u32..3,
        0u8..3,
        prop::bool::weighted(0.1),
    )
        .prop_map(|(actor, signer, report, height, digest, hash, forge_signature)| FuzzOp {
            actor,
            view_signer: signer.unwrap_or(actor),
            report,
            height,
            digest,
            hash,
            forge_signature,
        })
}

impl FuzzOp {
    fn build(&self, ks: &[MemberKey], b: &BoardState) -> BoardOp {
        let hash = match self.hash {
            0 => b.get_commitment_for(self.height - 1).map_or([0; 32], |(v, h)| rolling_hash_step(h, &v.digest)),
            n => [n; 32],
        };
        let view = View::sign(&ks[self.view_signer], BigUint::from(self.digest), self.height);
        let key = &ks[self.actor];
        let mut op = if self.report { BoardOp::report(key, view, hash) } else { BoardOp::publish(key, view, hash) };
        if self.forge_signature {
            let other = &ks[(self.actor + 1) % ks.len()];
            match &mut op {
                BoardOp::Publish { view, rolling_hash, signature, .. } => {
                    *signature = other.sign(&publish_message(self.height, &view.digest, rolling_hash));
                }
                BoardOp::Report { view, rolling_hash, signature, .. } => {
                    *signature = other.sign(&report_message(self.height, &view.digest, rolling_hash));
                }
                BoardOp::Register { .. } => unreachable!(),
            }
        }
        op
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Snapshot {
    clock: u64,
    events: Vec<Event>,
    conflicts: Vec<ConflictReport>,
    alerts: Vec<Alert>,
    op_log: Vec<BoardOp>,
    records: BTreeMap<u64, HeightRecord>,
}

fn snapshot(b: &BoardState) -> Snapshot {
    Snapshot {
        clock: b.clock(),
        events: b.events().to_vec(),
        conflicts: b.conflicts().to_vec(),
        alerts: b.alerts().to_vec(),
        op_log: b.op_log().to_vec(),
        records: b.records().clone(),
    }
}

fn is_prefix<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    a.len() <= b.len() && a == &b[..a.len()]
}

fn check_append_only(before: &Snapshot, after: &Snapshot) -> Result<(), TestCaseError> {
    prop_assert!(is_prefix(&before.events, &after.events));
    prop_assert!(is_prefix(&before.conflicts, &after.conflicts));
    prop_assert!(is_prefix(&before.alerts, &after.alerts));
    prop_assert!(is_prefix(&before.op_log, &after.op_log));
    for (h, r) in &before.records {
        let now = &after.records[h];
        prop_assert_eq!(&now.reference, &r.reference);
        prop_assert!(is_prefix(&r.submissions, &now.submissions));
        if r.disputed_at.is_some() {
            prop_assert_eq!(now.disputed_at, r.disputed_at);
            prop_assert_eq!(now.status, CommitmentStatus::Disputed);
        }
    }
    Ok(())
}

/// Applies `ops` and checks every per-step invariant; returns the board and
/// the heights that saw a submission diverging from their reference.
fn run_fuzz(ops: &[FuzzOp]) -> Result<(BoardState, BTreeSet<u64>), TestCaseError> {
    let ks = keys();
    let mut b = board(&ks);
    let mut divergent = BTreeSet::new();
    for f in ops {
        let op = f.build(&ks, &b);
        let before = snapshot(&b);
        let result = b.apply(op.clone());
        let after = snapshot(&b);
        let unauthorized = f.actor == MEMBERS || f.forge_signature;
        match result {
            Err(e) => {
                prop_assert_eq!(&after, &before);
                if unauthorized {
                    prop_assert!(matches!(e, BoardError::Unregistered(_) | BoardError::BadSignature(_)), "{e}");
                }
                continue;
            }
            Ok(events) => {
                prop_assert!(!unauthorized, "unauthorized op accepted: {f:?}");
                let ticks = after.clock - before.clock;
                prop_assert!(ticks <= 1);
                prop_assert_eq!(after.op_log.len() - before.op_log.len(), ticks as usize);
                if ticks == 0 {
                    prop_assert_eq!(&after, &before);
                }
                prop_assert_eq!(&after.events[before.events.len()..], &events[..]);
                prop_assert!(events.iter().all(|e| e.board_block() == after.clock));
            }
        }
        check_append_only(&before, &after)?;
        let (BoardOp::Publish { view, rolling_hash, .. } | BoardOp::Report { view, rolling_hash, .. }) = &op else {
            unreachable!()
        };
        if let Some(r) = before.records.get(&f.height) {
            if !r.reference.agrees_with(view, rolling_hash) {
                divergent.insert(f.height);
            }
        }
    }
    Ok((b, divergent))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fuzzed_boards_keep_their_invariants(ops in proptest::collection::vec(arb_op(), 0..60)) {
        let (b, divergent) = run_fuzz(&ops)?;

        // the clock counts accepted mutations, and events are strictly ordered by it
        prop_assert_eq!(b.op_log().len() as u64, b.clock() + 1);
        prop_assert!(b.events().windows(2).all(|w| w[0].board_block() < w[1].board_block()));

        // distinct heights never share a clock value
        let taus: BTreeSet<u64> = b.records().keys().map(|&h| b.tau(h).unwrap()).collect();
        prop_assert_eq!(taus.len(), b.records().len());

        for (h, r) in b.records() {
            let conflict_events = b
                .events()
                .iter()
                .filter(|e| e.kind() == EventKind::ViewCommitmentConflict && e.height() == *h)
                .count();
            if divergent.contains(h) {
                prop_assert_eq!(r.status, CommitmentStatus::Disputed);
                let at = r.disputed_at.unwrap();
                prop_assert!(conflict_events >= 1);
                let first = b.conflicts().iter().find(|c| c.height == *h).unwrap();
                prop_assert_eq!(first.board_block, at);
            } else {
                prop_assert_eq!(r.status, CommitmentStatus::Accepted);
                prop_assert_eq!(r.disputed_at, None);
                prop_assert_eq!(conflict_events, 0);
            }
            prop_assert!(r.submissions.iter().all(|c| r.reference.agrees_with(&c.view, &c.rolling_hash)));
            prop_assert_eq!(&r.submissions[0], &r.reference);
        }

        // every accepted operation is attributable to a registered member
        for op in &b.op_log()[1..] {
            let (BoardOp::Publish { member, .. } | BoardOp::Report { member, .. }) = op else {
                return Err(TestCaseError::fail("registration after bootstrap"));
            };
            prop_assert!(b.registry().get(member).is_some());
        }

        let mut log = Vec::new();
        b.write_op_log(&mut log).unwrap();
        let replayed = BoardState::replay(log.as_slice()).unwrap();
        prop_assert_eq!(snapshot(&replayed), snapshot(&b));
    }
}

#[test]
fn outsider_flood_changes_nothing() {
    let ks = keys();
    let mut b = board(&ks);
    b.apply(BoardOp::publish(&ks[0], View::sign(&ks[0], BigUint::from(3u32), 1), [1; 32])).unwrap();
    let before = snapshot(&b);
    let outsider = &ks[MEMBERS];
    for h in 0..20u64 {
        let own = View::sign(outsider, BigUint::from(h), h);
        assert!(b.apply(BoardOp::publish(outsider, own.clone(), [2; 32])).is_err());
        assert!(b.apply(BoardOp::report(outsider, own, [2; 32])).is_err());
        // a genuine member view relayed by the outsider is still refused
        let relayed = View::sign(&ks[1], BigUint::from(h + 100), 1);
        assert!(b.apply(BoardOp::report(outsider, relayed, [2; 32])).is_err());
    }
    assert_eq!(snapshot(&b), before);
}

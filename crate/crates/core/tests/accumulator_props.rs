mod common;

use std::collections::BTreeMap;

use num_bigint::BigUint;
use proptest::prelude::*;

use common::*;
use postate::accumulator::{verify_membership, AccumulatorState, Witness};

#[derive(Clone, Debug)]
enum Op {
    Add(u8),
    Delete(u8),
}

fn arb_ops(max: usize) -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(prop_oneof![(0u8..8).prop_map(Op::Add), (0u8..8).prop_map(Op::Delete)], 0..=max)
}

fn element(i: u8) -> Vec<u8> {
    format!("element-{i}").into_bytes()
}

/// Applies the ops that are legal at each step, skipping the rest.
fn apply(ops: &[Op], state: &mut AccumulatorState) {
    for op in ops {
        match op {
            Op::Add(i) if !state.contains(&element(*i)) => {
                state.add(&element(*i)).unwrap();
            }
            Op::Delete(i) if state.contains(&element(*i)) => {
                state.delete(&element(*i)).unwrap();
            }
            _ => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interleaved_schedules_equal_direct_accumulation(ops in arb_ops(20)) {
        let (params, trapdoor) = toy();
        let mut state = AccumulatorState::new(params.clone(), Some(trapdoor.clone()));
        apply(&ops, &mut state);
        let primes: Vec<&BigUint> = state.members().values().map(|r| &r.prime).collect();
        prop_assert_eq!(state.value(), &accumulate_oracle(&params, &primes));

        let mut direct = AccumulatorState::new(params, Some(trapdoor));
        for e in state.members().keys() {
            direct.add(e).unwrap();
        }
        prop_assert_eq!(direct.value(), state.value());
        prop_assert_eq!(direct.members(), state.members());
    }

    #[test]
    fn every_member_has_a_verifying_witness(ops in arb_ops(20)) {
        let (params, trapdoor) = small().clone();
        let mut state = AccumulatorState::new(params.clone(), Some(trapdoor));
        apply(&ops, &mut state);
        for (e, rep) in state.members() {
            let w = state.witness_membership(e).unwrap();
            prop_assert!(w.holds(&params));
            prop_assert!(verify_membership(&params, state.value(), e, rep, &w.value));
        }
    }

    #[test]
    fn maintained_witnesses_equal_fresh_ones(ops in arb_ops(20)) {
        let (params, trapdoor) = toy();
        let mut state = AccumulatorState::new(params.clone(), Some(trapdoor));
        let mut held: BTreeMap<Vec<u8>, Witness> = BTreeMap::new();
        for op in &ops {
            match op {
                Op::Add(i) if !state.contains(&element(*i)) => {
                    let rep = state.add(&element(*i)).unwrap();
                    for w in held.values_mut() {
                        *w = w.update_on_add(&rep.prime, state.value(), &params);
                    }
                    held.insert(element(*i), state.witness_membership(&element(*i)).unwrap());
                }
                Op::Delete(i) if state.contains(&element(*i)) => {
                    held.remove(&element(*i));
                    let rep = state.delete(&element(*i)).unwrap();
                    for w in held.values_mut() {
                        *w = w.update_on_delete(&rep.prime, state.value(), &params).unwrap();
                    }
                }
                _ => {}
            }
            for (e, w) in &held {
                prop_assert!(w.holds(&params));
                prop_assert_eq!(&w.value, &state.witness_membership(e).unwrap().value);
            }
        }
    }

    #[test]
    fn identical_schedules_give_identical_states(ops in arb_ops(12)) {
        let (params, trapdoor) = small().clone();
        let mut a = AccumulatorState::new(params.clone(), Some(trapdoor.clone()));
        let mut b = AccumulatorState::new(params, Some(trapdoor));
        apply(&ops, &mut a);
        apply(&ops, &mut b);
        prop_assert_eq!(a.value(), b.value());
        prop_assert_eq!(a.members(), b.members());
    }

    #[test]
    fn batch_update_equals_sequential_updates(ops in arb_ops(12), extra in proptest::collection::btree_set(8u8..12, 0..4)) {
        let (params, trapdoor) = toy();
        let mut state = AccumulatorState::new(params, Some(trapdoor));
        apply(&ops, &mut state);
        let deletes: Vec<Vec<u8>> = state.members().keys().take(2).cloned().collect();
        let adds: Vec<Vec<u8>> = extra.iter().map(|&i| element(i)).collect();
        let mut sequential = state.clone();
        for d in &deletes {
            sequential.delete(d).unwrap();
        }
        for a in &adds {
            sequential.add(a).unwrap();
        }
        state.apply_batch(&deletes, &adds).unwrap();
        prop_assert_eq!(state.value(), sequential.value());
        prop_assert_eq!(state.members(), sequential.members());
    }
}

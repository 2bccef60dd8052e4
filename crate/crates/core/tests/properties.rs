mod common;

use std::collections::BTreeSet;

use beda_core::belief::{pairwise_order_agreement, BeliefVector, DialogueContext, Perspective};
use beda_core::epistemic::{ActKind, PartitionModel, StateEvent};
use beda_core::games::casino::{casino_reward, Item, Preference, STOCK};
use beda_core::games::ckbg::{self, condition_block_events, generate_dataset, ConditionCount};
use beda_core::games::{Agent, Method};
use beda_core::generation::{parse_action, ActionGrammar, Deal};
use beda_core::seed::derive_seed;
use beda_core::selection::{choose, feasible_set, mixed_select, ActConstraint, SelectionPolicy};
use common::{oracle_agent, rules};
use proptest::prelude::*;

/// State labels in 0..k, one per state, with every label used.
fn partition(max_states: usize) -> impl Strategy<Value = (usize, Vec<Vec<String>>)> {
    (1..=max_states)
        .prop_flat_map(|n| (Just(n), proptest::collection::vec(0..n, n)))
        .prop_map(|(n, labels)| {
            let mut cells: Vec<Vec<String>> = Vec::new();
            let mut seen = Vec::new();
            for (s, l) in labels.iter().enumerate() {
                match seen.iter().position(|x| x == l) {
                    Some(i) => cells[i].push(format!("s{s}")),
                    None => {
                        seen.push(*l);
                        cells.push(vec![format!("s{s}")]);
                    }
                }
            }
            (n, cells)
        })
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|s| format!("s{s}")).collect()
}

fn unit_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![0.0..=1.0, Just(0.0), Just(0.5), Just(1.0)], len)
}

fn vector_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..20).prop_flat_map(|n| (unit_vec(n), unit_vec(n)))
}

proptest! {
    #[test]
    fn knowledge_is_truthful_and_idempotent((n, cells) in partition(8), e in any::<u64>(), f in any::<u64>()) {
        let model = PartitionModel::with_uniform_prior(&names(n), &cells).unwrap();
        let full = (1u64 << n) - 1;
        let e = StateEvent::from_mask(n, e & full);
        let f = StateEvent::from_mask(n, f & full);
        let ke = model.knowledge(&e);
        prop_assert!(ke.is_subset(&e));
        prop_assert_eq!(model.knowledge(&ke), ke.clone());
        prop_assert_eq!(model.knowledge(&e.intersection(&f)), ke.intersection(&model.knowledge(&f)));
        if e.is_subset(&f) {
            prop_assert!(ke.is_subset(&model.knowledge(&f)));
        }
        let union = model
            .cells()
            .iter()
            .filter(|c| c.is_subset(&e))
            .fold(StateEvent::empty(n), |acc, c| acc.union(c));
        prop_assert_eq!(ke, union);
    }

    #[test]
    fn acts_are_exclusive_below_half((a, b) in vector_pair(), epsilon in 0.0..0.5f64) {
        let a = BeliefVector::new(Perspective::SelfTruth, a).unwrap();
        let b = BeliefVector::new(Perspective::OpponentKnows, b).unwrap();
        let adv = feasible_set(&a, &b, ActConstraint::new(ActKind::Adversarial, epsilon).unwrap()).unwrap();
        let align = feasible_set(&a, &b, ActConstraint::new(ActKind::Alignment, epsilon).unwrap()).unwrap();
        prop_assert!(adv.is_disjoint(&align));
    }

    #[test]
    fn feasible_sets_grow_with_epsilon((a, b) in vector_pair(), lo in 0.0..0.5f64, delta in 0.0..0.49f64) {
        let a = BeliefVector::new(Perspective::SelfTruth, a).unwrap();
        let b = BeliefVector::new(Perspective::OpponentKnows, b).unwrap();
        for act in [ActKind::Adversarial, ActKind::Alignment] {
            let tight = feasible_set(&a, &b, ActConstraint::new(act, lo).unwrap()).unwrap();
            let loose = feasible_set(&a, &b, ActConstraint::new(act, lo + delta).unwrap()).unwrap();
            prop_assert!(tight.is_subset(&loose));
        }
    }

    #[test]
    fn choices_stay_in_feasible_set(feasible in proptest::collection::btree_set(0usize..50, 0..12), k in 1usize..8, seed in any::<u64>()) {
        for policy in [SelectionPolicy::All, SelectionPolicy::UniformOne, SelectionPolicy::UniformK(k)] {
            let r = choose(&feasible, policy, seed);
            prop_assert_eq!(r.fallback, feasible.is_empty());
            prop_assert!(r.chosen.iter().all(|c| feasible.contains(c)));
            let distinct: BTreeSet<_> = r.chosen.iter().collect();
            prop_assert_eq!(distinct.len(), r.chosen.len());
            let expected = match (feasible.is_empty(), policy) {
                (true, _) => 0,
                (false, SelectionPolicy::All) => feasible.len(),
                (false, SelectionPolicy::UniformOne) => 1,
                (false, SelectionPolicy::UniformK(k)) => k.min(feasible.len()),
            };
            prop_assert_eq!(r.chosen.len(), expected);
            prop_assert_eq!(choose(&feasible, policy, seed), r);
        }
    }

    #[test]
    fn mixed_selection_respects_halves(a in unit_vec(24), b in unit_vec(24), seed in any::<u64>()) {
        let a = BeliefVector::new(Perspective::SelfTruth, a).unwrap();
        let b = BeliefVector::new(Perspective::OpponentKnows, b).unwrap();
        let m = mixed_select(&a, &b, 0.5, seed).unwrap();
        prop_assert!(m.alignment.chosen.iter().all(|&i| i < 12));
        prop_assert!(m.adversarial.chosen.iter().all(|&i| i >= 12));
        prop_assert!(m.alignment.chosen.len() <= 1 && m.adversarial.chosen.len() <= 1);
    }

    #[test]
    fn out_of_range_beliefs_rejected(v in prop_oneof![1.0000001..10.0f64, -10.0..-0.0000001f64]) {
        prop_assert!(BeliefVector::new(Perspective::SelfTruth, vec![0.5, v]).is_err());
    }

    #[test]
    fn reward_matches_rank_weights(p in 0usize..6, food in 0u32..=STOCK, water in 0u32..=STOCK, firewood in 0u32..=STOCK) {
        let pref = Preference::ALL[p];
        let deal = Deal::new(food, water, firewood);
        let points = [5, 4, 3];
        let expected: u32 = [(Item::Food, food), (Item::Water, water), (Item::Firewood, firewood)]
            .iter()
            .map(|&(item, n)| n * points[pref.rank(item)])
            .sum();
        prop_assert_eq!(casino_reward(&pref, &deal).unwrap(), expected);
        let other = deal.complement(STOCK).unwrap();
        prop_assert!(deal.complements(&other, STOCK));
        let total = casino_reward(&pref, &deal).unwrap() + casino_reward(&pref, &other).unwrap();
        prop_assert_eq!(total, 36);
    }

    #[test]
    fn pairwise_agreement_is_symmetric(p in 0usize..6, q in 0usize..6) {
        let key_p = Preference::ALL[p].key();
        let key_q = Preference::ALL[q].key();
        let a: Vec<&str> = key_p.split(',').collect();
        let b: Vec<&str> = key_q.split(',').collect();
        let s = pairwise_order_agreement(&a, &b);
        prop_assert_eq!(s, pairwise_order_agreement(&b, &a));
        prop_assert!([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].contains(&s));
        prop_assert_eq!(s == 1.0, p == q);
    }

    #[test]
    fn derived_seeds_are_stable(parts in proptest::collection::vec(any::<u64>(), 1..5), extra in any::<u64>()) {
        prop_assert_eq!(derive_seed(&parts), derive_seed(&parts.clone()));
        let mut longer = parts.clone();
        longer.push(extra);
        prop_assert_ne!(derive_seed(&parts), derive_seed(&longer));
    }

    #[test]
    fn parser_never_panics(text in ".{0,80}") {
        let containers = vec!["red box".to_owned(), "blue bag".to_owned()];
        let friends = vec![vec!["Reed College".to_owned()], vec!["Boston College".to_owned()]];
        parse_action(&ActionGrammar::Ckbg { containers }, &text);
        parse_action(&ActionGrammar::Mf { friends }, &text);
        parse_action(&ActionGrammar::Casino, &text);
    }

    #[test]
    fn clipping_drops_final_turns(turns in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,4}", 0..8), k in 0usize..10) {
        let mut ctx = DialogueContext::default();
        for (i, t) in turns.iter().enumerate() {
            ctx.push(if i % 2 == 0 { "Ann" } else { "Bob" }, t.clone());
        }
        let clipped = ctx.clipped(k);
        prop_assert_eq!(clipped.turns.len(), turns.len().saturating_sub(k));
        prop_assert_eq!(&clipped.turns[..], &ctx.turns[..clipped.turns.len()]);
    }
}

#[test]
fn keeper_block_is_known_minus_burglar_known() {
    let (settings, _) = generate_dataset(200, &ConditionCount::train_preset(), 31).unwrap();
    let keeper = oracle_agent(Method::Beda);
    let burglar = Agent::plain(rules());
    for setting in &settings {
        let ep = ckbg::run_episode(setting, &keeper, &burglar, ckbg::DEFAULT_MAX_TURNS).unwrap();
        let expected: BTreeSet<usize> = setting
            .keeper_known
            .difference(&setting.burglar_known)
            .copied()
            .collect();
        let mut conditioned = 0;
        for turn in ep.transcript.iter().filter(|t| !t.selections.is_empty()) {
            assert_eq!(
                condition_block_events(setting, &turn.prompt.system),
                expected,
                "{}",
                setting.id
            );
            conditioned += 1;
        }
        assert!(conditioned > 0, "{}", setting.id);
    }
}

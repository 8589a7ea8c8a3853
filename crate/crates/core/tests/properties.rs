mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{fixpoint_success, grow, simple_path_costs, RandomGraph};
use synthplan::costmodel::{zeroed_value_net, CostModel, ValueNetConfig};
use synthplan::molspace::{IntegerDomain, MoleculeId, TableDomain};
use synthplan::numerics::margin_rank;
use synthplan::planner::{plan, select_next, PlanConfig, SearchMode};
use synthplan::policygnn::softmax;
use synthplan::searchgraph::{NodeId, SearchGraph};

const CYCLIC: RandomGraph = RandomGraph {
    pool: 40,
    max_nodes: 120,
    max_reactions: 3,
    max_reactants: 3,
    cycle_rate: 0.2,
    inventory_rate: 0.25,
};

const SMALL: RandomGraph = RandomGraph {
    pool: 12,
    max_nodes: 40,
    max_reactions: 2,
    max_reactants: 2,
    cycle_rate: 0.2,
    inventory_rate: 0.25,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_success_is_the_least_fixpoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mismatch = None;
        grow(&mut rng, CYCLIC, true, |g| {
            let (want, _) = fixpoint_success(g);
            let got: Vec<bool> = (0..g.len()).map(|i| g.success(NodeId(i))).collect();
            if got != want && mismatch.is_none() {
                mismatch = Some(g.len());
            }
        });
        prop_assert_eq!(mismatch, None);
    }

    #[test]
    fn full_recompute_agrees_with_incremental(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = grow(&mut rng, CYCLIC, true, |_| {});
        let mut fresh = g.clone();
        fresh.recompute_success();
        fresh.recompute_hist_costs();
        for i in 0..g.len() {
            prop_assert_eq!(g.success(NodeId(i)), fresh.success(NodeId(i)));
            prop_assert_eq!(g.hist_cost(NodeId(i)), fresh.hist_cost(NodeId(i)));
        }
    }

    #[test]
    fn success_and_cost_are_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev: Vec<(bool, f64)> = Vec::new();
        let mut broken = false;
        grow(&mut rng, CYCLIC, true, |g| {
            for (i, &(s, c)) in prev.iter().enumerate() {
                let v = NodeId(i);
                if (s && !g.success(v)) || g.hist_cost(v) > c {
                    broken = true;
                }
            }
            prev = (0..g.len()).map(|i| (g.success(NodeId(i)), g.hist_cost(NodeId(i)))).collect();
        });
        prop_assert!(!broken);
    }

    #[test]
    fn hist_cost_is_cheapest_simple_path(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = grow(&mut rng, SMALL, true, |_| {});
        prop_assert!(g.molecule_count() <= 12);
        let want = simple_path_costs(&g);
        for (i, w) in want.iter().enumerate() {
            let got = g.hist_cost(NodeId(i));
            prop_assert!((got - w).abs() <= 1e-9, "node {}: {} vs {}", i, got, w);
        }
    }

    #[test]
    fn graph_mode_keeps_one_node_per_molecule(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ok = true;
        grow(&mut rng, CYCLIC, true, |g| {
            ok &= g.molecule_count() == g.distinct_molecules() && g.check_invariants().is_ok();
        });
        prop_assert!(ok);
    }

    #[test]
    fn tree_mode_gives_every_reactant_its_own_node(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = grow(&mut rng, CYCLIC, false, |_| {});
        for (v, n) in g.nodes() {
            if n.is_molecule() && !g.is_target(v) {
                prop_assert_eq!(n.predecessors().len(), 1);
            }
        }
        prop_assert!(!common::has_cycle(&g));
    }

    #[test]
    fn argmin_ignores_a_constant_heuristic(seed in any::<u64>(), shift in 0.5f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = grow(&mut rng, RandomGraph { max_nodes: 50, ..CYCLIC }, true, |_| {});
        prop_assume!(!g.open_nodes().is_empty());
        let config = ValueNetConfig { feature_bits: 64, hidden: 4 };
        let zero = CostModel::Value(zeroed_value_net(config).unwrap());
        let mut net = zeroed_value_net(config).unwrap();
        net.params.get_mut(3)[[0, 0]] = shift;
        let shifted = CostModel::Value(net);
        let oracle = TableDomain::from_reactions("empty", []);
        prop_assert_eq!(
            select_next(&g, &zero, &oracle).unwrap(),
            select_next(&g, &shifted, &oracle).unwrap()
        );
        prop_assert_eq!(select_next(&g, &zero, &oracle).unwrap(), select_next(&g, &CostModel::Zero, &oracle).unwrap());
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        logits in prop::collection::vec(-30.0f64..30.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| x > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let moved: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        for (a, b) in p.iter().zip(softmax(&moved)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rank_loss_vanishes_exactly_at_the_margin(
        pos in prop::collection::vec(-10.0f64..10.0, 1..6),
        neg in prop::collection::vec(-10.0f64..10.0, 1..6),
    ) {
        let l = margin_rank(&pos, &neg, 4.0);
        prop_assert!(l >= 0.0);
        let separated = pos.iter().all(|p| neg.iter().all(|n| p - n >= 4.0));
        prop_assert_eq!(l == 0.0, separated);
    }

    #[test]
    fn planning_respects_budget_and_dedup(seed in 0u64..1000, target in 20u64..200, budget in 1usize..40) {
        let domain = IntegerDomain::factor(seed);
        let inv = IntegerDomain::inventory(3);
        let t = MoleculeId::new(target.to_string());
        let r = plan(&[t.clone()], &domain, &inv, &CostModel::Zero, &PlanConfig { budget, k: 10, mode: SearchMode::Graph }).unwrap();
        prop_assert!(r.iterations <= budget);
        prop_assert_eq!(r.molecule_node_count, r.distinct_molecules);
        if let Some(route) = &r.targets[0].route {
            route.validate(&inv).unwrap();
            route.verify_with_oracle(&domain, 10).unwrap();
        }
    }
}

#[test]
fn graphs_without_inventory_never_succeed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = RandomGraph { inventory_rate: 0.0, ..CYCLIC };
    for _ in 0..50 {
        let (g, inv) = grow(&mut rng, shape, true, |_| {});
        assert!(inv.is_empty());
        assert!((0..g.len()).all(|i| !g.success(NodeId(i))));
    }
    let mut g = SearchGraph::new();
    let empty = synthplan::molspace::Inventory::new();
    let a = MoleculeId::new("a");
    let b = MoleculeId::new("b");
    let v = g.add_target(&a, &empty);
    let rx = synthplan::molspace::Reaction::new(a.clone(), [b.clone()], 1.0).unwrap();
    let aff = g.merge_expand(v, &[rx], &empty).unwrap();
    g.propagate_update(&aff);
    let w = g.lookup(&b).unwrap();
    let back = synthplan::molspace::Reaction::new(b, [a], 1.0).unwrap();
    let aff = g.merge_expand(w, &[back], &empty).unwrap();
    g.propagate_update(&aff);
    assert!(common::has_cycle(&g));
    assert!(!g.success(v) && !g.success(w));
}

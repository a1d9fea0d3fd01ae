use std::collections::BTreeMap;

use proptest::prelude::*;
use renet::ego_tree::{EgoTree, RouteDown};
use renet::entropy::{
    averaged_entropy_bounds, conditional_entropy, entropy, joint_entropy, marginals, max_conditional_entropy,
    symmetrize, Direction, FreqDist, JointFreq, COMPOSED_TOL, EXACT_TOL,
};
use renet::experiment::replay;
use renet::metrics::{average_cost, window_report};
use renet::renet::NetParams;
use renet::trace::{build_demand_graph, generate, sparsity_check, NodeId, SparsityParams, Trace, WorkloadSpec};

fn joint() -> impl Strategy<Value = JointFreq> {
    prop::collection::btree_map((0u64..6, 0u64..6), 1u64..40, 1..20).prop_map(|m| {
        let m: BTreeMap<(NodeId, NodeId), u64> = m.into_iter().map(|((x, y), c)| ((NodeId(x), NodeId(y)), c)).collect();
        JointFreq::from_counts(m.iter()).unwrap()
    })
}

fn probs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_map(|mut w| {
        if w.iter().all(|x| *x == 0.0) {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn small_trace() -> impl Strategy<Value = Trace> {
    (4u64..20, prop::collection::vec((0u64..20, 1u64..20), 1..300)).prop_map(|(n, raw)| {
        let pairs: Vec<(u64, u64)> = raw.into_iter().map(|(u, d)| (u % n, (u % n + d % (n - 1) + 1) % n)).collect();
        Trace::from_pairs(n as usize, &pairs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn chain_rule_and_conditioning(j in joint()) {
        let (x, y) = marginals(&j);
        let (hx, hy) = (entropy(&x, 2.0).unwrap(), entropy(&y, 2.0).unwrap());
        let hxy = joint_entropy(&j, 2.0).unwrap();
        let hy_x = conditional_entropy(&j, Direction::YgivenX, 2.0).unwrap();
        let hx_y = conditional_entropy(&j, Direction::XgivenY, 2.0).unwrap();
        prop_assert!((hxy - hx - hy_x).abs() <= COMPOSED_TOL);
        prop_assert!((hxy - hy - hx_y).abs() <= COMPOSED_TOL);
        prop_assert!(hx_y <= hx + COMPOSED_TOL);
        prop_assert!(hy_x <= hy + COMPOSED_TOL);
        prop_assert!(hx <= (x.support() as f64).log2() + EXACT_TOL);
    }

    #[test]
    fn base_change(j in joint(), base in 2.5f64..200.0) {
        let (x, _) = marginals(&j);
        let h2 = entropy(&x, 2.0).unwrap();
        prop_assert!((entropy(&x, base).unwrap() - h2 / base.log2()).abs() <= EXACT_TOL);
    }

    #[test]
    fn symmetrization(j in joint()) {
        let s = symmetrize(&j);
        prop_assert!(s.is_symmetric(EXACT_TOL));
        let a = conditional_entropy(&s, Direction::YgivenX, 2.0).unwrap();
        let b = conditional_entropy(&s, Direction::XgivenY, 2.0).unwrap();
        prop_assert!((a - b).abs() <= EXACT_TOL);
        prop_assert!(a <= max_conditional_entropy(&j, 2.0).unwrap() + 1.0 + EXACT_TOL);
    }

    #[test]
    fn averaged_sandwich((p, q) in (1usize..12).prop_flat_map(|n| (probs(n), probs(n)))) {
        prop_assert!(averaged_entropy_bounds(&p, &q).unwrap().holds(EXACT_TOL));
    }

    #[test]
    fn sparsity_is_monotone(t in small_trace(), c in 0.5f64..4.0, delta in 1usize..300) {
        let ok = |c, d| sparsity_check(&t, SparsityParams::new(c, d).unwrap()).ok;
        if ok(c, delta) {
            prop_assert!(ok(c * 1.5, delta));
            prop_assert!(ok(c, (delta / 2).max(1)));
        }
    }

    #[test]
    fn demand_graph_weights_sum_to_one(t in small_trace(), a in 0usize..300, b in 1usize..300) {
        let start = a % t.len();
        let end = (start + b).min(t.len());
        let g = build_demand_graph(&t, start..end).unwrap();
        prop_assert!((g.total_weight() - 1.0).abs() <= EXACT_TOL);
    }

    /// Climbing from a key retraces the descent that finds it.
    #[test]
    fn route_up_reverses_route_down(
        keys in prop::collection::btree_set(1u64..500, 1..60),
        touches in prop::collection::vec(any::<prop::sample::Index>(), 0..40),
        cap in 0usize..4,
    ) {
        let keys: Vec<u64> = keys.into_iter().collect();
        let mut t = EgoTree::new(NodeId(0), cap);
        for &k in &keys {
            t.insert(NodeId(k), NodeId(k)).unwrap();
        }
        for i in touches {
            t.adjust(NodeId(*i.get(&keys))).unwrap();
        }
        for &k in &keys {
            let up = t.route_up(NodeId(k)).unwrap();
            let RouteDown::Hit { mut path, hops, .. } = t.route_down(NodeId(k)) else {
                return Err(TestCaseError::fail(format!("{k} missing")));
            };
            path.reverse();
            prop_assert_eq!(&up.path, &path);
            prop_assert_eq!(up.hops, hops);
        }
        prop_assert!(t.check_invariants().is_ok());
    }

    /// A tree over `n` keys holds `n - 1` parent links, one owner link to the
    /// root and one per virtual root that is not the root.
    #[test]
    fn tree_link_conservation(
        keys in prop::collection::btree_set(1u64..300, 1..50),
        touches in prop::collection::vec(any::<prop::sample::Index>(), 0..60),
        cap in 0usize..6,
    ) {
        let keys: Vec<u64> = keys.into_iter().collect();
        let mut t = EgoTree::new(NodeId(0), cap);
        for &k in &keys {
            t.insert(NodeId(k), NodeId(k)).unwrap();
        }
        for i in touches {
            t.adjust(NodeId(*i.get(&keys))).unwrap();
        }
        let root = t.root().unwrap().key;
        let extra = t.virtual_roots().filter(|&k| k != root).count();
        prop_assert_eq!(t.physical_links().len(), keys.len() + extra);
    }

    /// Amortized splay cost stays within the entropy bound for any access sequence.
    #[test]
    fn splay_cost_within_entropy_bound(
        n in 2u64..40,
        raw in prop::collection::vec(0u64..40, 1..400),
    ) {
        let accesses: Vec<u64> = raw.into_iter().map(|k| k % n + 1).collect();
        let mut t = EgoTree::new(NodeId(0), 0);
        for k in 1..=n {
            t.attach_leaf(NodeId(k), NodeId(k)).unwrap();
        }
        let mut total = 0u64;
        for &k in &accesses {
            total += t.route_down(NodeId(k)).hops() + t.adjust(NodeId(k)).unwrap().link_changes;
        }
        let counts = accesses.iter().fold(BTreeMap::new(), |mut acc, &k| {
            *acc.entry(k).or_insert(0u64) += 1;
            acc
        });
        let h = entropy(&FreqDist::from_counts(counts).unwrap(), 2.0).unwrap();
        let m = accesses.len() as f64;
        let nf = n as f64;
        prop_assert!(total as f64 <= 3.0 * m * (h + 1.0) + 2.0 * nf * nf.log2() + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Window averages recombine to the overall average.
    #[test]
    fn ledger_windows_are_additive(seed in 0u64..500, c in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let trace = generate(&WorkloadSpec::UniformPairs { n: 24, m: 1500 }, seed).unwrap();
        let r = replay(&trace, NetParams::new(24, c).unwrap(), false).unwrap();
        let rows = window_report(&r.ledger, &trace, 24.0).unwrap();
        prop_assert_eq!(rows.iter().map(|w| w.length).sum::<usize>(), trace.len());
        for include in [false, true] {
            let weighted: f64 = rows
                .iter()
                .map(|w| w.length as f64 * if include { w.avg_cost_with_coord } else { w.avg_cost })
                .sum::<f64>()
                / trace.len() as f64;
            prop_assert!((weighted - average_cost(&r.ledger, include).unwrap()).abs() <= 1e-9);
        }
        prop_assert!(rows.len() <= r.network.reset_count() as usize + 1);
    }
}

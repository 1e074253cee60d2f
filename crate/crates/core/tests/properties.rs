//! Invariants over seeded random instances.

use bicap::boundary::{disintegrate_to_boundary, grandparent_ratio};
use bicap::capacity::{capacity, CapacityProblem, CapacityProblemSpec};
use bicap::gen::{self, Automorphism2};
use bicap::potential::{
    co_hardy_map, energy, energy_via_potential, hardy, pairing, potential, potential_field, potential_via_paths,
};
use bicap::sci::sci_ratio;
use bicap::tree::metric_delta;
use bicap::{Measure, Node2, NodeSet, TreeShape};
use proptest::prelude::*;
use rand::Rng;

fn cap(set: NodeSet) -> f64 {
    capacity(&CapacityProblem::new(set)).unwrap().cap
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn monotone_and_subadditive(seed in any::<u64>(), depth in 1u32..=5) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let a = gen::boxes(s, rng.gen_range(1..=4), 0, &mut rng);
        let b = gen::boxes(s, rng.gen_range(1..=4), 0, &mut rng);
        let union: Vec<Node2> = a.iter().chain(&b).copied().collect();
        let ca = cap(NodeSet::down_closure(s, a.clone()).unwrap());
        let cb = cap(NodeSet::down_closure(s, b).unwrap());
        let cu = cap(NodeSet::down_closure(s, union).unwrap());
        prop_assert!(ca <= cu * (1.0 + 1e-8));
        prop_assert!(cu <= (ca + cb) * (1.0 + 1e-8));
        let ba = cap(NodeSet::boundary(s, a.clone()).unwrap());
        prop_assert!(ba <= ca * (1.0 + 1e-8), "boundary projection {ba} > {ca}");
    }

    #[test]
    fn capacity_is_automorphism_invariant(seed in any::<u64>(), depth in 1u32..=5) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let a = gen::boxes(s, rng.gen_range(1..=5), 0, &mut rng);
        let g = Automorphism2::random(s, &mut rng);
        let moved: Vec<Node2> = a.iter().map(|&n| g.apply(n)).collect();
        let c0 = cap(NodeSet::exact(s, a).unwrap());
        let c1 = cap(NodeSet::exact(s, moved).unwrap());
        prop_assert!(close(c0, c1, 1e-8));
    }

    #[test]
    fn sci_is_automorphism_and_dyadic_scale_invariant(seed in any::<u64>(), depth in 1u32..=4) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let f = gen::function(s, rng.gen_range(1..=6), &mut rng).unwrap();
        let g = Automorphism2::random(s, &mut rng);
        let r0 = sci_ratio(&f, false, 1e-9).unwrap().ratio;
        let r1 = sci_ratio(&g.apply_weights(&f).unwrap(), false, 1e-9).unwrap().ratio;
        let r2 = sci_ratio(&f.scaled(4.0), false, 1e-9).unwrap().ratio;
        prop_assert!(close(r0, r1, 1e-6));
        prop_assert!(close(r0, r2, 1e-6));
        // any scaling moves level sets by at most one dyadic step
        let c = rng.gen_range(1.0..2.0);
        let r3 = sci_ratio(&f.scaled(c), false, 1e-9).unwrap().ratio;
        prop_assert!(r3 <= 4.0 * r0 * (1.0 + 1e-6) && r0 <= 4.0 * r3 * (1.0 + 1e-6));
    }

    #[test]
    fn level_sets_are_nested(seed in any::<u64>(), depth in 1u32..=5) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let f = gen::function(s, rng.gen_range(1..=8), &mut rng).unwrap();
        let fam = bicap::sci::level_sets(&f, false, 1e-9).unwrap();
        for w in fam.sets.windows(2) {
            prop_assert!(w[1].cap <= w[0].cap * (1.0 + 1e-8));
        }
    }

    #[test]
    fn grandparent_ratio_in_range(seed in any::<u64>(), depth in 2u32..=5) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let pts: Vec<Node2> = (0..rng.gen_range(1..=5)).map(|_| gen::node2(s, &mut rng)).collect();
        let r = grandparent_ratio(s, &pts, 1e-10).unwrap();
        prop_assert!((1.0 - 1e-8..=16.0 + 1e-8).contains(&r), "ratio {r}");
    }

    #[test]
    fn potential_routes_agree(seed in any::<u64>(), depth in 1u32..=5) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let mu = gen::measure(s, rng.gen_range(1..=10), &mut rng).unwrap();
        let field = potential_field(&mu).unwrap();
        for _ in 0..10 {
            let a = gen::node2(s, &mut rng);
            let v = potential(&mu, a);
            prop_assert!(close(v, potential_via_paths(&mu, a), 1e-12));
            prop_assert!(close(v, field.get(a), 1e-12));
        }
        prop_assert!(close(energy(&mu), energy_via_potential(&mu), 1e-12));
    }

    #[test]
    fn tonelli(seed in any::<u64>(), depth in 1u32..=5) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let mu = gen::measure(s, rng.gen_range(1..=8), &mut rng).unwrap();
        let phi = gen::function(s, rng.gen_range(1..=8), &mut rng).unwrap();
        // <Iφ, μ> = <φ, I*μ>
        let lhs: f64 = mu.iter().map(|(a, m)| hardy(&phi, a) * m).sum();
        let rhs: f64 = co_hardy_map(&mu).iter().map(|(a, m)| phi.get(a) * m).sum();
        prop_assert!(close(lhs, rhs, 1e-12));
        prop_assert!(close(lhs, pairing(&phi, &mu), 1e-12));
    }

    #[test]
    fn metric_triangle(seed in any::<u64>(), depth in 1u32..=6) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let (a, b, c) = (gen::node2(s, &mut rng), gen::node2(s, &mut rng), gen::node2(s, &mut rng));
        prop_assert!(metric_delta(a, a) == 0.0);
        prop_assert!(close(metric_delta(a, b), metric_delta(b, a), 1e-15));
        prop_assert!(metric_delta(a, c) <= metric_delta(a, b) + metric_delta(b, c) + 1e-12);
    }

    #[test]
    fn disintegration_keeps_mass(seed in any::<u64>(), depth in 1u32..=4) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let mu = gen::measure(s, rng.gen_range(1..=8), &mut rng).unwrap();
        let b = disintegrate_to_boundary(&mu).unwrap();
        prop_assert!(close(b.total(), mu.total(), 1e-12));
        prop_assert!(b.support().all(|a| s.is_leaf2(a)));
    }

    #[test]
    fn json_round_trips(seed in any::<u64>(), depth in 1u32..=4) {
        let s = TreeShape::new(depth).unwrap();
        let mut rng = gen::rng(seed);
        let mu = gen::measure(s, rng.gen_range(1..=6), &mut rng).unwrap();
        let text = serde_json::to_string(&mu.to_atoms()).unwrap();
        let back = Measure::from_atoms(s, &serde_json::from_str::<Vec<_>>(&text).unwrap()).unwrap();
        prop_assert_eq!(&back, &mu);
        let spec = CapacityProblemSpec {
            depth,
            set: gen::boxes(s, 3, 0, &mut rng),
            kind: bicap::SetKind::Boundary,
            tol: Some(1e-9),
            max_iters: None,
        };
        let text = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(serde_json::from_str::<CapacityProblemSpec>(&text).unwrap(), spec);
    }
}

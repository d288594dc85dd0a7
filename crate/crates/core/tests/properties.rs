use behc::capacity::gap_bound;
use behc::program::{build_program, Policy};
use behc::qgraph::{BoundKind, QGraph};
use behc::solver::{certified_lower, certified_upper, maximize, SolveOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bounds_sandwich_every_policy(eta in 0.05f64..0.95, n in 1usize..5, seed in any::<u64>()) {
        let opts = SolveOptions::default();
        let lower = maximize(&build_program(BoundKind::LowerBound, n, eta).unwrap(), None, &opts).unwrap();
        let upper = maximize(&build_program(BoundKind::UpperBound, n, eta).unwrap(), None, &opts).unwrap();
        prop_assert!(lower.lower_certified <= lower.upper_certified);
        prop_assert!(lower.upper_certified <= upper.upper_certified + 1e-9);
        prop_assert!(upper.upper_certified - lower.lower_certified <= gap_bound(n) + 2e-9);

        let prog = build_program(BoundKind::LowerBound, n, eta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pol = Policy::random(BoundKind::LowerBound, n, &mut rng, 0.01, 0.99);
        let f = prog.objective(&prog.joint_from_policy(&pol, None).unwrap().v);
        prop_assert!(f <= lower.upper_certified + 1e-12);
    }

    #[test]
    fn upper_certificate_is_valid_for_any_multiplier(eta in 0.1f64..0.9, scale in -1.0f64..1.0) {
        let prog = build_program(BoundKind::UpperBound, 2, eta).unwrap();
        let r = maximize(&prog, None, &SolveOptions::default()).unwrap();
        let y: Vec<f64> = r.y.iter().map(|v| v * (1.0 + 0.1 * scale)).collect();
        let b = certified_upper(&prog, &r.v_hat, &y).unwrap();
        prop_assert!(b >= certified_lower(&prog, &r.v_hat).unwrap() - 1e-12);
    }

    #[test]
    fn walks_stay_on_the_graph(n in 0usize..30, bits in proptest::collection::vec(0u8..2, 0..100)) {
        for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
            let g = QGraph::build(kind, n);
            prop_assert!(g.walk(0, &bits) <= n);
        }
    }
}

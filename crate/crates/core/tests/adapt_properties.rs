use minimax_gda::adapt::{AdaptParams, AdaptRule, AdaptState};
use minimax_gda::geometry::Metric;
use minimax_gda::Vector;
use proptest::prelude::*;

const RULES: [AdaptRule; 5] = [
    AdaptRule::AdamDiag,
    AdaptRule::AdamGlobal,
    AdaptRule::AdaBeliefDiag,
    AdaptRule::AdaBeliefGlobal,
    AdaptRule::Constant,
];

fn grads(d: usize) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    prop::collection::vec(
        (
            prop::collection::vec(-1e3f64..1e3, d),
            prop::collection::vec(-1e3f64..1e3, d),
        ),
        1..30,
    )
}

proptest! {
    #[test]
    fn every_metric_respects_its_floor(
        rule in 0usize..5,
        rho in 1e-4f64..1.0,
        varrho in 0.01f64..0.99,
        d in 1usize..5,
        seq in (1usize..5).prop_flat_map(grads),
    ) {
        let params = AdaptParams { rule: RULES[rule], rho: rho.min(1.0), varrho, ..AdaptParams::default() };
        let floor = params.lambda_floor();
        let (lo, hi) = params.scalar_bounds();
        let mut state = AdaptState::new(params, d).unwrap();
        for (g, m) in seq {
            let g = Vector::from_fn(d, |i| g[i % g.len()]);
            let m = Vector::from_fn(d, |i| m[i % m.len()]);
            let metric = state.update(&g, Some(&m)).unwrap();
            prop_assert!(metric.lambda_min() >= floor);
            if let Metric::Scalar(b) = metric {
                prop_assert!(b >= lo && b <= hi, "{b} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn diagonal_entries_grow_with_the_gradient(
        diag_rule in prop::bool::ANY,
        g in prop::collection::vec(-10f64..10.0, 1..6),
        bump in prop::collection::vec(0f64..5.0, 1..6),
    ) {
        let rule = if diag_rule { AdaptRule::AdamDiag } else { AdaptRule::AdaBeliefDiag };
        let d = g.len();
        let params = AdaptParams::with_rule(rule);
        let zero = Vector::zeros(d);
        let small = Vector::new(g.clone()).unwrap();
        let large = Vector::from_fn(d, |i| g[i] + g[i].signum() * bump[i % bump.len()]);
        let a = AdaptState::new(params.clone(), d).unwrap().update(&small, Some(&zero)).unwrap();
        let b = AdaptState::new(params, d).unwrap().update(&large, Some(&zero)).unwrap();
        let (Metric::Diagonal(a), Metric::Diagonal(b)) = (a, b) else {
            panic!("diagonal rule produced a non-diagonal metric");
        };
        for i in 0..d {
            prop_assert!(a[i] <= b[i]);
        }
    }
}

#[test]
fn constant_rule_emits_identity() {
    let mut state = AdaptState::new(AdaptParams::with_rule(AdaptRule::Constant), 3).unwrap();
    for _ in 0..5 {
        let m = state.update(&Vector::filled(3, 7.0), None).unwrap();
        assert_eq!(m, Metric::Identity);
    }
}

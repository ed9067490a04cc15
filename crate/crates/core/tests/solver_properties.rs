use std::sync::atomic::{AtomicU64, Ordering};

use minimax_gda::adapt::{AdaptParams, AdaptRule};
use minimax_gda::geometry::{generalized_project, ConstraintSet};
use minimax_gda::problems::{
    GradPair, MinimaxProblem, PolicyEvalMSPBE, PolicyEvalParams, ProblemSpec, QuadraticMinimax, QuadraticParams,
    RobustParams, RobustWeightedLoss,
};
use minimax_gda::rng::{MiniBatch, SampleSpace};
use minimax_gda::solvers::{run, Algorithm, OutputRule, Schedule, Solver, SolverConfig};
use minimax_gda::{Error, Result, Vector};

fn adaptive(algo: Algorithm) -> SolverConfig {
    let schedule = match algo {
        Algorithm::VrAdaGda => Schedule::PolyThird { k: 1.0, m: 8.0 },
        _ => Schedule::PolyHalf { k: 1.0, m: 4.0 },
    };
    SolverConfig {
        algo,
        gamma: 0.05,
        lambda: 0.05,
        schedule,
        c1: 0.5,
        c2: 0.5,
        q: 3,
        iterations: 300,
        adapt_x: AdaptParams::with_rule(AdaptRule::AdamDiag),
        adapt_y: AdaptParams::with_rule(AdaptRule::AdaBeliefGlobal),
        stride: Some(1),
        ..SolverConfig::default()
    }
}

fn boxed_robust() -> RobustWeightedLoss {
    let d = 3;
    RobustWeightedLoss::generate(&RobustParams {
        x_set: ConstraintSet::boxed(Vector::filled(d, -0.3), Vector::filled(d, 0.3)).unwrap(),
        ..RobustParams::default()
    })
    .unwrap()
}

#[test]
fn iterates_stay_feasible() {
    let problem = boxed_robust();
    for algo in [Algorithm::AdaGda, Algorithm::VrAdaGda, Algorithm::Sgda] {
        let mut solver = Solver::new(&problem, adaptive(algo), 4).unwrap();
        for _ in 0..500 {
            solver.step().unwrap();
            assert!(problem.spec().x_set.contains(solver.x(), 1e-12), "{algo}: {:?}", solver.x());
            assert!(problem.spec().y_set.contains(solver.y(), 1e-12), "{algo}: {:?}", solver.y());
        }
    }
}

#[test]
fn next_iterate_interpolates_the_prox_point() {
    let ball = ConstraintSet::ball(Vector::zeros(3), 0.5).unwrap();
    let problem = PolicyEvalMSPBE::generate(&PolicyEvalParams {
        x_set: ball,
        ..PolicyEvalParams::default()
    })
    .unwrap();
    for algo in [Algorithm::AdaGda, Algorithm::VrAdaGda] {
        let config = adaptive(algo);
        let mut solver = Solver::new(&problem, config.clone(), 9).unwrap();
        for _ in 0..300 {
            let t = solver.t();
            let eta = config.schedule.eta(t);
            let (mx, my) = solver.metrics().unwrap().clone();
            let (x, y) = (solver.x().clone(), solver.y().clone());
            let spec = problem.spec();
            let x_tilde = generalized_project(&spec.x_set, &x, solver.estimator().v(), &mx, config.gamma).unwrap();
            let ascent = solver.estimator().w().scale(-1.0);
            let y_tilde = generalized_project(&spec.y_set, &y, &ascent, &my, config.lambda).unwrap();
            solver.step().unwrap();
            let xe = x.zip_with(&x_tilde, |a, b| (1.0 - eta) * a + eta * b).unwrap();
            let ye = y.zip_with(&y_tilde, |a, b| (1.0 - eta) * a + eta * b).unwrap();
            assert!(solver.x().distance(&xe).unwrap() <= 1e-12);
            assert!(solver.y().distance(&ye).unwrap() <= 1e-12);
        }
    }
}

/// Counts per-sample gradient evaluations (each gives a pair of gradients).
struct Counting<P> {
    inner: P,
    samples: AtomicU64,
}

impl<P: MinimaxProblem> MinimaxProblem for Counting<P> {
    fn spec(&self) -> &ProblemSpec {
        self.inner.spec()
    }
    fn sample_space(&self) -> SampleSpace {
        self.inner.sample_space()
    }
    fn initial_point(&self) -> (Vector, Vector) {
        self.inner.initial_point()
    }
    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.inner.value(x, y)
    }
    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.inner.grad_x(x, y)
    }
    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.inner.grad_y(x, y)
    }
    fn grad_batch(&self, x: &Vector, y: &Vector, batch: &MiniBatch) -> Result<GradPair> {
        self.samples.fetch_add(batch.len() as u64, Ordering::Relaxed);
        self.inner.grad_batch(x, y, batch)
    }
}

#[test]
fn oracle_calls_match_closed_form_and_actual_use() {
    for algo in [Algorithm::AdaGda, Algorithm::VrAdaGda, Algorithm::Sgda] {
        let problem = Counting {
            inner: QuadraticMinimax::generate(&QuadraticParams::default()).unwrap(),
            samples: AtomicU64::new(0),
        };
        let config = adaptive(algo);
        let q = config.q as u64;
        let out = run(&problem, &config, 1).unwrap();
        for row in &out.record.rows {
            let closed = match algo {
                Algorithm::VrAdaGda => 2 * q + 4 * q * (row.t - 1),
                _ => 2 * q * row.t,
            };
            assert_eq!(row.oracle_calls, closed, "{algo} at t = {}", row.t);
        }
        let last = out.record.rows.last().unwrap().oracle_calls;
        assert_eq!(2 * problem.samples.load(Ordering::Relaxed), last, "{algo}");
    }
}

#[test]
fn zero_iterations_returns_the_start() {
    let problem = QuadraticMinimax::generate(&QuadraticParams::default()).unwrap();
    let config = SolverConfig {
        iterations: 0,
        output_rule: OutputRule::UniformRandomIterate,
        ..SolverConfig::default()
    };
    let out = run(&problem, &config, 0).unwrap();
    assert_eq!(out.record.rows.len(), 1);
    assert_eq!(out.record.rows[0].t, 1);
    assert!(out.record.running_average.is_empty());
    assert_eq!((out.x, out.y), problem.initial_point());
}

#[test]
fn logged_rows_follow_the_stride() {
    let problem = QuadraticMinimax::generate(&QuadraticParams::default()).unwrap();
    let config = SolverConfig {
        iterations: 50,
        stride: Some(7),
        ..SolverConfig::default()
    };
    let out = run(&problem, &config, 0).unwrap();
    let ts: Vec<u64> = out.record.rows.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![1, 8, 15, 22, 29, 36, 43, 50, 51]);
    assert_eq!(out.record.rows[0].alpha, None);
    assert!(out.record.rows[1].alpha.is_some());
    let marks: Vec<u64> = out.record.running_average.iter().map(|p| p.0).collect();
    assert_eq!(marks, vec![1, 2, 3, 5, 6, 7, 10, 12, 15, 19, 25, 31, 39, 50]);
}

#[test]
fn same_seed_replays_exactly() {
    let problem = boxed_robust();
    for algo in [Algorithm::AdaGda, Algorithm::VrAdaGda, Algorithm::Sgda] {
        let config = SolverConfig {
            output_rule: OutputRule::UniformRandomIterate,
            ..adaptive(algo)
        };
        let a = run(&problem, &config, 77).unwrap();
        let b = run(&problem, &config, 77).unwrap();
        let c = run(&problem, &config, 78).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!((a.x, a.y, a.output_index), (b.x, b.y, b.output_index));
        assert!((1..=config.iterations).contains(&a.output_index));
        assert_ne!(a.record, c.record);
    }
}

#[test]
fn unit_coefficients_reduce_to_sgda() {
    let problem = boxed_robust();
    let base = SolverConfig {
        gamma: 0.2,
        lambda: 0.1,
        q: 2,
        ..SolverConfig::default()
    };
    let ada = SolverConfig {
        algo: Algorithm::AdaGda,
        schedule: Schedule::Constant { eta: 1.0 },
        c1: 1.0,
        c2: 1.0,
        adapt_x: AdaptParams::with_rule(AdaptRule::Constant),
        adapt_y: AdaptParams::with_rule(AdaptRule::Constant),
        ..base.clone()
    };
    let sgda = SolverConfig {
        algo: Algorithm::Sgda,
        ..base
    };
    let mut a = Solver::new(&problem, ada, 5).unwrap();
    let mut b = Solver::new(&problem, sgda, 5).unwrap();
    for _ in 0..1000 {
        a.step().unwrap();
        b.step().unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
    }
}

#[test]
fn noiseless_run_reaches_a_stationary_point() {
    let problem = QuadraticMinimax::generate(&QuadraticParams {
        sigma: 0.0,
        ..QuadraticParams::default()
    })
    .unwrap();
    for algo in [Algorithm::AdaGda, Algorithm::VrAdaGda] {
        let config = SolverConfig {
            algo,
            gamma: 0.1,
            lambda: 0.5,
            schedule: Schedule::Constant { eta: 0.5 },
            c1: 1.0,
            c2: 1.0,
            iterations: 3000,
            adapt_x: AdaptParams::with_rule(AdaptRule::Constant),
            adapt_y: AdaptParams::with_rule(AdaptRule::Constant),
            ..SolverConfig::default()
        };
        let out = run(&problem, &config, 0).unwrap();
        let last = out.record.rows.last().unwrap();
        assert!(last.grad_map_norm.unwrap() < 1e-8, "{algo}: {last:?}");
        assert!(last.y_gap.unwrap() < 1e-8, "{algo}: {last:?}");
        assert!(out.x.norm() < 1e-8);
    }
}

#[test]
fn divergence_is_reported_with_the_last_finite_state() {
    let problem = QuadraticMinimax::generate(&QuadraticParams {
        p_min_eig: -5.0,
        p_max_eig: -1.0,
        ..QuadraticParams::default()
    })
    .unwrap();
    let config = SolverConfig {
        algo: Algorithm::Sgda,
        gamma: 1.0,
        iterations: 10_000,
        ..SolverConfig::default()
    };
    match run(&problem, &config, 0) {
        Err(Error::Diverged { iteration, last_finite, .. }) => {
            assert!(iteration > 1);
            assert!(last_finite.0.is_finite() && last_finite.1.is_finite());
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.output_index)),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let problem = QuadraticMinimax::generate(&QuadraticParams::default()).unwrap();
    let bad = [
        SolverConfig { gamma: 0.0, ..SolverConfig::default() },
        SolverConfig { q: 0, ..SolverConfig::default() },
        SolverConfig { c1: 20.0, ..SolverConfig::default() },
        SolverConfig { schedule: Schedule::PolyHalf { k: 3.0, m: 1.0 }, ..SolverConfig::default() },
        SolverConfig { adapt_y: AdaptParams::with_rule(AdaptRule::AdamDiag), ..SolverConfig::default() },
    ];
    for config in bad {
        assert!(matches!(run(&problem, &config, 0), Err(Error::Config(_))), "{config:?}");
    }
}

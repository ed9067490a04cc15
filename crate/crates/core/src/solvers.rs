//! AdaGDA, VR-AdaGDA and a projected SGDA baseline, with step-size schedules,
//! the parameter-condition validator and rate-slope fitting.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptParams, AdaptState};
use crate::error::{Error, Result};
use crate::estimators::{estimator_error, EstimatorKind, EstimatorState, SameBatchGrads};
use crate::geometry::{generalized_project, gradient_mapping, project, Metric};
use crate::problems::{GradPair, MinimaxProblem, ProblemSpec};
use crate::rng::{streams, RngStream, SampleSpace};
use crate::vector::Vector;

/// Iterates beyond this norm on an unconstrained set abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "adagda")]
    AdaGda,
    #[serde(rename = "vr-adagda")]
    VrAdaGda,
    #[serde(rename = "sgda")]
    Sgda,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AdaGda => "adagda",
            Algorithm::VrAdaGda => "vr-adagda",
            Algorithm::Sgda => "sgda",
        }
    }

    fn estimator_kind(self) -> EstimatorKind {
        match self {
            Algorithm::VrAdaGda => EstimatorKind::VarianceReduced,
            _ => EstimatorKind::Momentum,
        }
    }

    /// Stochastic partial gradients consumed by the end of iteration `t`,
    /// counting the initial batch.
    pub fn oracle_calls(self, q: usize, t: u64) -> u64 {
        let q = q as u64;
        match self {
            Algorithm::VrAdaGda if t > 0 => 2 * q + 4 * q * (t - 1),
            _ => 2 * q * t,
        }
    }

    /// Power of `η` in the momentum coefficients.
    fn coefficient_power(self) -> i32 {
        match self {
            Algorithm::VrAdaGda => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adagda" => Ok(Algorithm::AdaGda),
            "vr-adagda" | "vradagda" => Ok(Algorithm::VrAdaGda),
            "sgda" => Ok(Algorithm::Sgda),
            other => Err(Error::config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Averaging weight `ηₜ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// `ηₜ = k / (m + t)^{1/2}`.
    PolyHalf { k: f64, m: f64 },
    /// `ηₜ = k / (m + t)^{1/3}`.
    PolyThird { k: f64, m: f64 },
    Constant { eta: f64 },
}

impl Schedule {
    pub fn eta(&self, t: u64) -> f64 {
        match *self {
            Schedule::PolyHalf { k, m } => k / (m + t as f64).sqrt(),
            Schedule::PolyThird { k, m } => k / (m + t as f64).cbrt(),
            Schedule::Constant { eta } => eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::PolyHalf { k, m } | Schedule::PolyThird { k, m } => {
                if !(k > 0.0 && k.is_finite() && m >= 1.0 && m.is_finite()) {
                    return Err(Error::config("schedule needs k > 0 and m >= 1"));
                }
                if self.eta(0) > 1.0 {
                    return Err(Error::config(format!(
                        "schedule gives eta_0 = {} > 1; raise m",
                        self.eta(0)
                    )));
                }
                Ok(())
            }
            Schedule::Constant { eta } if eta > 0.0 && eta <= 1.0 => Ok(()),
            Schedule::Constant { .. } => Err(Error::config("constant eta must lie in (0, 1]")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    FinalIterate,
    /// `(x_ζ, y_ζ)` with `ζ` uniform over the visited iterates `1..=T`.
    UniformRandomIterate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algo: Algorithm,
    /// x-step scale `γ`.
    pub gamma: f64,
    /// y-step scale `λ`.
    pub lambda: f64,
    pub schedule: Schedule,
    pub c1: f64,
    pub c2: f64,
    /// Batch size.
    pub q: usize,
    /// Number of iterations `T`.
    pub iterations: u64,
    pub adapt_x: AdaptParams,
    pub adapt_y: AdaptParams,
    pub output_rule: OutputRule,
    /// Log every `stride` iterations; `None` picks `max(1, T/1000)`.
    pub stride: Option<u64>,
    /// Keep `x` fixed at its initial value.
    pub freeze_x: bool,
    /// Keep `y` fixed at its initial value.
    pub freeze_y: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algo: Algorithm::AdaGda,
            gamma: 0.01,
            lambda: 0.1,
            schedule: Schedule::PolyHalf { k: 1.0, m: 100.0 },
            c1: 1.0,
            c2: 1.0,
            q: 1,
            iterations: 1000,
            adapt_x: AdaptParams::default(),
            adapt_y: AdaptParams::default(),
            output_rule: OutputRule::FinalIterate,
            stride: None,
            freeze_x: false,
            freeze_y: false,
        }
    }
}

impl SolverConfig {
    /// Structural checks; the step-size conditions are reported separately
    /// by [`validate_config`].
    pub fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be positive"));
        }
        if self.q == 0 {
            return Err(Error::config("batch size q must be at least 1"));
        }
        if self.stride == Some(0) {
            return Err(Error::config("stride must be at least 1"));
        }
        self.adapt_x.validate()?;
        self.adapt_y.validate()?;
        if !self.adapt_y.rule.is_scalar() {
            return Err(Error::config("the y-side metric must be a multiple of the identity"));
        }
        if self.algo == Algorithm::Sgda {
            return Ok(());
        }
        self.schedule.validate()?;
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::config("c1 and c2 must be positive"));
        }
        // ηₜ never increases, so the coefficients peak at t = 1.
        let (alpha, beta) = self.coefficients(1);
        if alpha > 1.0 || beta > 1.0 {
            return Err(Error::config(format!(
                "momentum coefficients exceed 1 (alpha = {alpha}, beta = {beta})"
            )));
        }
        Ok(())
    }

    /// `(α_{t+1}, β_{t+1})` from `ηₜ`.
    pub fn coefficients(&self, t: u64) -> (f64, f64) {
        let scale = self.schedule.eta(t).powi(self.algo.coefficient_power());
        (self.c1 * scale, self.c2 * scale)
    }

    pub fn log_stride(&self) -> u64 {
        self.stride.unwrap_or((self.iterations / 1000).max(1))
    }
}

/// One logged iteration; fields that a problem cannot provide are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: u64,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub grad_map_norm: Option<f64>,
    pub grad_f_norm: Option<f64>,
    pub y_gap: Option<f64>,
    pub v_err: Option<f64>,
    pub w_err: Option<f64>,
    pub a_min: Option<f64>,
    pub a_max: Option<f64>,
    pub b_t: Option<f64>,
    pub oracle_calls: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    /// `(T, (1/T) Σ_{t≤T} ‖G_X(xₜ, ∇F(xₜ), γ)‖)` at geometric checkpoints
    /// and at the final iteration.
    pub running_average: Vec<(u64, f64)>,
}

impl TrajectoryRecord {
    pub fn final_running_average(&self) -> Option<f64> {
        self.running_average.last().map(|&(_, v)| v)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: TrajectoryRecord,
    pub x: Vector,
    pub y: Vector,
    /// Iteration index of the returned pair.
    pub output_index: u64,
    pub wall_time_secs: f64,
}

/// Iteration counts `⌊10^{j/10}⌋` (deduplicated), ten per decade.
pub fn checkpoints(max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for j in 0.. {
        let t = (10f64.powf(j as f64 / 10.0) + 1e-9).floor() as u64;
        if t > max {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

/// Solver state between iterations.
pub struct Solver<'a, P: MinimaxProblem + ?Sized> {
    problem: &'a P,
    config: SolverConfig,
    space: SampleSpace,
    rng: RngStream,
    x: Vector,
    y: Vector,
    /// Batch gradient at the current iterate.
    g: GradPair,
    est: EstimatorState,
    adapt_x: AdaptState,
    adapt_y: AdaptState,
    metrics: Option<(Metric, Metric)>,
    t: u64,
    oracle_calls: u64,
    last_coefficients: Option<(f64, f64)>,
}

impl<'a, P: MinimaxProblem + ?Sized> Solver<'a, P> {
    /// Initializes `(x₁, y₁)`, draws `B₁` and sets `v₁, w₁`.
    pub fn new(problem: &'a P, config: SolverConfig, seed: u64) -> Result<Self> {
        config.check()?;
        let spec = problem.spec();
        spec.validate()?;
        let space = problem.sample_space();
        let mut rng = RngStream::new(seed, streams::BATCH);
        let (x, y) = problem.initial_point();
        let batch = rng.draw_batch(&space, config.q)?;
        let g = problem.grad_batch(&x, &y, &batch)?;
        let est = EstimatorState::new(config.algo.estimator_kind(), g.clone(), &x, &y);
        let (adapt_x, adapt_y) = match config.algo {
            Algorithm::Sgda => (
                AdaptState::new(AdaptParams::default(), spec.d1)?,
                AdaptState::new(AdaptParams::default(), spec.d2)?,
            ),
            _ => (
                AdaptState::new(config.adapt_x.clone(), spec.d1)?,
                AdaptState::new(config.adapt_y.clone(), spec.d2)?,
            ),
        };
        Ok(Solver {
            problem,
            oracle_calls: config.algo.oracle_calls(config.q, 1),
            config,
            space,
            rng,
            x,
            y,
            g,
            est,
            adapt_x,
            adapt_y,
            metrics: None,
            t: 1,
            last_coefficients: None,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.est
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls
    }

    /// `(Aₜ, Bₜ)`, generated from the current batch gradient on first use.
    pub fn metrics(&mut self) -> Result<&(Metric, Metric)> {
        if self.metrics.is_none() {
            let mx = self.adapt_x.update(&self.g.x, Some(self.est.v()))?;
            let my = self.adapt_y.update(&self.g.y, Some(self.est.w()))?;
            self.metrics = Some((mx, my));
        }
        Ok(self.metrics.as_ref().expect("just generated"))
    }

    /// Advances from iteration `t` to `t + 1`.
    pub fn step(&mut self) -> Result<()> {
        let (x_new, y_new) = match self.config.algo {
            Algorithm::Sgda => self.sgda_point()?,
            _ => self.gda_point()?,
        };
        self.guard(&x_new, &y_new)?;

        let batch = self.rng.draw_batch(&self.space, self.config.q)?;
        let g_new = self.problem.grad_batch(&x_new, &y_new, &batch)?;
        match self.config.algo {
            Algorithm::Sgda => {
                self.est.momentum_update(&g_new, 1.0, 1.0)?;
                self.last_coefficients = None;
            }
            Algorithm::AdaGda => {
                let (alpha, beta) = self.config.coefficients(self.t);
                self.est.momentum_update(&g_new, alpha, beta)?;
                self.last_coefficients = Some((alpha, beta));
            }
            Algorithm::VrAdaGda => {
                let (alpha, beta) = self.config.coefficients(self.t);
                let at_old = self.problem.grad_batch(&self.x, &self.y, &batch)?;
                let grads = SameBatchGrads::from_parts(g_new.clone(), at_old);
                self.est.storm_update(&grads, (&x_new, &y_new), alpha, beta)?;
                self.last_coefficients = Some((alpha, beta));
            }
        }
        self.x = x_new;
        self.y = y_new;
        self.g = g_new;
        self.metrics = None;
        self.t += 1;
        self.oracle_calls = self.config.algo.oracle_calls(self.config.q, self.t);
        Ok(())
    }

    /// Prox steps with the adaptive metrics, then averaging with `ηₜ`.
    fn gda_point(&mut self) -> Result<(Vector, Vector)> {
        let eta = self.config.schedule.eta(self.t);
        let (gamma, lambda) = (self.config.gamma, self.config.lambda);
        let (mx, my) = self.metrics()?.clone();
        let spec = self.problem.spec();
        let x_new = if self.config.freeze_x {
            self.x.clone()
        } else {
            let x_tilde = generalized_project(&spec.x_set, &self.x, self.est.v(), &mx, gamma)?;
            interpolate(&self.x, &x_tilde, eta)?
        };
        let y_new = if self.config.freeze_y {
            self.y.clone()
        } else {
            let ascent = self.est.w().scale(-1.0);
            let y_tilde = generalized_project(&spec.y_set, &self.y, &ascent, &my, lambda)?;
            interpolate(&self.y, &y_tilde, eta)?
        };
        Ok((x_new, y_new))
    }

    /// `x ← Π_X(x − γ gₓ)`, `y ← Π_Y(y + λ gᵧ)`.
    fn sgda_point(&mut self) -> Result<(Vector, Vector)> {
        let (gamma, lambda) = (self.config.gamma, self.config.lambda);
        let spec = self.problem.spec();
        let x_new = if self.config.freeze_x {
            self.x.clone()
        } else {
            project(&spec.x_set, &self.x.zip_with(&self.g.x, |x, g| x - gamma * g)?)?
        };
        let y_new = if self.config.freeze_y {
            self.y.clone()
        } else {
            project(&spec.y_set, &self.y.zip_with(&self.g.y, |y, g| y + lambda * g)?)?
        };
        Ok((x_new, y_new))
    }

    fn guard(&self, x: &Vector, y: &Vector) -> Result<()> {
        let spec = self.problem.spec();
        let reason = if !x.is_finite() || !y.is_finite() {
            Some("non-finite iterate".to_string())
        } else if spec.x_set.is_unconstrained() && x.norm() > DIVERGENCE_NORM {
            Some(format!("|x| = {:e} exceeds {DIVERGENCE_NORM:e}", x.norm()))
        } else if spec.y_set.is_unconstrained() && y.norm() > DIVERGENCE_NORM {
            Some(format!("|y| = {:e} exceeds {DIVERGENCE_NORM:e}", y.norm()))
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::Diverged {
                iteration: self.t + 1,
                reason,
                last_finite: Box::new((self.x.clone(), self.y.clone())),
            }),
            None => Ok(()),
        }
    }

    /// `‖G_X(xₜ, ∇F(xₜ), γ)‖` under `Aₜ`, if the problem exposes `∇F`.
    pub fn grad_map_norm(&mut self) -> Result<Option<f64>> {
        let grad_f = match self.problem.primal_grad(&self.x) {
            Ok(g) => g,
            Err(Error::Unsupported(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let gamma = self.config.gamma;
        let mx = self.metrics()?.0.clone();
        let map = gradient_mapping(&self.problem.spec().x_set, &self.x, &grad_f, &mx, gamma)?;
        Ok(Some(map.norm()))
    }

    /// Diagnostics for the current iteration.
    pub fn row(&mut self) -> Result<TrajectoryRow> {
        let (mx, my) = self.metrics()?.clone();
        let problem = self.problem;
        let grad_f_norm = optional(problem.primal_grad(&self.x))?.map(|g| g.norm());
        let grad_map_norm = if grad_f_norm.is_some() {
            self.grad_map_norm()?
        } else {
            None
        };
        let y_gap = match optional(problem.y_star(&self.x))? {
            Some(ys) => Some(self.y.distance(&ys)?),
            None => None,
        };
        let (v_err, w_err) = estimator_error(problem, &self.est, &self.x, &self.y)?;
        let b_t = match my {
            Metric::Identity => 1.0,
            Metric::Scalar(b) => b,
            Metric::Diagonal(_) => unreachable!("y-side metric is scalar"),
        };
        let eta = match self.config.algo {
            Algorithm::Sgda => None,
            _ => Some(self.config.schedule.eta(self.t)),
        };
        Ok(TrajectoryRow {
            t: self.t,
            eta,
            alpha: self.last_coefficients.map(|c| c.0),
            beta: self.last_coefficients.map(|c| c.1),
            grad_map_norm,
            grad_f_norm,
            y_gap,
            v_err: Some(v_err),
            w_err: Some(w_err),
            a_min: Some(mx.lambda_min()),
            a_max: Some(mx.lambda_max()),
            b_t: Some(b_t),
            oracle_calls: self.oracle_calls,
        })
    }
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Unsupported(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `x + η(x̃ − x)`, written as `(1 − η)x + ηx̃`; exactly `x̃` when `η = 1`.
fn interpolate(x: &Vector, x_tilde: &Vector, eta: f64) -> Result<Vector> {
    if eta == 1.0 {
        return Ok(x_tilde.clone());
    }
    x.zip_with(x_tilde, |a, b| (1.0 - eta) * a + eta * b)
}

/// Runs `config.iterations` iterations from the problem's initial point.
///
/// Rows `t = 1, 1 + stride, …` describe the state before step `t`; the final
/// row `T + 1` describes the returned final state.
pub fn run<P: MinimaxProblem + ?Sized>(problem: &P, config: &SolverConfig, seed: u64) -> Result<RunOutput> {
    let start = Instant::now();
    let total = config.iterations;
    let stride = config.log_stride();
    let mut solver = Solver::new(problem, config.clone(), seed)?;

    let zeta = match config.output_rule {
        OutputRule::UniformRandomIterate if total > 0 => {
            1 + RngStream::new(seed, streams::OUTPUT).index(total as usize) as u64
        }
        _ => total + 1,
    };
    let mut chosen = None;
    let marks = checkpoints(total);
    let mut next_mark = marks.iter().copied().peekable();
    let track_average = optional(problem.primal_grad(solver.x()))?.is_some();
    let mut sum = 0.0;
    let mut record = TrajectoryRecord::default();

    for t in 1..=total {
        if (t - 1) % stride == 0 {
            record.rows.push(solver.row()?);
        }
        if track_average {
            sum += solver.grad_map_norm()?.expect("primal gradient available");
            if next_mark.peek() == Some(&t) {
                next_mark.next();
                record.running_average.push((t, sum / t as f64));
            } else if t == total {
                record.running_average.push((t, sum / t as f64));
            }
        }
        if t == zeta {
            chosen = Some((solver.x().clone(), solver.y().clone()));
        }
        solver.step()?;
    }
    record.rows.push(solver.row()?);

    let (x, y) = chosen.unwrap_or_else(|| (solver.x().clone(), solver.y().clone()));
    Ok(RunOutput {
        record,
        x,
        y,
        output_index: zeta,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Constants the step-size conditions depend on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    pub l_f: f64,
    /// Lower bound on the y-side metric scalar.
    pub b: f64,
    /// Upper bound on the y-side metric scalar.
    pub b_hat: f64,
    /// Lower bound on the eigenvalues of the x-side metric.
    pub rho: f64,
}

impl ProblemConstants {
    pub fn new(mu: f64, l_f: f64, b: f64, b_hat: f64, rho: f64) -> Result<Self> {
        let c = ProblemConstants { mu, l_f, b, b_hat, rho };
        if [mu, l_f, b, b_hat, rho].iter().all(|v| *v > 0.0 && v.is_finite()) && b <= b_hat {
            Ok(c)
        } else {
            Err(Error::config("constants must be positive with b <= b_hat"))
        }
    }

    /// Constants implied by a problem and the metric settings of a config.
    pub fn from_parts(spec: &ProblemSpec, config: &SolverConfig) -> Result<Self> {
        let (b, b_hat) = config.adapt_y.scalar_bounds();
        Self::new(spec.mu, spec.l_f, b, b_hat, config.adapt_x.lambda_floor())
    }

    pub fn kappa(&self) -> f64 {
        self.l_f / self.mu
    }

    /// `L = L_f (1 + κ)`.
    pub fn primal_smoothness(&self) -> f64 {
        self.l_f * (1.0 + self.kappa())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        })
    }
}

/// Relative slack so a suggestion sitting exactly on a bound passes.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub passed: bool,
}

impl ConditionCheck {
    fn new(name: &str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let slack = BOUND_SLACK * rhs.abs().max(lhs.abs());
        let passed = match relation {
            Relation::AtMost => lhs <= rhs + slack,
            Relation::AtLeast => lhs >= rhs - slack,
        };
        ConditionCheck {
            name: name.to_string(),
            lhs,
            relation,
            rhs,
            passed,
        }
    }
}

impl fmt::Display for ConditionCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {} {} {}",
            if self.passed { "ok" } else { "VIOLATED" },
            self.name,
            self.lhs,
            self.relation,
            self.rhs
        )
    }
}

/// Which family of step-size conditions a report covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionSet {
    /// Momentum estimator, `ηₜ = k/(m+t)^{1/2}`, `α = c1 ηₜ`.
    Momentum,
    /// STORM estimator, `ηₜ = k/(m+t)^{1/3}`, `α = c1 ηₜ²`.
    VarianceReduced,
    /// No conditions apply (the SGDA baseline).
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub conditions: ConditionSet,
    pub checks: Vec<ConditionCheck>,
    /// Checks reported for information only (batch-size regime).
    pub notes: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conditions: {:?}", self.conditions)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        for c in &self.notes {
            writeln!(f, "  (info) {c}")?;
        }
        Ok(())
    }
}

/// Parameter values sitting on the condition boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Suggestion {
    pub c1: f64,
    pub c2: f64,
    pub m: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Suggestion {
    /// Writes the suggested values into `config`, keeping everything else.
    pub fn apply(&self, config: &mut SolverConfig, k: f64) {
        config.c1 = self.c1;
        config.c2 = self.c2;
        config.gamma = self.gamma;
        config.lambda = self.lambda;
        config.schedule = match config.algo {
            Algorithm::VrAdaGda => Schedule::PolyThird { k, m: self.m },
            _ => Schedule::PolyHalf { k, m: self.m },
        };
    }
}

/// Largest `λ` allowed by the momentum conditions.
fn momentum_lambda_bound(c: &ProblemConstants) -> f64 {
    let (mu, lf, b) = (c.mu, c.l_f, c.b);
    let first = 405.0 * b * lf * lf * mu.powf(1.5) / (8.0 * (50.0 * lf * lf + 9.0 * mu * mu).sqrt());
    first.min(b / (6.0 * lf))
}

fn momentum_gamma_bound(c: &ProblemConstants, lambda: f64, k: f64, m: f64) -> f64 {
    let (mu, lf, rho, bh, kappa) = (c.mu, c.l_f, c.rho, c.b_hat, c.kappa());
    let l = c.primal_smoothness();
    let root = (400.0 * lf * lf * lambda * lambda
        + 24.0 * mu * mu * lambda * lambda
        + 16875.0 * bh * bh * kappa * kappa * lf * lf * mu * mu)
        .sqrt();
    let first = 15.0 * 2f64.sqrt() * lambda * mu * mu * rho / (2.0 * root);
    first.min(m.sqrt() * rho / (4.0 * l * k))
}

fn vr_lambda_bound(c: &ProblemConstants, q: usize) -> f64 {
    (27.0 * c.mu * c.b * q as f64 / 32.0).min(c.b / (6.0 * c.l_f))
}

fn vr_gamma_bound(c: &ProblemConstants, lambda: f64, k: f64, m: f64, q: usize) -> f64 {
    let (mu, lf, rho, bh, kappa) = (c.mu, c.l_f, c.rho, c.b_hat, c.kappa());
    let q = q as f64;
    let l = c.primal_smoothness();
    let first = rho * lambda * mu * q.sqrt() / (lf * (32.0 * lambda * lambda + 150.0 * q * kappa * kappa * bh * bh).sqrt());
    first.min(m.cbrt() * rho / (2.0 * l * k))
}

/// Boundary values for the algorithm's condition set with schedule scale
/// `k`: `c1, c2, m` at their lower bounds (with `m ≥ 1`), `λ, γ` at their
/// upper bounds.
pub fn suggest(algo: Algorithm, c: &ProblemConstants, k: f64, q: usize) -> Result<Suggestion> {
    if !(k > 0.0 && k.is_finite()) || q == 0 {
        return Err(Error::config("need k > 0 and q >= 1"));
    }
    match algo {
        Algorithm::AdaGda => {
            let c1 = 9.0 * c.mu * c.mu / 4.0;
            let c2 = 75.0 * c.l_f * c.l_f / 2.0;
            let m = (k * k).max((c1 * k).powi(2)).max((c2 * k).powi(2)).max(1.0);
            let lambda = momentum_lambda_bound(c);
            let gamma = momentum_gamma_bound(c, lambda, k, m);
            Ok(Suggestion { c1, c2, m, lambda, gamma })
        }
        Algorithm::VrAdaGda => {
            let base = 2.0 / (3.0 * k.powi(3));
            let c1 = base + 9.0 * c.mu * c.mu / 4.0;
            let c2 = base + 75.0 * c.l_f * c.l_f / 2.0;
            let m = k.powi(3).max((c1 * k).powi(3)).max((c2 * k).powi(3)).max(1.0);
            let lambda = vr_lambda_bound(c, q);
            let gamma = vr_gamma_bound(c, lambda, k, m, q);
            Ok(Suggestion { c1, c2, m, lambda, gamma })
        }
        Algorithm::Sgda => Err(Error::unsupported("the SGDA baseline has no step-size conditions")),
    }
}

/// Evaluates every step-size condition of the config's algorithm. Reporting
/// only: a failed check does not make the config unusable.
pub fn validate_config(config: &SolverConfig, c: &ProblemConstants) -> ValidationReport {
    use Relation::{AtLeast, AtMost};
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let conditions = match config.algo {
        Algorithm::AdaGda => ConditionSet::Momentum,
        Algorithm::VrAdaGda => ConditionSet::VarianceReduced,
        Algorithm::Sgda => ConditionSet::None,
    };
    let (k, m) = match (conditions, config.schedule) {
        (ConditionSet::Momentum, Schedule::PolyHalf { k, m }) => (k, m),
        (ConditionSet::VarianceReduced, Schedule::PolyThird { k, m }) => (k, m),
        (ConditionSet::None, _) => {
            return ValidationReport {
                conditions,
                checks,
                notes,
            }
        }
        (_, schedule) => {
            let wanted = if conditions == ConditionSet::Momentum {
                "poly-half"
            } else {
                "poly-third"
            };
            checks.push(ConditionCheck {
                name: format!("schedule is {wanted} (got {schedule:?})"),
                lhs: 0.0,
                relation: AtLeast,
                rhs: 1.0,
                passed: false,
            });
            return ValidationReport {
                conditions,
                checks,
                notes,
            };
        }
    };
    let (mu, lf) = (c.mu, c.l_f);
    let (c1, c2) = (config.c1, config.c2);
    match conditions {
        ConditionSet::Momentum => {
            let m_min = (k * k).max((c1 * k).powi(2)).max((c2 * k).powi(2));
            checks.push(ConditionCheck::new("m >= max(k^2, (c1 k)^2, (c2 k)^2)", m, AtLeast, m_min));
            checks.push(ConditionCheck::new("c1 >= 9 mu^2 / 4", c1, AtLeast, 9.0 * mu * mu / 4.0));
            checks.push(ConditionCheck::new("c1 <= sqrt(m) / k", c1, AtMost, m.sqrt() / k));
            checks.push(ConditionCheck::new("c2 >= 75 L_f^2 / 2", c2, AtLeast, 75.0 * lf * lf / 2.0));
            checks.push(ConditionCheck::new("c2 <= sqrt(m) / k", c2, AtMost, m.sqrt() / k));
            checks.push(ConditionCheck::new(
                "lambda <= min(405 b L_f^2 mu^1.5 / (8 sqrt(50 L_f^2 + 9 mu^2)), b / (6 L_f))",
                config.lambda,
                AtMost,
                momentum_lambda_bound(c),
            ));
            checks.push(ConditionCheck::new(
                "gamma <= min(15 sqrt2 lambda mu^2 rho / (2 sqrt(...)), sqrt(m) rho / (4 L k))",
                config.gamma,
                AtMost,
                momentum_gamma_bound(c, config.lambda, k, m),
            ));
        }
        ConditionSet::VarianceReduced => {
            let base = 2.0 / (3.0 * k.powi(3));
            let q = config.q;
            checks.push(ConditionCheck::new("c1 >= 2/(3k^3) + 9 mu^2 / 4", c1, AtLeast, base + 9.0 * mu * mu / 4.0));
            checks.push(ConditionCheck::new("c2 >= 2/(3k^3) + 75 L_f^2 / 2", c2, AtLeast, base + 75.0 * lf * lf / 2.0));
            let m_min = k.powi(3).max((c1 * k).powi(3)).max((c2 * k).powi(3));
            checks.push(ConditionCheck::new("m >= max(k^3, (c1 k)^3, (c2 k)^3)", m, AtLeast, m_min));
            checks.push(ConditionCheck::new(
                "lambda <= min(27 mu b q / 32, b / (6 L_f))",
                config.lambda,
                AtMost,
                vr_lambda_bound(c, q),
            ));
            checks.push(ConditionCheck::new(
                "gamma <= min(rho lambda mu sqrt(q) / (L_f sqrt(32 lambda^2 + 150 q kappa^2 b_hat^2)), m^(1/3) rho / (2 L k))",
                config.gamma,
                AtMost,
                vr_gamma_bound(c, config.lambda, k, m, q),
            ));
            notes.push(ConditionCheck::new(
                "small-batch regime q <= 16 / (81 L_f mu)",
                q as f64,
                AtMost,
                16.0 / (81.0 * lf * mu),
            ));
        }
        ConditionSet::None => unreachable!(),
    }
    ValidationReport {
        conditions,
        checks,
        notes,
    }
}

/// Least-squares slope of `log(value)` against `log(t)`.
pub fn fit_rate_slope(points: &[(u64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(Error::contract("slope fit needs at least 4 points"));
    }
    if points.iter().any(|&(t, v)| t == 0 || !(v > 0.0 && v.is_finite())) {
        return Err(Error::contract("slope fit needs positive t and values"));
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, v)| ((t as f64).ln(), v.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::contract("slope fit needs at least two distinct t values"));
    }
    Ok(sxy / sxx)
}

/// Seed-wise mean of running averages at the checkpoints all records share.
pub fn mean_running_average(records: &[&TrajectoryRecord]) -> Vec<(u64, f64)> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    first
        .running_average
        .iter()
        .filter_map(|&(t, _)| {
            let vals: Option<Vec<f64>> = records
                .iter()
                .map(|r| r.running_average.iter().find(|p| p.0 == t).map(|p| p.1))
                .collect();
            vals.map(|v| (t, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect()
}

//! Stochastic minimax problem instances `min_x max_y f(x, y) = E[f(x, y; ξ)]`.
//!
//! Every instance exposes exact partial gradients, unbiased mini-batch
//! gradients, and the closed-form maximizer `y*(x)` together with the primal
//! function `F(x) = f(x, y*(x))` and its gradient.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConstraintSet;
use crate::rng::{MiniBatch, SampleSpace};
use crate::vector::Vector;

mod policy;
mod quadratic;
mod robust;

pub use policy::{Mdp, PolicyEvalMSPBE, PolicyEvalParams};
pub use quadratic::{QuadraticMinimax, QuadraticParams};
pub use robust::{RobustParams, RobustWeightedLoss};

/// Dimensions, regularity constants and constraint sets of a problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d1: usize,
    pub d2: usize,
    /// Strong-concavity modulus of `f(x, ·)`.
    pub mu: f64,
    /// Lipschitz constant of the full gradient.
    pub l_f: f64,
    /// Per-sample gradient noise level (standard deviation).
    pub sigma: f64,
    pub x_set: ConstraintSet,
    pub y_set: ConstraintSet,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::config("problem dimensions must be positive"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config("strong-concavity modulus mu must be positive"));
        }
        if !(self.l_f >= self.mu && self.l_f.is_finite()) {
            return Err(Error::config("smoothness constant must satisfy L_f >= mu"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("noise level sigma must be non-negative"));
        }
        self.x_set.validate()?;
        self.y_set.validate()?;
        if let Some(d) = self.x_set.dim() {
            check_dim(self.d1, d)?;
        }
        if let Some(d) = self.y_set.dim() {
            check_dim(self.d2, d)?;
        }
        Ok(())
    }

    /// Condition number `κ = L_f / μ`.
    pub fn kappa(&self) -> f64 {
        self.l_f / self.mu
    }

    /// Smoothness of the primal function, `L = L_f (1 + κ)`.
    pub fn primal_smoothness(&self) -> f64 {
        self.l_f * (1.0 + self.kappa())
    }
}

/// Partial gradients `(∇ₓ, ∇ᵧ)` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair {
    pub x: Vector,
    pub y: Vector,
}

impl GradPair {
    pub fn new(x: Vector, y: Vector) -> Self {
        GradPair { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub trait MinimaxProblem: Send + Sync {
    fn spec(&self) -> &ProblemSpec;

    /// Distribution of a single sample `ξ`.
    fn sample_space(&self) -> SampleSpace;

    /// Starting pair `(x₁, y₁)`, feasible for both sets.
    fn initial_point(&self) -> (Vector, Vector);

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64>;

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector>;

    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector>;

    /// Mini-batch average `(1/q) Σ ∇f(x, y; ξᵢ)`.
    fn grad_batch(&self, x: &Vector, y: &Vector, batch: &MiniBatch) -> Result<GradPair>;

    fn y_star(&self, _x: &Vector) -> Result<Vector> {
        Err(Error::unsupported("problem has no closed-form maximizer"))
    }

    /// `∇F(x)` for `F(x) = max_y f(x, y)`.
    fn primal_grad(&self, _x: &Vector) -> Result<Vector> {
        Err(Error::unsupported("problem has no closed-form primal gradient"))
    }

    fn primal_value(&self, x: &Vector) -> Result<f64> {
        let y = self.y_star(x)?;
        self.value(x, &y)
    }

    fn grad(&self, x: &Vector, y: &Vector) -> Result<GradPair> {
        Ok(GradPair::new(self.grad_x(x, y)?, self.grad_y(x, y)?))
    }

    fn check_point(&self, x: &Vector, y: &Vector) -> Result<()> {
        check_dim(self.spec().d1, x.dim())?;
        check_dim(self.spec().d2, y.dim())
    }
}

pub(crate) fn check_batch(batch: &MiniBatch) -> Result<()> {
    if batch.is_empty() {
        Err(Error::contract("mini-batch must not be empty"))
    } else {
        Ok(())
    }
}

/// `M x`, each row accumulated left to right.
pub(crate) fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.ncols(), x.len());
    (0..m.nrows())
        .map(|i| (0..m.ncols()).fold(0.0, |acc, j| acc + m[(i, j)] * x[j]))
        .collect()
}

/// `Mᵀ x`, each entry accumulated left to right.
pub(crate) fn matvec_t(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.nrows(), x.len());
    (0..m.ncols())
        .map(|j| (0..m.nrows()).fold(0.0, |acc, i| acc + m[(i, j)] * x[i]))
        .collect()
}

/// Spectral norm of a symmetric matrix.
pub(crate) fn symmetric_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

pub(crate) fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Spectral norm of the symmetric block matrix `[[A, B], [Bᵀ, C]]`.
pub(crate) fn block_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let (d1, d2) = (a.nrows(), c.nrows());
    let mut m = DMatrix::zeros(d1 + d2, d1 + d2);
    m.view_mut((0, 0), (d1, d1)).copy_from(a);
    m.view_mut((0, d1), (d1, d2)).copy_from(b);
    m.view_mut((d1, 0), (d2, d1)).copy_from(&b.transpose());
    m.view_mut((d1, d1), (d2, d2)).copy_from(c);
    symmetric_norm(&m)
}

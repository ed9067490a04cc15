use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{block_norm, check_batch, matvec, matvec_t, GradPair, MinimaxProblem, ProblemSpec};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{project, ConstraintSet};
use crate::rng::{MiniBatch, RngStream, SampleSpace};
use crate::vector::{dot_slices, Vector};

/// Stream id reserved for synthetic data generation.
pub(crate) const DATA_STREAM: u64 = 0xDA7A;

/// `f(x, y) = ½ xᵀPx + xᵀQy − (μ/2)‖y‖²` with additive Gaussian gradient noise.
///
/// Each sample perturbs `∇ₓ` by `N(0, σ²/d₁ I)` and `∇ᵧ` by `N(0, σ²/d₂ I)`,
/// so the per-sample variance of each partial gradient is exactly `σ²`.
#[derive(Clone, Debug)]
pub struct QuadraticMinimax {
    spec: ProblemSpec,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    x0: Vector,
    y0: Vector,
}

/// Generator settings for a random instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticParams {
    pub d1: usize,
    pub d2: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Eigenvalues of `P` are spread evenly over `[p_min_eig, p_max_eig]`;
    /// a negative lower end gives a nonconvex instance.
    pub p_min_eig: f64,
    pub p_max_eig: f64,
    /// Largest singular value of `Q`.
    pub q_norm: f64,
    /// `‖x₁‖`; the direction is random.
    pub init_norm: f64,
    pub data_seed: u64,
    pub x_set: ConstraintSet,
    pub y_set: ConstraintSet,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        QuadraticParams {
            d1: 10,
            d2: 10,
            mu: 1.0,
            sigma: 0.1,
            p_min_eig: 0.5,
            p_max_eig: 1.0,
            q_norm: 0.5,
            init_norm: 1.0,
            data_seed: 7,
            x_set: ConstraintSet::Unconstrained,
            y_set: ConstraintSet::Unconstrained,
        }
    }
}

impl QuadraticMinimax {
    pub fn new(
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        mu: f64,
        sigma: f64,
        x_set: ConstraintSet,
        y_set: ConstraintSet,
    ) -> Result<Self> {
        let (d1, d2) = (q.nrows(), q.ncols());
        if p.nrows() != d1 || p.ncols() != d1 {
            return Err(Error::DimensionMismatch {
                expected: d1,
                found: p.nrows(),
            });
        }
        if (0..d1).any(|i| (0..i).any(|j| p[(i, j)] != p[(j, i)])) {
            return Err(Error::config("P must be symmetric"));
        }
        if !(mu > 0.0) {
            return Err(Error::config("strong-concavity modulus mu must be positive"));
        }
        let l_f = block_norm(&p, &q, &(-mu * DMatrix::identity(d2, d2))).max(mu);
        let spec = ProblemSpec {
            d1,
            d2,
            mu,
            l_f,
            sigma,
            x_set,
            y_set,
        };
        spec.validate()?;
        let x0 = project(&spec.x_set, &Vector::zeros(d1))?;
        let y0 = project(&spec.y_set, &Vector::zeros(d2))?;
        Ok(QuadraticMinimax { spec, p, q, x0, y0 })
    }

    pub fn generate(params: &QuadraticParams) -> Result<Self> {
        let (d1, d2) = (params.d1, params.d2);
        if d1 == 0 || d2 == 0 {
            return Err(Error::config("problem dimensions must be positive"));
        }
        if params.p_min_eig > params.p_max_eig {
            return Err(Error::config("p_min_eig must not exceed p_max_eig"));
        }
        let mut rng = RngStream::new(params.data_seed, DATA_STREAM);
        let gaussian = DMatrix::from_fn(d1, d1, |_, _| rng.standard_normal());
        let basis = gaussian.qr().q();
        let eigs = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d1, |i, _| {
            if d1 == 1 {
                params.p_max_eig
            } else {
                params.p_min_eig + (params.p_max_eig - params.p_min_eig) * i as f64 / (d1 - 1) as f64
            }
        }));
        let raw = &basis * eigs * basis.transpose();
        let p = DMatrix::from_fn(d1, d1, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)]));

        let q_raw = DMatrix::from_fn(d1, d2, |_, _| rng.standard_normal());
        let top = q_raw.clone().singular_values().max();
        let q = if params.q_norm == 0.0 {
            DMatrix::zeros(d1, d2)
        } else {
            q_raw * (params.q_norm / top)
        };

        let mut problem = Self::new(
            p,
            q,
            params.mu,
            params.sigma,
            params.x_set.clone(),
            params.y_set.clone(),
        )?;
        let dir = Vector::from_fn(d1, |_| rng.standard_normal());
        let start = dir.scale(params.init_norm / dir.norm());
        problem.x0 = project(&problem.spec.x_set, &start)?;
        Ok(problem)
    }

    /// Overrides the starting pair; it is projected onto the feasible sets.
    pub fn with_initial_point(mut self, x0: Vector, y0: Vector) -> Result<Self> {
        self.check_point(&x0, &y0)?;
        self.x0 = project(&self.spec.x_set, &x0)?;
        self.y0 = project(&self.spec.y_set, &y0)?;
        Ok(self)
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn exact_parts(&self, x: &Vector, y: &Vector) -> (Vec<f64>, Vec<f64>) {
        let px = matvec(&self.p, x.as_slice());
        let qy = matvec(&self.q, y.as_slice());
        let gx = px.iter().zip(&qy).map(|(a, b)| a + b).collect();
        let qtx = matvec_t(&self.q, x.as_slice());
        let mu = self.spec.mu;
        let gy = qtx.iter().zip(y.iter()).map(|(a, b)| a - mu * b).collect();
        (gx, gy)
    }
}

impl MinimaxProblem for QuadraticMinimax {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn sample_space(&self) -> SampleSpace {
        SampleSpace::Gaussian {
            dim: self.spec.d1 + self.spec.d2,
        }
    }

    fn initial_point(&self) -> (Vector, Vector) {
        (self.x0.clone(), self.y0.clone())
    }

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_point(x, y)?;
        let px = matvec(&self.p, x.as_slice());
        let qy = matvec(&self.q, y.as_slice());
        Ok(0.5 * dot_slices(x.as_slice(), &px) + dot_slices(x.as_slice(), &qy)
            - 0.5 * self.spec.mu * y.norm_sq())
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check_point(x, y)?;
        Ok(Vector::from_raw(self.exact_parts(x, y).0))
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check_point(x, y)?;
        Ok(Vector::from_raw(self.exact_parts(x, y).1))
    }

    fn grad_batch(&self, x: &Vector, y: &Vector, batch: &MiniBatch) -> Result<GradPair> {
        self.check_point(x, y)?;
        check_batch(batch)?;
        let (d1, d2) = (self.spec.d1, self.spec.d2);
        let MiniBatch::Gaussian { dim, draws } = batch else {
            return Err(Error::contract("quadratic problem expects Gaussian draws"));
        };
        check_dim(d1 + d2, *dim)?;
        let (mut gx, mut gy) = self.exact_parts(x, y);
        if self.spec.sigma > 0.0 {
            let q = batch.len();
            let mut noise = vec![0.0; d1 + d2];
            for row in draws.chunks_exact(*dim) {
                for (acc, z) in noise.iter_mut().zip(row) {
                    *acc += z;
                }
            }
            let sx = self.spec.sigma / (d1 as f64).sqrt() / q as f64;
            let sy = self.spec.sigma / (d2 as f64).sqrt() / q as f64;
            for (g, n) in gx.iter_mut().zip(&noise[..d1]) {
                *g += sx * n;
            }
            for (g, n) in gy.iter_mut().zip(&noise[d1..]) {
                *g += sy * n;
            }
        }
        Ok(GradPair::new(Vector::from_raw(gx), Vector::from_raw(gy)))
    }

    /// `y*(x) = Π_Y(Qᵀx / μ)`: `f(x, ·)` is an isotropic concave quadratic
    /// centred at `Qᵀx / μ`.
    fn y_star(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.spec.d1, x.dim())?;
        let mu = self.spec.mu;
        let centre = Vector::from_raw(matvec_t(&self.q, x.as_slice()).into_iter().map(|v| v / mu).collect());
        project(&self.spec.y_set, &centre)
    }

    /// `∇F(x) = Px + Q y*(x)` (Danskin).
    fn primal_grad(&self, x: &Vector) -> Result<Vector> {
        let y = self.y_star(x)?;
        self.grad_x(x, &y)
    }
}

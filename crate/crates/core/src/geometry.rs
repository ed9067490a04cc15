//! Constraint sets, metric-weighted projections and the gradient mapping.
//!
//! The proximal step used on both sides of the solver is
//!
//! ```text
//! x⁺ = argmin_{x ∈ X} ⟨v, x⟩ + (1/(2γ)) (x − xₜ)ᵀ A (x − xₜ)
//! ```
//!
//! which equals the `A`-weighted projection of `xₜ − γ A⁻¹ v` onto `X`.
//! Only scalar and diagonal metrics exist, so every set admits either an
//! exact finite algorithm or a one-dimensional bisection.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::Vector;

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSet {
    Unconstrained,
    Box { lower: Vector, upper: Vector },
    Ball { center: Vector, radius: f64 },
    Simplex { dim: usize },
}

impl ConstraintSet {
    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self> {
        let set = ConstraintSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        let set = ConstraintSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        let set = ConstraintSet::Simplex { dim };
        set.validate()?;
        Ok(set)
    }

    /// Checks the invariants that deserialization cannot enforce.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSet::Unconstrained => Ok(()),
            ConstraintSet::Box { lower, upper } => {
                check_dim(lower.dim(), upper.dim())?;
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(Error::config("box requires lower <= upper componentwise"));
                }
                Ok(())
            }
            ConstraintSet::Ball { radius, .. } => {
                if radius.is_finite() && *radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("ball radius must be positive and finite"))
                }
            }
            ConstraintSet::Simplex { dim } => {
                if *dim == 0 {
                    Err(Error::config("simplex dimension must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Dimension fixed by the set, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConstraintSet::Unconstrained => None,
            ConstraintSet::Box { lower, .. } => Some(lower.dim()),
            ConstraintSet::Ball { center, .. } => Some(center.dim()),
            ConstraintSet::Simplex { dim } => Some(*dim),
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        matches!(self, ConstraintSet::Unconstrained)
    }

    fn check(&self, v: &Vector) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim(d, v.dim()),
            None => Ok(()),
        }
    }

    /// Membership up to an absolute tolerance.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if self.check(x).is_err() {
            return false;
        }
        match self {
            ConstraintSet::Unconstrained => true,
            ConstraintSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            ConstraintSet::Ball { center, radius } => {
                x.distance(center).map_or(false, |d| d <= radius + tol)
            }
            ConstraintSet::Simplex { .. } => {
                x.iter().all(|v| *v >= -tol) && (x.sum() - 1.0).abs() <= tol
            }
        }
    }
}

/// Positive-definite scaling of a proximal step.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    Identity,
    Scalar(f64),
    Diagonal(Vector),
}

impl Metric {
    pub fn lambda_min(&self) -> f64 {
        match self {
            Metric::Identity => 1.0,
            Metric::Scalar(b) => *b,
            Metric::Diagonal(d) => d.min(),
        }
    }

    pub fn lambda_max(&self) -> f64 {
        match self {
            Metric::Identity => 1.0,
            Metric::Scalar(b) => *b,
            Metric::Diagonal(d) => d.max(),
        }
    }

    /// Whether every eigenvalue is at least `rho`.
    pub fn satisfies_floor(&self, rho: f64) -> bool {
        self.lambda_min() >= rho
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self {
            Metric::Diagonal(d) => {
                check_dim(d.dim(), dim)?;
                if d.iter().all(|a| *a > 0.0 && a.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::contract("diagonal metric entries must be positive"))
                }
            }
            Metric::Scalar(b) if !(*b > 0.0 && b.is_finite()) => {
                Err(Error::contract("scalar metric must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// `i`-th diagonal entry.
    fn weight(&self, i: usize) -> f64 {
        match self {
            Metric::Identity => 1.0,
            Metric::Scalar(b) => *b,
            Metric::Diagonal(d) => d[i],
        }
    }

    fn is_isotropic(&self) -> bool {
        !matches!(self, Metric::Diagonal(_))
    }

    /// `A⁻¹ v`.
    pub fn solve(&self, v: &Vector) -> Result<Vector> {
        self.check(v.dim())?;
        Ok(match self {
            Metric::Identity => v.clone(),
            Metric::Scalar(b) => v.map(|x| x / b),
            Metric::Diagonal(d) => v.zip_with(d, |x, a| x / a)?,
        })
    }

    /// `dᵀ A d`.
    pub fn quadratic_form(&self, d: &Vector) -> Result<f64> {
        self.check(d.dim())?;
        Ok(d
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, x)| acc + self.weight(i) * x * x))
    }
}

/// Euclidean projection onto `set`.
pub fn project(set: &ConstraintSet, v: &Vector) -> Result<Vector> {
    set.check(v)?;
    Ok(match set {
        ConstraintSet::Unconstrained => v.clone(),
        ConstraintSet::Box { lower, upper } => clip_box(v, lower, upper),
        ConstraintSet::Ball { center, radius } => project_ball_radial(v, center, *radius),
        ConstraintSet::Simplex { .. } => project_simplex_sorted(v),
    })
}

/// Minimizer of `⟨v, x⟩ + (1/(2γ))(x − xₜ)ᵀA(x − xₜ)` over `set`.
pub fn generalized_project(
    set: &ConstraintSet,
    x_t: &Vector,
    v: &Vector,
    metric: &Metric,
    gamma: f64,
) -> Result<Vector> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::contract("step scale gamma must be positive"));
    }
    check_dim(x_t.dim(), v.dim())?;
    set.check(x_t)?;
    metric.check(x_t.dim())?;

    let target = Vector::from_raw(
        x_t.iter()
            .zip(v.iter())
            .enumerate()
            .map(|(i, (x, g))| match metric {
                Metric::Identity => x - gamma * g,
                _ => x - gamma * (g / metric.weight(i)),
            })
            .collect(),
    );

    Ok(match set {
        ConstraintSet::Unconstrained => target,
        // Separable: the weights do not move the minimizer.
        ConstraintSet::Box { lower, upper } => clip_box(&target, lower, upper),
        ConstraintSet::Ball { center, radius } if metric.is_isotropic() => {
            project_ball_radial(&target, center, *radius)
        }
        ConstraintSet::Ball { center, radius } => {
            project_ball_weighted(&target, center, *radius, metric)
        }
        ConstraintSet::Simplex { .. } if metric.is_isotropic() => project_simplex_sorted(&target),
        ConstraintSet::Simplex { .. } => project_simplex_weighted(&target, metric),
    })
}

/// `Dₜ(x, xₜ) = ½ (x − xₜ)ᵀ A (x − xₜ)`.
pub fn bregman_distance(metric: &Metric, x: &Vector, x_t: &Vector) -> Result<f64> {
    Ok(0.5 * metric.quadratic_form(&x.sub(x_t)?)?)
}

/// `G(xₜ, g, γ) = (xₜ − x⁺)/γ` with `x⁺` the generalized projection of the
/// step along `g`.
pub fn gradient_mapping(
    set: &ConstraintSet,
    x_t: &Vector,
    g: &Vector,
    metric: &Metric,
    gamma: f64,
) -> Result<Vector> {
    let next = generalized_project(set, x_t, g, metric, gamma)?;
    Ok(x_t.zip_with(&next, |a, b| (a - b) / gamma)?)
}

fn clip_box(v: &Vector, lower: &Vector, upper: &Vector) -> Vector {
    Vector::from_raw(
        v.iter()
            .zip(lower.iter().zip(upper.iter()))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect(),
    )
}

fn project_ball_radial(v: &Vector, center: &Vector, radius: f64) -> Vector {
    let d = v.sub(center).expect("dimension checked by caller");
    let norm = d.norm();
    if norm <= radius {
        return v.clone();
    }
    let s = radius / norm;
    Vector::from_raw(center.iter().zip(d.iter()).map(|(c, x)| c + s * x).collect())
}

/// `A`-weighted projection onto a ball: `xᵢ = cᵢ + aᵢdᵢ/(aᵢ + θ)` with the
/// multiplier `θ ≥ 0` found by bisection on `‖x − c‖ = r`.
fn project_ball_weighted(v: &Vector, center: &Vector, radius: f64, metric: &Metric) -> Vector {
    let d = v.sub(center).expect("dimension checked by caller");
    if d.norm() <= radius {
        return v.clone();
    }
    let point = |theta: f64| -> Vector {
        Vector::from_raw(
            d.iter()
                .enumerate()
                .map(|(i, di)| {
                    let a = metric.weight(i);
                    center[i] + a * di / (a + theta)
                })
                .collect(),
        )
    };
    let radius_at = |theta: f64| point(theta).distance(center).expect("same dimension");

    let weighted_norm = d
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, di)| acc + (metric.weight(i) * di).powi(2))
        .sqrt();
    let (mut lo, mut hi) = (0.0_f64, weighted_norm / radius);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if radius_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` is always on the feasible side.
    project_ball_radial(&point(hi), center, radius)
}

/// Sort-based Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex_sorted(v: &Vector) -> Vector {
    let mut sorted = v.as_slice().to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.map(|x| (x - tau).max(0.0))
}

/// `A`-weighted projection onto the simplex: `xᵢ = max(0, zᵢ − τ/aᵢ)` with
/// `τ` located by bisection, then recomputed in closed form on the support.
fn project_simplex_weighted(z: &Vector, metric: &Metric) -> Vector {
    let n = z.dim();
    let at = |tau: f64| -> Vector {
        Vector::from_raw(
            (0..n)
                .map(|i| (z[i] - tau / metric.weight(i)).max(0.0))
                .collect(),
        )
    };
    let mut lo = (0..n)
        .map(|i| metric.weight(i) * (z[i] - 1.0))
        .fold(f64::INFINITY, f64::min);
    let mut hi = (0..n)
        .map(|i| metric.weight(i) * z[i])
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if at(mid).sum() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);

    // Exact multiplier for the support identified by the bisection.
    let support: Vec<usize> = (0..n).filter(|&i| z[i] - tau / metric.weight(i) > 0.0).collect();
    if !support.is_empty() {
        let num = support.iter().fold(0.0, |acc, &i| acc + z[i]) - 1.0;
        let den = support.iter().fold(0.0, |acc, &i| acc + 1.0 / metric.weight(i));
        let exact = num / den;
        let consistent = (0..n).all(|i| {
            let inside = z[i] - exact / metric.weight(i) > 0.0;
            inside == support.contains(&i)
        });
        if consistent {
            return at(exact);
        }
    }
    at(tau)
}

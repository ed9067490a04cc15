//! Recursive gradient estimators `vₜ ≈ ∇ₓf(xₜ, yₜ)` and `wₜ ≈ ∇ᵧf(xₜ, yₜ)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problems::{GradPair, MinimaxProblem};
use crate::rng::MiniBatch;
use crate::vector::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Momentum,
    VarianceReduced,
}

/// Gradients of one mini-batch at the new and at the previous iterate.
///
/// Only [`SameBatchGrads::evaluate`] ties both evaluations to a single batch;
/// [`SameBatchGrads::from_parts`] leaves that to the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct SameBatchGrads {
    pub at_new: GradPair,
    pub at_old: GradPair,
}

impl SameBatchGrads {
    pub fn evaluate<P: MinimaxProblem + ?Sized>(
        problem: &P,
        batch: &MiniBatch,
        new: (&Vector, &Vector),
        old: (&Vector, &Vector),
    ) -> Result<Self> {
        Ok(SameBatchGrads {
            at_new: problem.grad_batch(new.0, new.1, batch)?,
            at_old: problem.grad_batch(old.0, old.1, batch)?,
        })
    }

    pub fn from_parts(at_new: GradPair, at_old: GradPair) -> Self {
        SameBatchGrads { at_new, at_old }
    }
}

/// The pair `(vₜ, wₜ)` together with the iterate it was last evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    kind: EstimatorKind,
    v: Vector,
    w: Vector,
    prev: Option<(Vector, Vector)>,
}

impl EstimatorState {
    /// `v₁, w₁` from the first batch gradient at `(x₁, y₁)`.
    pub fn new(kind: EstimatorKind, first: GradPair, x: &Vector, y: &Vector) -> Self {
        let prev = match kind {
            EstimatorKind::Momentum => None,
            EstimatorKind::VarianceReduced => Some((x.clone(), y.clone())),
        };
        EstimatorState {
            kind,
            v: first.x,
            w: first.y,
            prev,
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn v(&self) -> &Vector {
        &self.v
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    /// Iterate at which the STORM correction term must be evaluated.
    pub fn previous_iterate(&self) -> Option<(&Vector, &Vector)> {
        self.prev.as_ref().map(|(x, y)| (x, y))
    }

    /// `v ← α g + (1 − α) v`, likewise for `w` with `β`.
    pub fn momentum_update(&mut self, g_new: &GradPair, alpha: f64, beta: f64) -> Result<()> {
        check_coefficients(alpha, beta)?;
        if self.kind != EstimatorKind::Momentum {
            return Err(Error::contract("momentum update on a variance-reduced estimator"));
        }
        self.v = momentum_combine(&self.v, &g_new.x, alpha)?;
        self.w = momentum_combine(&self.w, &g_new.y, beta)?;
        Ok(())
    }

    /// `v ← g(new) + (1 − α)(v − g(old))` with both gradients on one batch;
    /// the new point becomes the previous iterate.
    pub fn storm_update(
        &mut self,
        grads: &SameBatchGrads,
        new: (&Vector, &Vector),
        alpha: f64,
        beta: f64,
    ) -> Result<()> {
        check_coefficients(alpha, beta)?;
        if self.kind != EstimatorKind::VarianceReduced {
            return Err(Error::contract("STORM update on a momentum estimator"));
        }
        self.v = storm_combine(&self.v, &grads.at_new.x, &grads.at_old.x, alpha)?;
        self.w = storm_combine(&self.w, &grads.at_new.y, &grads.at_old.y, beta)?;
        self.prev = Some((new.0.clone(), new.1.clone()));
        Ok(())
    }
}

fn check_coefficients(alpha: f64, beta: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 && beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "momentum coefficients must lie in (0, 1], got alpha = {alpha}, beta = {beta}"
        )))
    }
}

/// `α g + (1 − α) v`; exactly `g` when `α = 1`.
pub fn momentum_combine(v: &Vector, g: &Vector, alpha: f64) -> Result<Vector> {
    check_dim(v.dim(), g.dim())?;
    if alpha == 1.0 {
        return Ok(g.clone());
    }
    v.zip_with(g, |vi, gi| alpha * gi + (1.0 - alpha) * vi)
}

/// `g_new + (1 − α)(v − g_old)`; exactly `g_new` when `α = 1`.
pub fn storm_combine(v: &Vector, g_new: &Vector, g_old: &Vector, alpha: f64) -> Result<Vector> {
    check_dim(v.dim(), g_new.dim())?;
    check_dim(v.dim(), g_old.dim())?;
    if alpha == 1.0 {
        return Ok(g_new.clone());
    }
    let c = 1.0 - alpha;
    Ok(Vector::from_fn(v.dim(), |i| g_new[i] + c * (v[i] - g_old[i])))
}

/// The same update written as `α g_new + (1 − α)(v + g_new − g_old)`.
pub fn storm_combine_rearranged(v: &Vector, g_new: &Vector, g_old: &Vector, alpha: f64) -> Result<Vector> {
    check_dim(v.dim(), g_new.dim())?;
    check_dim(v.dim(), g_old.dim())?;
    Ok(Vector::from_fn(v.dim(), |i| {
        alpha * g_new[i] + (1.0 - alpha) * (v[i] + g_new[i] - g_old[i])
    }))
}

/// Squared errors `(‖∇ₓf(x, y) − v‖², ‖∇ᵧf(x, y) − w‖²)`.
pub fn estimator_error<P: MinimaxProblem + ?Sized>(
    problem: &P,
    state: &EstimatorState,
    x: &Vector,
    y: &Vector,
) -> Result<(f64, f64)> {
    let exact = problem.grad(x, y)?;
    Ok((
        exact.x.sub(&state.v)?.norm_sq(),
        exact.y.sub(&state.w)?.norm_sq(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn momentum_examples() {
        assert_eq!(momentum_combine(&v(&[2.0, 0.0]), &v(&[0.0, 2.0]), 0.5).unwrap(), v(&[1.0, 1.0]));
        let g = v(&[0.3, -1e-17]);
        assert_eq!(momentum_combine(&v(&[5.0, 7.0]), &g, 1.0).unwrap(), g);
        let fixed = v(&[0.1, 0.7]);
        for alpha in [0.01, 0.5, 0.99] {
            let out = momentum_combine(&fixed, &fixed, alpha).unwrap();
            assert!(out.max_abs_diff(&fixed).unwrap() < 1e-16);
        }
    }

    #[test]
    fn storm_forms_agree() {
        let (vt, gn, go) = (v(&[1.0, -2.0]), v(&[0.5, 0.25]), v(&[0.75, 3.0]));
        let a = storm_combine(&vt, &gn, &go, 0.3).unwrap();
        let b = storm_combine_rearranged(&vt, &gn, &go, 0.3).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
        assert_eq!(storm_combine(&vt, &gn, &go, 1.0).unwrap(), gn);
    }

    #[test]
    fn coefficient_and_kind_checks() {
        let g = GradPair::new(v(&[1.0]), v(&[1.0]));
        let x = v(&[0.0]);
        let mut s = EstimatorState::new(EstimatorKind::Momentum, g.clone(), &x, &x);
        assert!(s.momentum_update(&g, 0.0, 0.5).is_err());
        assert!(s.momentum_update(&g, 0.5, 1.5).is_err());
        let pair = SameBatchGrads::from_parts(g.clone(), g.clone());
        assert!(s.storm_update(&pair, (&x, &x), 0.5, 0.5).is_err());
        let mut r = EstimatorState::new(EstimatorKind::VarianceReduced, g.clone(), &x, &x);
        assert!(r.momentum_update(&g, 0.5, 0.5).is_err());
        assert!(r.storm_update(&pair, (&x, &x), 0.5, 0.5).is_ok());
    }

    #[test]
    fn updates_are_affine() {
        let (vt, gn, go) = (v(&[1.0, -2.0]), v(&[0.5, 0.25]), v(&[0.75, 3.0]));
        let c = 4.0;
        let scaled = storm_combine(&vt.scale(c), &gn.scale(c), &go.scale(c), 0.25).unwrap();
        assert_eq!(scaled, storm_combine(&vt, &gn, &go, 0.25).unwrap().scale(c));
        let scaled = momentum_combine(&vt.scale(c), &gn.scale(c), 0.25).unwrap();
        assert_eq!(scaled, momentum_combine(&vt, &gn, 0.25).unwrap().scale(c));
    }
}

//! Adaptive metric generators for the x-side matrix `Aₜ` and the y-side
//! scalar `bₜ`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Metric;
use crate::vector::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptRule {
    /// `ṽₜ = ϱṽₜ₋₁ + (1−ϱ)g²`, `A = diag(√ṽₜ + ρ)`.
    AdamDiag,
    /// `bₜ = ϱbₜ₋₁ + (1−ϱ)‖g‖`, `B = (clamp(bₜ) + ρ)·I`.
    AdamGlobal,
    /// As [`AdaptRule::AdamDiag`] with `g` replaced by the residual `g − vₜ`.
    AdaBeliefDiag,
    /// As [`AdaptRule::AdamGlobal`] with `g` replaced by the residual `g − wₜ`.
    AdaBeliefGlobal,
    /// The identity, every iteration.
    Constant,
}

impl AdaptRule {
    /// Whether the rule emits a multiple of the identity.
    pub fn is_scalar(self) -> bool {
        !matches!(self, AdaptRule::AdamDiag | AdaptRule::AdaBeliefDiag)
    }

    fn uses_residual(self) -> bool {
        matches!(self, AdaptRule::AdaBeliefDiag | AdaptRule::AdaBeliefGlobal)
    }
}

/// Settings for one metric generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptParams {
    pub rule: AdaptRule,
    /// Mixing weight `ϱ ∈ (0, 1)`.
    pub varrho: f64,
    /// Offset `ρ > 0`; every emitted metric has `λ_min ≥ ρ`.
    pub rho: f64,
    /// Initial `b₀` for the global rules.
    pub b0: f64,
    pub b_floor: f64,
    pub b_cap: f64,
    /// Optional upper bound on the diagonal entries.
    pub a_cap: Option<f64>,
}

impl Default for AdaptParams {
    fn default() -> Self {
        AdaptParams {
            rule: AdaptRule::Constant,
            varrho: 0.1,
            rho: 0.001,
            b0: 1.0,
            b_floor: 1e-3,
            b_cap: 3.0,
            a_cap: None,
        }
    }
}

impl AdaptParams {
    pub fn with_rule(rule: AdaptRule) -> Self {
        AdaptParams {
            rule,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.varrho > 0.0 && self.varrho < 1.0) {
            return Err(Error::config("varrho must lie in (0, 1)"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho must be positive"));
        }
        if self.rule == AdaptRule::Constant && self.rho > 1.0 {
            return Err(Error::config("the constant (identity) metric cannot guarantee rho > 1"));
        }
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::config("b0 must be positive"));
        }
        if !(self.b_floor > 0.0 && self.b_cap >= self.b_floor && self.b_cap.is_finite()) {
            return Err(Error::config("need 0 < b_floor <= b_cap"));
        }
        if let Some(cap) = self.a_cap {
            if !(cap >= self.rho && cap.is_finite()) {
                return Err(Error::config("a_cap must be at least rho"));
            }
        }
        Ok(())
    }

    /// Guaranteed lower bound on the eigenvalues of every emitted metric.
    pub fn lambda_floor(&self) -> f64 {
        match self.rule {
            AdaptRule::Constant => 1.0,
            _ => self.rho,
        }
    }

    /// Bounds `(b, b̂)` on the emitted scalar of a scalar rule.
    pub fn scalar_bounds(&self) -> (f64, f64) {
        match self.rule {
            AdaptRule::Constant => (1.0, 1.0),
            _ => (self.b_floor + self.rho, self.b_cap + self.rho),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Moment {
    None,
    Diag(Vector),
    Global(f64),
}

/// Running statistics of one metric generator.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptState {
    params: AdaptParams,
    moment: Moment,
    t: u64,
}

impl AdaptState {
    pub fn new(params: AdaptParams, dim: usize) -> Result<Self> {
        params.validate()?;
        let moment = match params.rule {
            AdaptRule::Constant => Moment::None,
            AdaptRule::AdamDiag | AdaptRule::AdaBeliefDiag => Moment::Diag(Vector::zeros(dim)),
            AdaptRule::AdamGlobal | AdaptRule::AdaBeliefGlobal => Moment::Global(params.b0),
        };
        Ok(AdaptState { params, moment, t: 0 })
    }

    pub fn params(&self) -> &AdaptParams {
        &self.params
    }

    /// Number of updates applied so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Unclamped `bₜ` of a global rule.
    pub fn raw_scalar(&self) -> Option<f64> {
        match self.moment {
            Moment::Global(b) => Some(b),
            _ => None,
        }
    }

    /// Advances the state with the gradient `g` and returns the new metric.
    /// The AdaBelief rules also need the current estimator.
    pub fn update(&mut self, g: &Vector, estimator: Option<&Vector>) -> Result<Metric> {
        match self.params.rule {
            AdaptRule::Constant => {
                check_finite(g)?;
                self.t += 1;
                Ok(Metric::Identity)
            }
            AdaptRule::AdamDiag => self.update_adam_diag(g),
            AdaptRule::AdamGlobal => self.update_global_norm(g),
            AdaptRule::AdaBeliefDiag | AdaptRule::AdaBeliefGlobal => {
                let est = estimator.ok_or_else(|| Error::contract("AdaBelief rules need the current estimator"))?;
                self.update_adabelief(g, est)
            }
        }
    }

    pub fn update_adam_diag(&mut self, g: &Vector) -> Result<Metric> {
        self.expect_rule(AdaptRule::AdamDiag)?;
        self.advance_diag(g)
    }

    pub fn update_global_norm(&mut self, g: &Vector) -> Result<Metric> {
        self.expect_rule(AdaptRule::AdamGlobal)?;
        self.advance_global(g.norm(), g)
    }

    pub fn update_adabelief(&mut self, g: &Vector, estimator: &Vector) -> Result<Metric> {
        if !self.params.rule.uses_residual() {
            return Err(Error::contract("state does not follow an AdaBelief rule"));
        }
        let residual = g.sub(estimator)?;
        match self.params.rule {
            AdaptRule::AdaBeliefDiag => self.advance_diag(&residual),
            _ => self.advance_global(residual.norm(), &residual),
        }
    }

    fn expect_rule(&self, rule: AdaptRule) -> Result<()> {
        if self.params.rule == rule {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "state follows {:?}, not {rule:?}",
                self.params.rule
            )))
        }
    }

    fn advance_diag(&mut self, g: &Vector) -> Result<Metric> {
        check_finite(g)?;
        let p = &self.params;
        let Moment::Diag(v) = &mut self.moment else {
            unreachable!("diag rules hold a diagonal moment");
        };
        check_dim(v.dim(), g.dim())?;
        *v = v.zip_with(g, |vi, gi| p.varrho * vi + (1.0 - p.varrho) * gi * gi)?;
        let diag = v.map(|vi| {
            let a = vi.sqrt() + p.rho;
            p.a_cap.map_or(a, |cap| a.min(cap))
        });
        self.t += 1;
        let metric = Metric::Diagonal(diag);
        debug_assert!(metric.satisfies_floor(p.rho));
        Ok(metric)
    }

    fn advance_global(&mut self, norm: f64, g: &Vector) -> Result<Metric> {
        check_finite(g)?;
        let p = &self.params;
        let Moment::Global(b) = &mut self.moment else {
            unreachable!("global rules hold a scalar moment");
        };
        *b = p.varrho * *b + (1.0 - p.varrho) * norm;
        let emitted = b.clamp(p.b_floor, p.b_cap) + p.rho;
        self.t += 1;
        debug_assert!(emitted >= p.rho);
        Ok(Metric::Scalar(emitted))
    }
}

fn check_finite(g: &Vector) -> Result<()> {
    match g.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

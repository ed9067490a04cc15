use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadratic::DATA_STREAM;
use super::{
    block_norm, check_batch, matvec, matvec_t, symmetric_min_eigenvalue, GradPair, MinimaxProblem, ProblemSpec,
};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{project, ConstraintSet};
use crate::rng::{MiniBatch, RngStream, SampleSpace};
use crate::vector::{dot_slices, Vector};

/// A finite Markov decision process with a fixed policy and linear features.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a][s']`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `policy[s][a]`.
    pub policy: Vec<Vec<f64>>,
    /// `features[s]`, all of the same length.
    pub features: Vec<Vec<f64>>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.policy.first().map_or(0, Vec::len)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a, k) = (self.n_states(), self.n_actions(), self.feature_dim());
        if s == 0 || a == 0 || k == 0 {
            return Err(Error::config("MDP needs states, actions and features"));
        }
        let is_dist = |row: &[f64], len: usize| {
            row.len() == len
                && row.iter().all(|p| p.is_finite() && *p >= 0.0)
                && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        let shapes_ok = self.policy.len() == s
            && self.rewards.len() == s
            && self.features.len() == s
            && self.policy.iter().all(|p| is_dist(p, a))
            && self.features.iter().all(|f| f.len() == k && f.iter().all(|v| v.is_finite()))
            && self.transitions.iter().all(|ta| ta.len() == a && ta.iter().all(|p| is_dist(p, s)))
            && self.rewards.iter().all(|ra| {
                ra.len() == a && ra.iter().all(|r| r.len() == s && r.iter().all(|v| v.is_finite()))
            });
        if shapes_ok {
            Ok(())
        } else {
            Err(Error::config("MDP tables have inconsistent shapes or invalid probabilities"))
        }
    }

    /// State-to-state transition matrix under the policy.
    pub fn policy_transition(&self) -> DMatrix<f64> {
        let s = self.n_states();
        DMatrix::from_fn(s, s, |i, j| {
            (0..self.n_actions()).fold(0.0, |acc, a| acc + self.policy[i][a] * self.transitions[i][a][j])
        })
    }

    /// Stationary distribution `d = dP_π`, `Σd = 1`, by a direct linear solve.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let s = self.n_states();
        let mut system = self.policy_transition().transpose() - DMatrix::identity(s, s);
        for j in 0..s {
            system[(s - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(s);
        rhs[s - 1] = 1.0;
        let d = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Data("policy chain has no unique stationary distribution".into()))?;
        if d.iter().any(|p| *p < -1e-12) {
            return Err(Error::Data("stationary solve produced negative mass".into()));
        }
        Ok(d.iter().map(|p| p.max(0.0)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyEvalParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub feature_dim: usize,
    /// Discount factor `τ`.
    pub discount: f64,
    pub reward_bound: f64,
    pub data_seed: u64,
    pub x_set: ConstraintSet,
}

impl Default for PolicyEvalParams {
    fn default() -> Self {
        PolicyEvalParams {
            n_states: 5,
            n_actions: 2,
            feature_dim: 3,
            discount: 0.95,
            reward_bound: 1.0,
            data_seed: 5,
            x_set: ConstraintSet::Unconstrained,
        }
    }
}

/// Policy evaluation through the saddle-point form of the mean squared
/// projected Bellman error:
///
/// ```text
/// f(θ, ω) = ⟨r̄ + Gθ, ω⟩ − ½ ωᵀHω
/// H = E[φφᵀ],  G = E[φ(τφ' − φ)ᵀ],  r̄ = E[Rφ]
/// ```
///
/// with expectations over `s ~ d`, `a ~ π(·|s)`, `s' ~ P(·|s, a)`. Samples are
/// i.i.d. transitions from the stationary distribution.
#[derive(Clone, Debug)]
pub struct PolicyEvalMSPBE {
    spec: ProblemSpec,
    mdp: Mdp,
    discount: f64,
    /// `(s, a, s')` for each entry of the categorical sample space.
    triples: Vec<(usize, usize, usize)>,
    probabilities: Vec<f64>,
    h: DMatrix<f64>,
    g: DMatrix<f64>,
    r_bar: Vec<f64>,
}

impl PolicyEvalMSPBE {
    pub fn new(mdp: Mdp, discount: f64, x_set: ConstraintSet) -> Result<Self> {
        mdp.validate()?;
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::config("discount must lie in [0, 1)"));
        }
        let d = mdp.stationary_distribution()?;
        let k = mdp.feature_dim();
        let mut triples = Vec::new();
        let mut probabilities = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                for s2 in 0..mdp.n_states() {
                    let p = d[s] * mdp.policy[s][a] * mdp.transitions[s][a][s2];
                    if p > 0.0 {
                        triples.push((s, a, s2));
                        probabilities.push(p);
                    }
                }
            }
        }
        let total: f64 = probabilities.iter().sum();
        probabilities.iter_mut().for_each(|p| *p /= total);

        let mut h = DMatrix::zeros(k, k);
        let mut g = DMatrix::zeros(k, k);
        let mut r_bar = vec![0.0; k];
        for (&(s, a, s2), &p) in triples.iter().zip(&probabilities) {
            let phi = &mdp.features[s];
            let phi_next = &mdp.features[s2];
            for i in 0..k {
                r_bar[i] += p * mdp.rewards[s][a][s2] * phi[i];
                for j in 0..k {
                    h[(i, j)] += p * phi[i] * phi[j];
                    g[(i, j)] += p * phi[i] * (discount * phi_next[j] - phi[j]);
                }
            }
        }
        let mu = symmetric_min_eigenvalue(&h);
        if !(mu > 0.0) {
            return Err(Error::Data("feature covariance is singular".into()));
        }
        let l_f = block_norm(&DMatrix::zeros(k, k), &g.transpose(), &(-&h)).max(mu);

        let mut problem = PolicyEvalMSPBE {
            spec: ProblemSpec {
                d1: k,
                d2: k,
                mu,
                l_f,
                sigma: 0.0,
                x_set,
                y_set: ConstraintSet::Unconstrained,
            },
            mdp,
            discount,
            triples,
            probabilities,
            h,
            g,
            r_bar,
        };
        let (x0, y0) = problem.initial_point();
        problem.spec.sigma = problem.noise_level(&x0, &y0);
        problem.spec.validate()?;
        Ok(problem)
    }

    /// A random MDP: transition rows, policy rows and features are drawn
    /// from uniform or Gaussian entries; rewards are uniform in
    /// `[−reward_bound, reward_bound]`.
    pub fn generate(params: &PolicyEvalParams) -> Result<Self> {
        let (s, a, k) = (params.n_states, params.n_actions, params.feature_dim);
        if s == 0 || a == 0 || k == 0 || k > s {
            return Err(Error::config("need states, actions and 0 < feature_dim <= n_states"));
        }
        let mut rng = RngStream::new(params.data_seed, DATA_STREAM);
        let dist = |n: usize, rng: &mut RngStream| {
            let raw: Vec<f64> = (0..n).map(|_| 0.1 + rng.uniform()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / total).collect::<Vec<_>>()
        };
        let transitions = (0..s).map(|_| (0..a).map(|_| dist(s, &mut rng)).collect()).collect();
        let policy = (0..s).map(|_| dist(a, &mut rng)).collect();
        let rewards = (0..s)
            .map(|_| {
                (0..a)
                    .map(|_| {
                        (0..s)
                            .map(|_| params.reward_bound * (2.0 * rng.uniform() - 1.0))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let features = (0..s).map(|_| (0..k).map(|_| rng.standard_normal()).collect()).collect();
        let mdp = Mdp {
            transitions,
            rewards,
            policy,
            features,
        };
        Self::new(mdp, params.discount, params.x_set.clone())
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn r_bar(&self) -> &[f64] {
        &self.r_bar
    }

    /// Sampling probability of every `(s, a, s')` triple.
    pub fn transition_probabilities(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.triples.iter().copied().zip(self.probabilities.iter().copied())
    }

    /// Per-transition gradients `((φᵀω)(τφ' − φ), δφ − (φᵀω)φ)` with TD error
    /// `δ = R + τφ'ᵀθ − φᵀθ`.
    fn sample_grad(&self, theta: &[f64], omega: &[f64], index: usize) -> (Vec<f64>, Vec<f64>) {
        let (s, a, s2) = self.triples[index];
        let phi = &self.mdp.features[s];
        let phi_next = &self.mdp.features[s2];
        let pred = dot_slices(phi, omega);
        let td = self.mdp.rewards[s][a][s2] + self.discount * dot_slices(phi_next, theta) - dot_slices(phi, theta);
        let gx = phi
            .iter()
            .zip(phi_next)
            .map(|(p, pn)| pred * (self.discount * pn - p))
            .collect();
        let gy = phi.iter().map(|p| td * p - pred * p).collect();
        (gx, gy)
    }

    fn noise_level(&self, x: &Vector, y: &Vector) -> f64 {
        let exact = self.grad(x, y).expect("valid point");
        let (mut vx, mut vy) = (0.0, 0.0);
        for (i, &p) in self.probabilities.iter().enumerate() {
            let (gx, gy) = self.sample_grad(x.as_slice(), y.as_slice(), i);
            vx += p * gx.iter().zip(exact.x.iter()).fold(0.0, |acc, (a, b)| acc + (a - b).powi(2));
            vy += p * gy.iter().zip(exact.y.iter()).fold(0.0, |acc, (a, b)| acc + (a - b).powi(2));
        }
        vx.max(vy).sqrt()
    }

    /// `r̄ + Gθ`.
    fn shifted(&self, theta: &Vector) -> Vec<f64> {
        matvec(&self.g, theta.as_slice())
            .into_iter()
            .zip(&self.r_bar)
            .map(|(gt, r)| r + gt)
            .collect()
    }
}

impl MinimaxProblem for PolicyEvalMSPBE {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn sample_space(&self) -> SampleSpace {
        SampleSpace::categorical(&self.probabilities).expect("probabilities validated at construction")
    }

    fn initial_point(&self) -> (Vector, Vector) {
        let k = self.spec.d1;
        let x0 = project(&self.spec.x_set, &Vector::zeros(k)).expect("dimension checked");
        (x0, Vector::zeros(k))
    }

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_point(x, y)?;
        let hy = matvec(&self.h, y.as_slice());
        Ok(dot_slices(&self.shifted(x), y.as_slice()) - 0.5 * dot_slices(y.as_slice(), &hy))
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check_point(x, y)?;
        Ok(Vector::from_raw(matvec_t(&self.g, y.as_slice())))
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check_point(x, y)?;
        let hy = matvec(&self.h, y.as_slice());
        Ok(Vector::from_raw(
            self.shifted(x).into_iter().zip(hy).map(|(a, b)| a - b).collect(),
        ))
    }

    fn grad_batch(&self, x: &Vector, y: &Vector, batch: &MiniBatch) -> Result<GradPair> {
        self.check_point(x, y)?;
        check_batch(batch)?;
        let MiniBatch::Indices(idx) = batch else {
            return Err(Error::contract("policy evaluation expects transition indices"));
        };
        let k = self.spec.d1;
        let q = idx.len() as f64;
        let (mut gx, mut gy) = (vec![0.0; k], vec![0.0; k]);
        for &i in idx {
            if i >= self.triples.len() {
                return Err(Error::contract("transition index out of range"));
            }
            let (sx, sy) = self.sample_grad(x.as_slice(), y.as_slice(), i);
            for j in 0..k {
                gx[j] += sx[j] / q;
                gy[j] += sy[j] / q;
            }
        }
        Ok(GradPair::new(Vector::from_raw(gx), Vector::from_raw(gy)))
    }

    /// `ω*(θ) = H⁻¹(r̄ + Gθ)`.
    fn y_star(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.spec.d1, x.dim())?;
        let rhs = DVector::from_vec(self.shifted(x));
        let sol = self
            .h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Data("feature covariance is not positive definite".into()))?
            .solve(&rhs);
        Ok(Vector::from_raw(sol.iter().copied().collect()))
    }

    fn primal_grad(&self, x: &Vector) -> Result<Vector> {
        let y = self.y_star(x)?;
        self.grad_x(x, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states that swap deterministically, one action.
    fn swap_mdp() -> Mdp {
        Mdp {
            transitions: vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            rewards: vec![vec![vec![0.0, 1.0]], vec![vec![-1.0, 0.0]]],
            policy: vec![vec![1.0], vec![1.0]],
            features: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        }
    }

    #[test]
    fn stationary_distribution_of_swap_chain() {
        let d = swap_mdp().stationary_distribution().unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_matrices() {
        let p = PolicyEvalMSPBE::new(swap_mdp(), 0.5, ConstraintSet::Unconstrained).unwrap();
        // H = ½ diag(1, 4); G = ½ [[−1, τ·2], [τ·1, −4]] with τ = ½.
        let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        let g = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -2.0]);
        assert!((p.h() - h).norm() < 1e-15);
        assert!((p.g() - g).norm() < 1e-15);
        assert_eq!(p.r_bar(), &[0.5, -1.0]);
        assert!((p.spec().mu - 0.5).abs() < 1e-15);
    }

    #[test]
    fn enumerated_expectation_matches_exact_gradient() {
        let p = PolicyEvalMSPBE::generate(&PolicyEvalParams::default()).unwrap();
        let x = Vector::new(vec![0.3, -0.7, 1.1]).unwrap();
        let y = Vector::new(vec![-0.2, 0.5, 0.4]).unwrap();
        let (mut ex, mut ey) = (vec![0.0; 3], vec![0.0; 3]);
        for (i, (_, prob)) in p.transition_probabilities().enumerate() {
            let (gx, gy) = p.sample_grad(x.as_slice(), y.as_slice(), i);
            for j in 0..3 {
                ex[j] += prob * gx[j];
                ey[j] += prob * gy[j];
            }
        }
        let exact = p.grad(&x, &y).unwrap();
        assert!(exact.x.max_abs_diff(&Vector::new(ex).unwrap()).unwrap() < 1e-12);
        assert!(exact.y.max_abs_diff(&Vector::new(ey).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn maximizer_zeroes_dual_gradient() {
        let p = PolicyEvalMSPBE::generate(&PolicyEvalParams::default()).unwrap();
        let x = Vector::new(vec![1.0, 2.0, -0.5]).unwrap();
        let y = p.y_star(&x).unwrap();
        assert!(p.grad_y(&x, &y).unwrap().norm() < 1e-10);
        assert!(p.spec().sigma > 0.0);
    }
}

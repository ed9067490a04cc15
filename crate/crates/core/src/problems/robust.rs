use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::quadratic::DATA_STREAM;
use super::{check_batch, symmetric_norm, GradPair, MinimaxProblem, ProblemSpec};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{project, ConstraintSet};
use crate::rng::{MiniBatch, RngStream, SampleSpace};
use crate::vector::{dot_slices, Vector};

/// Group-robust logistic regression:
///
/// ```text
/// f(w, u) = Σᵢ uᵢ Lᵢ(w) − ϱ ‖u − 1/n‖²,   u ∈ simplex
/// ```
///
/// where `Lᵢ` is the mean logistic loss on group `i`. A sample is one data
/// point drawn uniformly from the pooled data set; its gradient is
/// importance-weighted by `N / Nᵢ` so batch gradients are unbiased.
#[derive(Clone, Debug)]
pub struct RobustWeightedLoss {
    spec: ProblemSpec,
    /// Feature rows with a trailing bias entry of 1.
    features: Vec<Vec<f64>>,
    /// Labels in `{−1, +1}`.
    labels: Vec<f64>,
    groups: Vec<usize>,
    group_sizes: Vec<usize>,
    varrho_reg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustParams {
    pub n_groups: usize,
    pub samples_per_group: usize,
    /// Weight `ϱ` of the pull towards uniform group weights.
    pub varrho_reg: f64,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    pub data_seed: u64,
    pub x_set: ConstraintSet,
}

impl Default for RobustParams {
    fn default() -> Self {
        RobustParams {
            n_groups: 3,
            samples_per_group: 200,
            varrho_reg: 0.1,
            separation: 1.5,
            data_seed: 11,
            x_set: ConstraintSet::Unconstrained,
        }
    }
}

impl RobustWeightedLoss {
    /// Builds the problem from raw rows. Group ids must be `0..n_groups`
    /// with every group non-empty; labels must be `±1`.
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        groups: Vec<usize>,
        varrho_reg: f64,
        x_set: ConstraintSet,
    ) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() || features.len() != groups.len() {
            return Err(Error::Data("features, labels and groups must be non-empty and aligned".into()));
        }
        if !(varrho_reg > 0.0 && varrho_reg.is_finite()) {
            return Err(Error::config("varrho_reg must be positive"));
        }
        let k = features[0].len();
        if k == 0 || features.iter().any(|r| r.len() != k || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data("feature rows must share a positive length and be finite".into()));
        }
        if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::Data("labels must be +1 or -1".into()));
        }
        let n_groups = groups.iter().max().map_or(0, |m| m + 1);
        let mut group_sizes = vec![0usize; n_groups];
        for &g in &groups {
            group_sizes[g] += 1;
        }
        if n_groups < 2 || group_sizes.contains(&0) {
            return Err(Error::Data("need at least two groups, ids 0..n, all non-empty".into()));
        }
        let features: Vec<Vec<f64>> = features
            .into_iter()
            .map(|mut r| {
                r.push(1.0);
                r
            })
            .collect();
        let d1 = k + 1;

        let mut problem = RobustWeightedLoss {
            spec: ProblemSpec {
                d1,
                d2: n_groups,
                mu: 2.0 * varrho_reg,
                l_f: 0.0,
                sigma: 0.0,
                x_set,
                y_set: ConstraintSet::simplex(n_groups)?,
            },
            features,
            labels,
            groups,
            group_sizes,
            varrho_reg,
        };
        problem.spec.l_f = problem.smoothness_bound();
        let (w0, u0) = problem.initial_point();
        problem.spec.sigma = problem.noise_level(&w0, &u0);
        problem.spec.validate()?;
        Ok(problem)
    }

    /// Synthetic groups with 2-D Gaussian class-conditional features. The
    /// last group's decision direction is rotated away from the others, so
    /// the average-loss minimizer underserves it.
    pub fn generate(params: &RobustParams) -> Result<Self> {
        let n = params.n_groups;
        if n < 2 || params.samples_per_group < 2 {
            return Err(Error::config("need at least two groups of two samples"));
        }
        let mut rng = RngStream::new(params.data_seed, DATA_STREAM);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n {
            let angle = if g + 1 == n {
                100f64.to_radians()
            } else {
                (10.0 * g as f64).to_radians()
            };
            let dir = [angle.cos(), angle.sin()];
            for j in 0..params.samples_per_group {
                let label = if j % 2 == 0 { 1.0 } else { -1.0 };
                let row = vec![
                    label * params.separation * dir[0] + rng.standard_normal(),
                    label * params.separation * dir[1] + rng.standard_normal(),
                ];
                features.push(row);
                labels.push(label);
                groups.push(g);
            }
        }
        Self::new(features, labels, groups, params.varrho_reg, params.x_set.clone())
    }

    /// Reads `group_id,label,feature_1,...,feature_k` rows (header required).
    /// Group ids may be any integers; they are renumbered in sorted order.
    /// Labels may be `±1` or `0/1`.
    pub fn from_csv<R: Read>(reader: R, varrho_reg: f64, x_set: ConstraintSet) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = csv.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "group_id" || cols[1] != "label" {
            return Err(Error::Data("header must be group_id,label,feature_1,...".into()));
        }
        for (i, name) in cols[2..].iter().enumerate() {
            if *name != format!("feature_{}", i + 1) {
                return Err(Error::Data(format!("unexpected column {name:?}")));
            }
        }
        let mut raw_groups = Vec::new();
        let mut labels = Vec::new();
        let mut features = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            let bad = |what: &str| Error::Data(format!("row {}: bad {what}", line + 2));
            if record.len() != cols.len() {
                return Err(bad("field count"));
            }
            let group: i64 = record[0].trim().parse().map_err(|_| bad("group_id"))?;
            let label: f64 = record[1].trim().parse().map_err(|_| bad("label"))?;
            let label = match label {
                l if l == 1.0 => 1.0,
                l if l == 0.0 || l == -1.0 => -1.0,
                _ => return Err(bad("label")),
            };
            let row = record
                .iter()
                .skip(2)
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("feature"))?;
            raw_groups.push(group);
            labels.push(label);
            features.push(row);
        }
        let ids: BTreeMap<i64, usize> = raw_groups
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, g)| (g, i))
            .collect();
        let groups = raw_groups.iter().map(|g| ids[g]).collect();
        Self::new(features, labels, groups, varrho_reg, x_set)
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn varrho_reg(&self) -> f64 {
        self.varrho_reg
    }

    /// Mean logistic loss of each group, `L(w)`.
    pub fn group_losses(&self, w: &Vector) -> Result<Vec<f64>> {
        check_dim(self.spec.d1, w.dim())?;
        let mut sums = vec![0.0; self.n_groups()];
        for j in 0..self.labels.len() {
            sums[self.groups[j]] += self.sample_loss(w, j);
        }
        Ok(sums
            .iter()
            .zip(&self.group_sizes)
            .map(|(s, &n)| s / n as f64)
            .collect())
    }

    pub fn max_group_loss(&self, w: &Vector) -> Result<f64> {
        Ok(self.group_losses(w)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    fn margin(&self, w: &Vector, j: usize) -> f64 {
        self.labels[j] * dot_slices(w.as_slice(), &self.features[j])
    }

    fn sample_loss(&self, w: &Vector, j: usize) -> f64 {
        softplus(-self.margin(w, j))
    }

    /// Adds `scale · ∇ℓⱼ(w)` into `out`.
    fn add_sample_grad(&self, w: &Vector, j: usize, scale: f64, out: &mut [f64]) {
        let coeff = -self.labels[j] * sigmoid(-self.margin(w, j)) * scale;
        for (o, x) in out.iter_mut().zip(&self.features[j]) {
            *o += coeff * x;
        }
    }

    fn importance(&self, g: usize) -> f64 {
        self.labels.len() as f64 / self.group_sizes[g] as f64
    }

    /// Block-wise bound on the Hessian norm: `max(¼ maxᵢ λmax(Sᵢ), 2ϱ) +
    /// sqrt(Σᵢ (meanⱼ‖xⱼ‖)²)`, where the second term bounds the cross block
    /// whose columns are the group-loss gradients.
    fn smoothness_bound(&self) -> f64 {
        let d = self.spec.d1;
        let n = self.n_groups();
        let mut second = vec![DMatrix::<f64>::zeros(d, d); n];
        let mut radius = vec![0.0; n];
        for (j, x) in self.features.iter().enumerate() {
            let g = self.groups[j];
            let xv = nalgebra::DVector::from_column_slice(x);
            second[g] += &xv * xv.transpose();
            radius[g] += xv.norm();
        }
        let mut curvature: f64 = 0.0;
        let mut cross = 0.0;
        for g in 0..n {
            let size = self.group_sizes[g] as f64;
            curvature = curvature.max(0.25 * symmetric_norm(&(&second[g] / size)));
            cross += (radius[g] / size).powi(2);
        }
        curvature.max(2.0 * self.varrho_reg) + cross.sqrt()
    }

    /// Per-sample gradient standard deviation at `(w, u)` (the larger of the
    /// two partial gradients), computed by enumeration.
    fn noise_level(&self, w: &Vector, u: &Vector) -> f64 {
        let exact = self.grad(w, u).expect("valid point");
        let (mut vx, mut vy) = (0.0, 0.0);
        for j in 0..self.labels.len() {
            let g = self.sample_grad(w, u, j);
            vx += g.x.sub(&exact.x).unwrap().norm_sq();
            vy += g.y.sub(&exact.y).unwrap().norm_sq();
        }
        let n = self.labels.len() as f64;
        (vx / n).max(vy / n).sqrt()
    }

    fn sample_grad(&self, w: &Vector, u: &Vector, j: usize) -> GradPair {
        let g = self.groups[j];
        let c = self.importance(g);
        let mut gx = vec![0.0; self.spec.d1];
        self.add_sample_grad(w, j, u[g] * c, &mut gx);
        let gy = self.y_regulariser(u, Some((g, c * self.sample_loss(w, j))));
        GradPair::new(Vector::from_raw(gx), Vector::from_raw(gy))
    }

    /// `−2ϱ(u − 1/n)`, plus an optional loss term on one coordinate.
    fn y_regulariser(&self, u: &Vector, extra: Option<(usize, f64)>) -> Vec<f64> {
        let n = self.n_groups() as f64;
        let mut gy: Vec<f64> = u.iter().map(|ui| -2.0 * self.varrho_reg * (ui - 1.0 / n)).collect();
        if let Some((g, v)) = extra {
            gy[g] += v;
        }
        gy
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MinimaxProblem for RobustWeightedLoss {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn sample_space(&self) -> SampleSpace {
        SampleSpace::Uniform {
            n: self.labels.len(),
        }
    }

    fn initial_point(&self) -> (Vector, Vector) {
        let n = self.n_groups();
        let w0 = project(&self.spec.x_set, &Vector::zeros(self.spec.d1)).expect("dimension checked");
        (w0, Vector::filled(n, 1.0 / n as f64))
    }

    fn value(&self, w: &Vector, u: &Vector) -> Result<f64> {
        self.check_point(w, u)?;
        let losses = self.group_losses(w)?;
        let n = self.n_groups() as f64;
        let dev = u.iter().fold(0.0, |acc, ui| acc + (ui - 1.0 / n).powi(2));
        Ok(dot_slices(u.as_slice(), &losses) - self.varrho_reg * dev)
    }

    fn grad_x(&self, w: &Vector, u: &Vector) -> Result<Vector> {
        self.check_point(w, u)?;
        let mut gx = vec![0.0; self.spec.d1];
        for j in 0..self.labels.len() {
            let g = self.groups[j];
            self.add_sample_grad(w, j, u[g] / self.group_sizes[g] as f64, &mut gx);
        }
        Ok(Vector::from_raw(gx))
    }

    fn grad_y(&self, w: &Vector, u: &Vector) -> Result<Vector> {
        self.check_point(w, u)?;
        let losses = self.group_losses(w)?;
        let mut gy = self.y_regulariser(u, None);
        for (g, l) in gy.iter_mut().zip(losses) {
            *g += l;
        }
        Ok(Vector::from_raw(gy))
    }

    fn grad_batch(&self, w: &Vector, u: &Vector, batch: &MiniBatch) -> Result<GradPair> {
        self.check_point(w, u)?;
        check_batch(batch)?;
        let MiniBatch::Indices(idx) = batch else {
            return Err(Error::contract("robust loss expects sample indices"));
        };
        let q = idx.len() as f64;
        let mut gx = vec![0.0; self.spec.d1];
        let mut loss_terms = vec![0.0; self.n_groups()];
        for &j in idx {
            if j >= self.labels.len() {
                return Err(Error::contract("sample index out of range"));
            }
            let g = self.groups[j];
            let c = self.importance(g);
            self.add_sample_grad(w, j, u[g] * c / q, &mut gx);
            loss_terms[g] += c * self.sample_loss(w, j) / q;
        }
        let mut gy = self.y_regulariser(u, None);
        for (g, l) in gy.iter_mut().zip(loss_terms) {
            *g += l;
        }
        Ok(GradPair::new(Vector::from_raw(gx), Vector::from_raw(gy)))
    }

    /// `u*(w) = Π_simplex(1/n + L(w)/(2ϱ))`.
    fn y_star(&self, w: &Vector) -> Result<Vector> {
        let losses = self.group_losses(w)?;
        let n = self.n_groups() as f64;
        let centre = Vector::from_raw(
            losses
                .iter()
                .map(|l| 1.0 / n + l / (2.0 * self.varrho_reg))
                .collect(),
        );
        project(&self.spec.y_set, &centre)
    }

    fn primal_grad(&self, w: &Vector) -> Result<Vector> {
        let u = self.y_star(w)?;
        self.grad_x(w, &u)
    }
}

//! TOML experiment files.
//!
//! ```toml
//! format_version = 1
//!
//! [problem]
//! family = "quadratic"        # quadratic | robust | policy
//! d1 = 10
//!
//! [solver]
//! algo = "adagda"             # adagda | vr-adagda | sgda
//! gamma = 0.01
//! schedule = { kind = "poly-half", k = 2.0, m = 9412.0 }
//!
//! [sweep]
//! seeds = 10                  # a count (seeds 0..n) or a list [3, 5, 8]
//!
//! [output]
//! dir = "results"
//! ```
//!
//! Every key is optional except `format_version` and `problem.family`.
//! Keys the schema does not know are rejected, all of them listed at once.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use minimax_gda::geometry::ConstraintSet;
use minimax_gda::problems::{
    MinimaxProblem, PolicyEvalMSPBE, PolicyEvalParams, QuadraticMinimax, QuadraticParams, RobustParams,
    RobustWeightedLoss,
};
use minimax_gda::solvers::{Algorithm, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Bumped on any breaking change to the file layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Quadratic(QuadraticParams),
    Robust(RobustConfig),
    Policy(PolicyEvalParams),
}

/// Synthetic groups, or a CSV file of `group_id,label,feature_1,...` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    pub n_groups: usize,
    pub samples_per_group: usize,
    pub varrho_reg: f64,
    pub separation: f64,
    pub data_seed: u64,
    pub x_set: ConstraintSet,
    /// Relative paths are taken from the config file's directory.
    pub data_csv: Option<PathBuf>,
}

impl Default for RobustConfig {
    fn default() -> Self {
        let p = RobustParams::default();
        RobustConfig {
            n_groups: p.n_groups,
            samples_per_group: p.samples_per_group,
            varrho_reg: p.varrho_reg,
            separation: p.separation,
            data_seed: p.data_seed,
            x_set: p.x_set,
            data_csv: None,
        }
    }
}

impl RobustConfig {
    pub fn params(&self) -> RobustParams {
        RobustParams {
            n_groups: self.n_groups,
            samples_per_group: self.samples_per_group,
            varrho_reg: self.varrho_reg,
            separation: self.separation,
            data_seed: self.data_seed,
            x_set: self.x_set.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(list) => list.clone(),
        }
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Count(1)
    }
}

impl FromStr for SeedSpec {
    type Err = HarnessError;

    /// `"5"` is a count; `"3,5,8"` (or `"7,"`) is a list.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || HarnessError::config(format!("invalid seed spec {s:?}"));
        if s.contains(',') {
            s.split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<Vec<u64>>>()
                .map(SeedSpec::List)
        } else {
            s.trim().parse().map(SeedSpec::Count).map_err(|_| bad())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    /// Every algorithm runs `solver.iterations` iterations.
    Iter,
    /// Every algorithm gets the oracle calls of `solver.iterations` AdaGDA
    /// iterations.
    Oracle,
}

impl FromStr for BudgetMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iter" => Ok(BudgetMode::Iter),
            "oracle" => Ok(BudgetMode::Oracle),
            other => Err(HarnessError::config(format!("unknown budget mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seeds: SeedSpec,
    /// Worker threads; `0` uses every core.
    pub jobs: usize,
    /// Algorithms for `compare`; empty means `solver.algo` alone.
    pub algos: Vec<Algorithm>,
    pub budget_mode: BudgetMode,
    /// When set, `compare` gives each momentum algorithm the boundary step
    /// sizes suggested for this schedule scale `k` instead of the solver
    /// section's values.
    pub suggest_k: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seeds: SeedSpec::default(),
            jobs: 0,
            algos: Vec::new(),
            budget_mode: BudgetMode::Oracle,
            suggest_k: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Overrides `solver.stride` when set.
    pub stride: Option<u64>,
    /// Also write gnuplot `.dat` files.
    pub gnuplot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("results"),
            stride: None,
            gnuplot: true,
        }
    }
}

impl ExperimentConfig {
    /// Parses and checks a config, rejecting unknown keys and version
    /// mismatches.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::config(e.message().to_string()))?;
        let resolved = toml::Table::try_from(&config).map_err(|e| HarnessError::config(e.to_string()))?;
        let mut unknown = Vec::new();
        collect_unknown(&raw, &resolved, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(HarnessError::config(format!("unknown keys: {}", unknown.join(", "))));
        }
        if config.format_version != FORMAT_VERSION {
            return Err(HarnessError::config(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                config.format_version
            )));
        }
        config.check()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::config(e.to_string()))
    }

    pub fn check(&self) -> Result<()> {
        self.solver_for(self.solver.algo, self.solver.iterations).check()?;
        if self.sweep.seeds.seeds().is_empty() {
            return Err(HarnessError::config("sweep.seeds selects no seeds"));
        }
        Ok(())
    }

    /// Builds the problem; `base` anchors relative data paths.
    pub fn build_problem(&self, base: &Path) -> Result<Box<dyn MinimaxProblem>> {
        Ok(match &self.problem {
            ProblemConfig::Quadratic(p) => Box::new(QuadraticMinimax::generate(p)?),
            ProblemConfig::Policy(p) => Box::new(PolicyEvalMSPBE::generate(p)?),
            ProblemConfig::Robust(r) => match &r.data_csv {
                Some(path) => {
                    let path = base.join(path);
                    let file = fs::File::open(&path).map_err(|e| HarnessError::io(&path, e))?;
                    Box::new(RobustWeightedLoss::from_csv(file, r.varrho_reg, r.x_set.clone())?)
                }
                None => Box::new(RobustWeightedLoss::generate(&r.params())?),
            },
        })
    }

    /// Algorithms a `compare` covers.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        if self.sweep.algos.is_empty() {
            vec![self.solver.algo]
        } else {
            self.sweep.algos.clone()
        }
    }

    /// The solver section with `algo`, `iterations` and the output stride
    /// substituted.
    pub fn solver_for(&self, algo: Algorithm, iterations: u64) -> SolverConfig {
        let mut s = self.solver.clone();
        s.algo = algo;
        s.iterations = iterations;
        if self.output.stride.is_some() {
            s.stride = self.output.stride;
        }
        s
    }

    /// Iterations for `algo` under the sweep's budget mode.
    pub fn iterations_for(&self, algo: Algorithm) -> u64 {
        match self.sweep.budget_mode {
            BudgetMode::Iter => self.solver.iterations,
            BudgetMode::Oracle => matched_iterations(algo, self.solver.q, self.solver.iterations),
        }
    }
}

/// Largest `T` such that `algo` uses no more oracle calls than
/// `reference` AdaGDA iterations (counting the batch drawn after the last
/// step).
pub fn matched_iterations(algo: Algorithm, q: usize, reference: u64) -> u64 {
    let budget = Algorithm::AdaGda.oracle_calls(q, reference + 1);
    let (mut lo, mut hi) = (0u64, reference);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if algo.oracle_calls(q, mid + 1) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

fn collect_unknown(raw: &toml::Table, resolved: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in raw {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (value, resolved.get(key)) {
            (_, None) => out.push(path),
            (toml::Value::Table(inner), Some(toml::Value::Table(known))) => {
                collect_unknown(inner, known, &path, out)
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "format_version = 1\n[problem]\nfamily = \"quadratic\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.problem, ProblemConfig::Quadratic(QuadraticParams::default()));
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.sweep.seeds.seeds(), vec![0]);
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let text = format!("{MINIMAL}d3 = 4\nbogus = 1\n[solver]\ngama = 0.1\n[solver.schedule]\nkind = \"constant\"\neta = 0.5\nk = 1.0\n");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        for key in ["problem.d3", "problem.bogus", "solver.gama", "solver.schedule.k"] {
            assert!(err.contains(key), "{err} should mention {key}");
        }
    }

    #[test]
    fn version_and_family_are_checked() {
        assert!(ExperimentConfig::parse("format_version = 2\n[problem]\nfamily = \"quadratic\"\n").is_err());
        assert!(ExperimentConfig::parse("format_version = 1\n[problem]\nfamily = \"cubic\"\n").is_err());
        assert!(ExperimentConfig::parse("[problem]\nfamily = \"quadratic\"\n").is_err());
    }

    #[test]
    fn seed_specs() {
        assert_eq!("3".parse::<SeedSpec>().unwrap().seeds(), vec![0, 1, 2]);
        assert_eq!("4, 9".parse::<SeedSpec>().unwrap().seeds(), vec![4, 9]);
        assert_eq!("7,".parse::<SeedSpec>().unwrap().seeds(), vec![7]);
        assert!("x".parse::<SeedSpec>().is_err());
    }

    #[test]
    fn matched_budgets() {
        assert_eq!(matched_iterations(Algorithm::AdaGda, 3, 1000), 1000);
        assert_eq!(matched_iterations(Algorithm::VrAdaGda, 3, 1000), 500);
        assert_eq!(matched_iterations(Algorithm::VrAdaGda, 1, 999), 499);
        assert_eq!(matched_iterations(Algorithm::VrAdaGda, 1, 0), 0);
    }
}

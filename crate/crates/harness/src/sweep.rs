//! Seed and algorithm sweeps on a rayon pool.
//!
//! Each `(algo, seed)` run is one task; the worker that runs it also writes
//! its per-seed files, so no file has two writers. Results come back in task
//! order whatever the scheduling.

use std::path::Path;

use log::info;
use minimax_gda::problems::{MinimaxProblem, ProblemSpec};
use minimax_gda::solvers::{self, fit_rate_slope, suggest, Algorithm, ProblemConstants, RunOutput, SolverConfig};
use rayon::prelude::*;

use crate::config::{matched_iterations, BudgetMode, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::output;

#[derive(Clone, Debug)]
pub struct Task {
    pub seed: u64,
    pub config: SolverConfig,
}

#[derive(Debug)]
pub struct TaskResult {
    pub seed: u64,
    pub algo: Algorithm,
    pub output: RunOutput,
}

pub fn trajectory_file_name(algo: Algorithm, seed: u64) -> String {
    format!("{}_seed{seed}.csv", algo.name())
}

/// Solver settings for `algo`, with suggested step sizes substituted when
/// `sweep.suggest_k` is set.
pub fn solver_config(
    config: &ExperimentConfig,
    spec: &ProblemSpec,
    algo: Algorithm,
    mode: BudgetMode,
) -> Result<SolverConfig> {
    let iterations = match mode {
        BudgetMode::Iter => config.solver.iterations,
        BudgetMode::Oracle => matched_iterations(algo, config.solver.q, config.solver.iterations),
    };
    let mut solver = config.solver_for(algo, iterations);
    if let (Some(k), true) = (config.sweep.suggest_k, algo != Algorithm::Sgda) {
        let constants = ProblemConstants::from_parts(spec, &solver)?;
        suggest(algo, &constants, k, solver.q)?.apply(&mut solver, k);
    }
    solver.check()?;
    Ok(solver)
}

/// Tasks for every algorithm and seed, algorithm-major.
pub fn plan(config: &ExperimentConfig, spec: &ProblemSpec, algos: &[Algorithm], mode: BudgetMode) -> Result<Vec<Task>> {
    let seeds = config.sweep.seeds.seeds();
    let mut tasks = Vec::new();
    for &algo in algos {
        let solver = solver_config(config, spec, algo, mode)?;
        tasks.extend(seeds.iter().map(|&seed| Task {
            seed,
            config: solver.clone(),
        }));
    }
    Ok(tasks)
}

/// Runs `tasks` on `jobs` threads (0 for one per core), writing per-seed
/// trajectories under `out_dir` when given.
pub fn run_tasks(
    problem: &dyn MinimaxProblem,
    tasks: &[Task],
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<TaskResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let algo = task.config.algo;
                let output = solvers::run(problem, &task.config, task.seed)?;
                info!(
                    "{} seed {} finished {} iterations in {:.2}s",
                    algo,
                    task.seed,
                    task.config.iterations,
                    output.wall_time_secs
                );
                if let Some(dir) = out_dir {
                    let stem = trajectory_file_name(algo, task.seed);
                    output::write_trajectory_file(&output.record, &dir.join(&stem))?;
                    let avg = stem.replace(".csv", "_running_avg.csv");
                    output::write_running_average_file(&output.record, &dir.join(avg))?;
                }
                Ok(TaskResult {
                    seed: task.seed,
                    algo,
                    output,
                })
            })
            .collect()
    })
}

/// Cross-seed view of one algorithm.
#[derive(Debug)]
pub struct AlgoSummary {
    pub algo: Algorithm,
    pub iterations: u64,
    pub q: usize,
    /// `(t, mean, stderr)` of the running average at each checkpoint.
    pub running_average: Vec<(u64, f64, f64)>,
    /// Log-log slope of the mean running average against oracle calls.
    pub oracle_slope: Option<f64>,
}

impl AlgoSummary {
    pub fn final_running_average(&self) -> Option<(f64, f64)> {
        self.running_average.last().map(|&(_, m, s)| (m, s))
    }
}

pub fn summarize_algo(algo: Algorithm, config: &SolverConfig, results: &[&TaskResult]) -> AlgoSummary {
    let records: Vec<_> = results.iter().map(|r| &r.output.record).collect();
    let running_average: Vec<(u64, f64, f64)> = records
        .first()
        .map(|first| {
            first
                .running_average
                .iter()
                .filter_map(|&(t, _)| {
                    let vals: Option<Vec<f64>> = records
                        .iter()
                        .map(|r| r.running_average.iter().find(|p| p.0 == t).map(|p| p.1))
                        .collect();
                    vals.map(|v| {
                        let (m, s) = output::mean_stderr(&v);
                        (t, m, s)
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    let points: Vec<(u64, f64)> = running_average
        .iter()
        .map(|&(t, m, _)| (algo.oracle_calls(config.q, t), m))
        .collect();
    AlgoSummary {
        algo,
        iterations: config.iterations,
        q: config.q,
        oracle_slope: fit_rate_slope(&points).ok(),
        running_average,
    }
}

/// Everything a finished sweep produced.
#[derive(Debug)]
pub struct SweepReport {
    pub results: Vec<TaskResult>,
    pub summaries: Vec<AlgoSummary>,
}

/// Runs `algos` over the configured seeds and writes every artefact to
/// `out_dir`.
pub fn execute(
    config: &ExperimentConfig,
    problem: &dyn MinimaxProblem,
    algos: &[Algorithm],
    mode: BudgetMode,
    out_dir: &Path,
) -> Result<SweepReport> {
    let tasks = plan(config, problem.spec(), algos, mode)?;
    output::write_text(&out_dir.join("resolved_config.toml"), &config.to_toml()?)?;
    let results = run_tasks(problem, &tasks, config.sweep.jobs, Some(out_dir))?;

    let mut summaries = Vec::new();
    for &algo in algos {
        let Some(task) = tasks.iter().find(|t| t.config.algo == algo) else {
            continue;
        };
        let mine: Vec<&TaskResult> = results.iter().filter(|r| r.algo == algo).collect();
        let records: Vec<_> = mine.iter().map(|r| &r.output.record).collect();
        let table = output::summarize(&records);
        output::write_summary_file(&table, &out_dir.join(format!("{}_summary.csv", algo.name())))?;
        if config.output.gnuplot {
            output::write_summary_dat(&table, &out_dir.join(format!("{}_summary.dat", algo.name())))?;
        }
        summaries.push(summarize_algo(algo, &task.config, &mine));
    }
    if algos.len() > 1 {
        write_comparison(&summaries, out_dir)?;
    }
    Ok(SweepReport { results, summaries })
}

fn write_comparison(summaries: &[AlgoSummary], out_dir: &Path) -> Result<()> {
    let mut curves = String::from("algo,t,oracle_calls,running_avg_mean,running_avg_stderr\n");
    let mut table = String::from("algo,iterations,oracle_calls,final_running_avg_mean,final_running_avg_stderr,oracle_slope\n");
    for s in summaries {
        for &(t, m, e) in &s.running_average {
            curves.push_str(&format!(
                "{},{t},{},{},{}\n",
                s.algo,
                s.algo.oracle_calls(s.q, t),
                output::format_float(m),
                output::format_float(e)
            ));
        }
        let (m, e) = s.final_running_average().unzip();
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.algo,
            s.iterations,
            s.algo.oracle_calls(s.q, s.iterations + 1),
            m.map(output::format_float).unwrap_or_default(),
            e.map(output::format_float).unwrap_or_default(),
            s.oracle_slope.map(output::format_float).unwrap_or_default()
        ));
    }
    output::write_text(&out_dir.join("compare_running_avg.csv"), &curves)?;
    output::write_text(&out_dir.join("compare.csv"), &table)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use minimax_gda::solvers::{suggest, validate_config, Algorithm, ProblemConstants, ValidationReport};
use minimax_gda_harness::config::{BudgetMode, SeedSpec};
use minimax_gda_harness::{sweep, ExperimentConfig, HarnessError, Result};

/// Adaptive stochastic gradient descent ascent for nonconvex-strongly-concave
/// minimax problems.
#[derive(Parser)]
#[command(name = "minimax-gda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run `solver.algo` over the configured seeds.
    Run(RunArgs),
    /// Check the step-size conditions of a config without running it.
    Validate(ValidateArgs),
    /// Run several algorithms on the same problem and seeds.
    Compare(CompareArgs),
    /// Print a config whose solver section sits on the condition boundaries.
    SuggestConfig(SuggestArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Output directory (default: `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// A count `N` (seeds 0..N) or a comma list `3,5,8`.
    #[arg(long)]
    seeds: Option<SeedSpec>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Log every N iterations.
    #[arg(long)]
    stride: Option<u64>,
    /// Refuse to run when a step-size condition is violated.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Exit with status 1 when a condition is violated.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    overrides: Overrides,
    /// Comma-separated algorithms (default: `sweep.algos`).
    #[arg(long, value_delimiter = ',')]
    algos: Vec<Algorithm>,
    /// `oracle` matches oracle calls to AdaGDA's, `iter` matches iterations.
    #[arg(long)]
    budget_mode: Option<BudgetMode>,
}

#[derive(Args)]
struct SuggestArgs {
    #[command(flatten)]
    common: Common,
    /// Algorithm to suggest for (default: `solver.algo`).
    #[arg(long)]
    algo: Option<Algorithm>,
    /// Schedule scale `k`.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Batch size (default: `solver.q`).
    #[arg(long)]
    q: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MINIMAX_GDA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => {
            let (config, base) = load(&args.common, &args.overrides)?;
            let algos = [config.solver.algo];
            execute(&config, &base, &algos, BudgetMode::Iter, &args.overrides)
        }
        Command::Compare(args) => {
            let (mut config, base) = load(&args.common, &args.overrides)?;
            if !args.algos.is_empty() {
                config.sweep.algos = args.algos;
            }
            if let Some(mode) = args.budget_mode {
                config.sweep.budget_mode = mode;
            }
            let algos = config.algorithms();
            execute(&config, &base, &algos, config.sweep.budget_mode, &args.overrides)
        }
        Command::Validate(args) => {
            let (config, base) = load(&args.common, &Overrides::none())?;
            let problem = config.build_problem(&base)?;
            let report = report_for(&config, problem.spec())?;
            print!("{report}");
            Ok(if args.strict && !report.passed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::SuggestConfig(args) => {
            let (mut config, base) = load(&args.common, &Overrides::none())?;
            let problem = config.build_problem(&base)?;
            let algo = args.algo.unwrap_or(config.solver.algo);
            let q = args.q.unwrap_or(config.solver.q);
            config.solver.algo = algo;
            config.solver.q = q;
            let constants = ProblemConstants::from_parts(problem.spec(), &config.solver)?;
            let s = suggest(algo, &constants, args.k, q)?;
            s.apply(&mut config.solver, args.k);
            print!("{}", config.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

impl Overrides {
    fn none() -> Self {
        Overrides {
            out: None,
            seeds: None,
            jobs: None,
            stride: None,
            strict: false,
        }
    }
}

fn load(common: &Common, o: &Overrides) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::from_file(&common.config)?;
    if let Some(out) = &o.out {
        config.output.dir = out.clone();
    }
    if let Some(seeds) = &o.seeds {
        config.sweep.seeds = seeds.clone();
    }
    if let Some(jobs) = o.jobs {
        config.sweep.jobs = jobs;
    }
    if o.stride.is_some() {
        config.output.stride = o.stride;
    }
    config.check()?;
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn report_for(config: &ExperimentConfig, spec: &minimax_gda::problems::ProblemSpec) -> Result<ValidationReport> {
    let constants = ProblemConstants::from_parts(spec, &config.solver)?;
    Ok(validate_config(&config.solver, &constants))
}

fn execute(
    config: &ExperimentConfig,
    base: &Path,
    algos: &[Algorithm],
    mode: BudgetMode,
    o: &Overrides,
) -> Result<ExitCode> {
    let problem = config.build_problem(base)?;
    for &algo in algos {
        let solver = sweep::solver_config(config, problem.spec(), algo, mode)?;
        let constants = ProblemConstants::from_parts(problem.spec(), &solver)?;
        let report = validate_config(&solver, &constants);
        if !report.passed() {
            let names: Vec<&str> = report.violations().map(|c| c.name.as_str()).collect();
            if o.strict {
                return Err(HarnessError::config(format!(
                    "{algo}: step-size conditions violated: {}",
                    names.join(", ")
                )));
            }
            warn!("{algo}: step-size conditions violated: {}", names.join(", "));
        }
    }
    let report = sweep::execute(config, problem.as_ref(), algos, mode, &config.output.dir)?;
    for s in &report.summaries {
        let (mean, stderr) = s.final_running_average().unzip();
        info!("{} done", s.algo);
        println!(
            "{}: T = {}, final running average {} ± {}, oracle slope {}",
            s.algo,
            s.iterations,
            show(mean),
            show(stderr),
            show(s.oracle_slope)
        );
    }
    println!("results in {}", config.output.dir.display());
    Ok(ExitCode::SUCCESS)
}

fn show(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "n/a".into())
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"format_version = 1

[problem]
family = "quadratic"
d1 = 4
d2 = 3

[solver]
algo = "adagda"
iterations = 200
q = 2
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minimax-gda"))
        .args(args)
        .env("MINIMAX_GDA_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_writes_one_csv_per_seed_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("results");
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seeds", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 0..5 {
        assert!(out.join(format!("adagda_seed{seed}.csv")).is_file());
    }
    assert!(out.join("adagda_summary.csv").is_file());
    assert!(out.join("adagda_summary.dat").is_file());
    let resolved = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.starts_with("format_version = 1"));
    assert!(resolved.contains("seeds = 5"));
}

#[test]
fn seed_lists_and_stride_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("r");
    let o = cli(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--seeds", "3,11", "--stride", "50", "--jobs", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("adagda_seed11.csv")).unwrap();
    let ts: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ts, ["1", "51", "101", "151", "201"]);
    assert!(!out.join("adagda_seed0.csv").exists());
}

#[test]
fn unknown_keys_exit_one_and_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}gama = 1.0\n[outptu]\ndir = \"x\"\n"));
    let o = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("solver.gama") && err.contains("outptu"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["run", "--config", "/does/not/exist.toml"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    let cfg = write_config(dir.path(), &SMALL.replace("q = 2", "q = 0"));
    assert_eq!(code(&cli(&["run", "--config", cfg.to_str().unwrap()])), 1);
    let cfg = write_config(dir.path(), &SMALL.replace("format_version = 1", "format_version = 9"));
    assert_eq!(code(&cli(&["validate", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("d2 = 3", "d2 = 3\np_min_eig = -5.0\np_max_eig = -1.0")
        .replace("algo = \"adagda\"", "algo = \"sgda\"\ngamma = 1.0");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("r");
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical abort"));
}

#[test]
fn validate_reports_and_strict_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = cli(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("VIOLATED"), "{report}");
    assert_eq!(code(&cli(&["validate", "--config", cfg.to_str().unwrap(), "--strict"])), 1);
    assert_eq!(code(&cli(&["run", "--config", cfg.to_str().unwrap(), "--strict"])), 1);
}

#[test]
fn suggested_config_passes_strict_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for algo in ["adagda", "vr-adagda"] {
        let o = cli(&["suggest-config", "--config", cfg.to_str().unwrap(), "--algo", algo, "--k", "2"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let suggested = dir.path().join(format!("{algo}.toml"));
        std::fs::write(&suggested, &o.stdout).unwrap();
        let v = cli(&["validate", "--config", suggested.to_str().unwrap(), "--strict"]);
        assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
    }
    assert_eq!(code(&cli(&["suggest-config", "--config", cfg.to_str().unwrap(), "--algo", "sgda"])), 1);
}

#[test]
fn compare_matches_oracle_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("cmp");
    let o = cli(&[
        "compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--algos", "adagda,vr-adagda,sgda", "--budget-mode", "oracle", "--seeds", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let iters: Vec<&str> = rows.iter().map(|r| r[1]).collect();
    assert_eq!(iters, ["200", "100", "200"]);
    let budgets: Vec<u64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(budgets.iter().all(|&b| b <= budgets[0]));
    let curves = std::fs::read_to_string(out.join("compare_running_avg.csv")).unwrap();
    assert!(curves.starts_with("algo,t,oracle_calls,"));
    assert!(out.join("vr-adagda_seed1.csv").is_file());

    let o = cli(&[
        "compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--algos", "adagda,vr-adagda", "--budget-mode", "iter",
    ]);
    assert_eq!(code(&o), 0);
    let table = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.split(',').nth(1) == Some("200")));
}

//! CSV, gnuplot and TOML artefacts written by a run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use minimax_gda::solvers::{TrajectoryRecord, TrajectoryRow};

use crate::error::{HarnessError, Result};

pub const TRAJECTORY_HEADER: [&str; 13] = [
    "t",
    "eta",
    "alpha",
    "beta",
    "grad_map_norm",
    "grad_F_norm",
    "y_gap",
    "v_err",
    "w_err",
    "a_min",
    "a_max",
    "b_t",
    "oracle_calls",
];

/// The eleven floating-point columns, in header order.
pub fn row_values(row: &TrajectoryRow) -> [Option<f64>; 11] {
    [
        row.eta,
        row.alpha,
        row.beta,
        row.grad_map_norm,
        row.grad_f_norm,
        row.y_gap,
        row.v_err,
        row.w_err,
        row.a_min,
        row.a_max,
        row.b_t,
    ]
}

/// Shortest text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::config(format!("{}: {other:?}", path.display())),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

pub fn write_trajectory<W: Write>(record: &TrajectoryRecord, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for row in &record.rows {
        let mut fields = vec![row.t.to_string()];
        fields.extend(row_values(row).into_iter().map(cell));
        fields.push(row.oracle_calls.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_file(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    write_trajectory(record, create(path)?).map_err(|e| csv_error(path, e))
}

pub fn write_running_average_file(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let res = (|| {
        w.write_record(["t", "running_avg"])?;
        for &(t, v) in &record.running_average {
            w.write_record([t.to_string(), format_float(v)])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_error(path, e))
}

/// Mean and standard error across seeds of every column at one logged `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: u64,
    pub oracle_calls: u64,
    /// `(mean, stderr)` per float column; `None` when any seed lacks it.
    pub columns: [Option<(f64, f64)>; 11],
}

/// Sample mean and `s/√n` (with `s` using `n - 1`); stderr is 0 for one value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates per-seed records over the rows they share (all records of one
/// config share the same logged `t`).
pub fn summarize(records: &[&TrajectoryRecord]) -> Vec<SummaryRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .enumerate()
        .filter(|(i, row)| records.iter().all(|r| r.rows.get(*i).is_some_and(|o| o.t == row.t)))
        .map(|(i, row)| {
            let per_seed: Vec<[Option<f64>; 11]> = records.iter().map(|r| row_values(&r.rows[i])).collect();
            let columns = std::array::from_fn(|c| {
                let vals: Option<Vec<f64>> = per_seed.iter().map(|v| v[c]).collect();
                vals.map(|v| mean_stderr(&v))
            });
            SummaryRow {
                t: row.t,
                oracle_calls: row.oracle_calls,
                columns,
            }
        })
        .collect()
}

pub fn summary_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for name in &TRAJECTORY_HEADER[1..12] {
        h.push(format!("{name}_mean"));
        h.push(format!("{name}_stderr"));
    }
    h.push("oracle_calls".to_string());
    h
}

pub fn write_summary_file(summary: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let res = (|| {
        w.write_record(summary_header())?;
        for row in summary {
            let mut fields = vec![row.t.to_string()];
            for col in &row.columns {
                fields.push(cell(col.map(|c| c.0)));
                fields.push(cell(col.map(|c| c.1)));
            }
            fields.push(row.oracle_calls.to_string());
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_error(path, e))
}

/// Whitespace-separated columns with a `#` legend; missing values are `NaN`.
pub fn write_summary_dat(summary: &[SummaryRow], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| HarnessError::io(path, e);
    for (i, name) in summary_header().iter().enumerate() {
        writeln!(out, "# column {}: {name}", i + 1).map_err(io)?;
    }
    for row in summary {
        let mut line = row.t.to_string();
        for col in &row.columns {
            match col {
                Some((m, s)) => line.push_str(&format!(" {} {}", format_float(*m), format_float(*s))),
                None => line.push_str(" NaN NaN"),
            }
        }
        writeln!(out, "{line} {}", row.oracle_calls).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::io(path, e))
}

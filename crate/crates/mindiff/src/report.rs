//! Report files: per-run CSV, aggregate CSV and a text Pareto summary.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::sweep::{aggregate, AggregateRow, SweepReport};

pub const RUNS_FILE: &str = "runs.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const PARETO_FILE: &str = "pareto.txt";

const RUN_PREFIX: [&str; 6] = ["strategy", "lambda", "run", "seed", "status", "reason"];
const RUN_SUFFIX: [&str; 2] = ["total_steps", "skipped_regularizers"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn staged(dir: &Path, write: impl FnOnce(&mut fs::File) -> io::Result<()>) -> Result<NamedTempFile> {
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    write(tmp.as_file_mut()).and_then(|_| tmp.as_file_mut().sync_all()).map_err(|e| Error::io(tmp.path(), e))?;
    Ok(tmp)
}

/// Writes `path` through a temporary file in the same directory, so readers
/// never observe a partial file.
pub fn write_atomically(path: &Path, write: impl FnOnce(&mut fs::File) -> io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    staged(dir, write)?.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Publishes staged files; on failure removes any already moved into place.
fn persist_all(files: Vec<(NamedTempFile, PathBuf)>) -> Result<Vec<PathBuf>> {
    let mut done: Vec<PathBuf> = Vec::new();
    for (tmp, path) in files {
        if let Err(e) = tmp.persist(&path) {
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(path, e.error));
        }
        done.push(path);
    }
    Ok(done)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

pub fn runs_csv(report: &SweepReport) -> Result<Vec<u8>> {
    let metrics = report.metric_columns();
    let header: Vec<String> = RUN_PREFIX.iter().map(|s| s.to_string()).chain(metrics.iter().cloned()).chain(RUN_SUFFIX.map(String::from)).collect();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.strategy.name().to_string(), r.lambda.to_string(), r.run.to_string(), r.seed.to_string()];
            match &r.outcome {
                Ok(m) => {
                    row.extend(["ok".to_string(), String::new()]);
                    row.extend(report.metric_values(m).into_iter().map(cell));
                    row.extend([m.total_steps.to_string(), m.skipped_regularizers.to_string()]);
                }
                Err(reason) => {
                    row.extend(["failed".to_string(), reason.clone()]);
                    row.extend(std::iter::repeat_n(String::new(), metrics.len() + RUN_SUFFIX.len()));
                }
            }
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn aggregate_csv(metrics: &[String], aggregates: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut header: Vec<String> = ["strategy", "lambda", "n_ok", "n_failed"].map(String::from).into();
    for m in metrics {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_ci95"));
    }
    let rows: Vec<Vec<String>> = aggregates
        .iter()
        .map(|a| {
            let mut row = vec![a.strategy.clone(), a.lambda.to_string(), a.n_ok.to_string(), a.n_failed.to_string()];
            for m in &a.metrics {
                row.push(cell(m.map(|c| c.mean)));
                row.push(cell(m.and_then(|c| c.half_width)));
            }
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Per group: `(strategy, lambda, mean d_eo, mean system ROC AUC)` rows,
/// tab-separated, sorted by lambda within each strategy.
pub fn pareto_summary(report: &SweepReport, aggregates: &[AggregateRow]) -> String {
    let cols = report.metric_columns();
    let auc = cols.iter().position(|c| c == "system_roc_auc");
    let mut out = String::new();
    for g in &report.group_names {
        let d = cols.iter().position(|c| *c == format!("d_eo_{g}"));
        let _ = writeln!(out, "# group {g}");
        let _ = writeln!(out, "strategy\tlambda\tmean_d_eo\tmean_system_roc_auc");
        let mut strategies: Vec<&str> = Vec::new();
        for a in aggregates {
            if !strategies.contains(&a.strategy.as_str()) {
                strategies.push(&a.strategy);
            }
        }
        for s in strategies {
            let mut points: Vec<&AggregateRow> = aggregates.iter().filter(|a| a.strategy == s).collect();
            points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
            for a in points {
                let mean = |k: Option<usize>| cell(k.and_then(|k| a.metrics[k]).map(|c| c.mean));
                let _ = writeln!(out, "{s}\t{}\t{}\t{}", a.lambda, mean(d), mean(auc));
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `runs.csv`, `aggregate.csv` and `pareto.txt` into `dir`, creating
/// it if needed. Either all three files appear or none does.
pub fn emit_report(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let aggregates = report.aggregates();
    let runs = runs_csv(report)?;
    let agg = aggregate_csv(&report.metric_columns(), &aggregates)?;
    let pareto = pareto_summary(report, &aggregates);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let staged_files = vec![
        (staged(dir, |f| f.write_all(&runs))?, dir.join(RUNS_FILE)),
        (staged(dir, |f| f.write_all(&agg))?, dir.join(AGGREGATE_FILE)),
        (staged(dir, |f| f.write_all(pareto.as_bytes()))?, dir.join(PARETO_FILE)),
    ];
    persist_all(staged_files)
}

/// Recomputes aggregate rows from a per-run CSV alone. Returns the metric
/// column names and the aggregates.
pub fn aggregate_runs_csv(path: &Path) -> Result<(Vec<String>, Vec<AggregateRow>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let n = header.len();
    if n < RUN_PREFIX.len() + RUN_SUFFIX.len() {
        return Err(Error::Config(format!("{}: not a per-run report", path.display())));
    }
    let metrics: Vec<String> = header.iter().skip(RUN_PREFIX.len()).take(n - RUN_PREFIX.len() - RUN_SUFFIX.len()).map(String::from).collect();
    let mut cells = Vec::new();
    for row in r.records() {
        let row = row?;
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Config(format!("bad number `{s}` in {}", path.display())))
            }
        };
        let lambda = parse(&row[1])?.ok_or_else(|| Error::Config("missing lambda".into()))?;
        let values = if &row[4] == "ok" {
            Some((0..metrics.len()).map(|k| parse(&row[RUN_PREFIX.len() + k])).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        cells.push((row[0].to_string(), lambda, values));
    }
    let len = metrics.len();
    Ok((metrics, aggregate(cells, len)))
}

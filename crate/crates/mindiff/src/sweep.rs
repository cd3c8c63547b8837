//! Lambda sweeps over strategies with repeated runs.

use mindiff_core::{calibrate_thresholds, fnv1a64, Dataset, EvalReport, Strategy, TrainConfig};
use rayon::prelude::*;

use crate::clock::WallClock;
use crate::config::{parse_strategies, ExperimentConfig};
use crate::error::{Error, Result};
use crate::stats::{mean_ci95, MeanCi};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strategy, lambda and seed are overwritten per run.
    pub train: TrainConfig,
    pub target_fpr: f64,
    pub strategies: Vec<Strategy>,
    pub lambdas: Vec<f64>,
    pub runs_per_point: usize,
    pub split: Vec<f64>,
    pub seed: u64,
    pub threads: usize,
}

impl SweepConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self> {
        let s = Self {
            train: cfg.train.to_train_config()?,
            target_fpr: cfg.train.target_fpr,
            strategies: parse_strategies(&cfg.sweep.strategies)?,
            lambdas: cfg.sweep.lambdas.clone(),
            runs_per_point: cfg.sweep.runs_per_point,
            split: cfg.sweep.split.clone(),
            seed: cfg.seed,
            threads: cfg.sweep.threads,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.strategies.is_empty() || self.lambdas.is_empty() {
            return bad("sweep needs at least one strategy and one lambda".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return bad(format!("lambda {l} must be finite and non-negative"));
        }
        if self.runs_per_point < 1 {
            return bad("runs_per_point must be >= 1".into());
        }
        if self.split.len() != 3 || self.split.iter().any(|&f| f <= 0.0) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split {:?} must be three positive fractions summing to 1", self.split));
        }
        Ok(())
    }
}

/// Seed of one run: `base + fnv1a64("<strategy>:<lambda bits as hex>:<run>")`
/// with wrapping addition.
pub fn run_seed(base: u64, strategy: Strategy, lambda: f64, run: usize) -> u64 {
    let key = format!("{}:{:016x}:{}", strategy.name(), lambda.to_bits(), run);
    base.wrapping_add(fnv1a64(key.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub eval: EvalReport,
    pub steps_per_sec: f64,
    pub total_steps: usize,
    pub skipped_regularizers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub strategy: Strategy,
    pub lambda: f64,
    pub run: usize,
    pub seed: u64,
    pub outcome: Result<RunMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub task_names: Vec<String>,
    pub group_names: Vec<String>,
    pub rows: Vec<RunRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub strategy: String,
    pub lambda: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// One entry per metric column; `None` when no run produced the value.
    pub metrics: Vec<Option<MeanCi>>,
}

impl SweepReport {
    pub fn empty(task_names: Vec<String>, group_names: Vec<String>) -> Self {
        Self { task_names, group_names, rows: Vec::new() }
    }

    /// Names of the numeric per-run columns, in order.
    pub fn metric_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = ["system_roc_auc", "system_aucpr", "accuracy", "mean_aucpr"].map(String::from).into();
        cols.extend(self.task_names.iter().map(|t| format!("aucpr_{t}")));
        for g in &self.group_names {
            for m in ["fpr_member", "fpr_nonmember", "d_eo", "r_eo"] {
                cols.push(format!("{m}_{g}"));
            }
        }
        cols.push("steps_per_sec".into());
        cols
    }

    /// Metric values of a successful run, aligned with [`Self::metric_columns`].
    /// Per-task AUCPR is empty for single-head models.
    pub fn metric_values(&self, m: &RunMetrics) -> Vec<Option<f64>> {
        let e = &m.eval;
        let mut v = vec![e.system_roc_auc, e.system_aucpr, Some(e.accuracy), e.mean_aucpr()];
        if e.aucpr.len() == self.task_names.len() {
            v.extend(e.aucpr.iter().copied());
        } else {
            v.extend(self.task_names.iter().map(|_| None));
        }
        for g in &e.groups {
            v.extend([g.fpr_member, g.fpr_nonmember, g.d_eo, g.r_eo]);
        }
        v.push(Some(m.steps_per_sec));
        v
    }

    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let cells = self.rows.iter().map(|r| {
            let values = r.outcome.as_ref().ok().map(|m| self.metric_values(m));
            (r.strategy.name().to_string(), r.lambda, values)
        });
        aggregate(cells, self.metric_columns().len())
    }

    /// Values of one metric column for the successful runs of a sweep point.
    pub fn column_values(&self, strategy: Strategy, lambda: f64, column: &str) -> Vec<f64> {
        let Some(k) = self.metric_columns().iter().position(|c| c == column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| r.strategy == strategy && r.lambda == lambda)
            .filter_map(|r| r.outcome.as_ref().ok().and_then(|m| self.metric_values(m)[k]))
            .collect()
    }
}

/// Groups `(strategy, lambda, values)` cells by sweep point in order of first
/// appearance. Failed runs carry `None` values.
pub fn aggregate(
    cells: impl IntoIterator<Item = (String, f64, Option<Vec<Option<f64>>>)>,
    n_metrics: usize,
) -> Vec<AggregateRow> {
    let mut points: Vec<(String, f64, [usize; 2], Vec<Vec<f64>>)> = Vec::new();
    for (strategy, lambda, values) in cells {
        let idx = match points.iter().position(|p| p.0 == strategy && p.1.to_bits() == lambda.to_bits()) {
            Some(i) => i,
            None => {
                points.push((strategy, lambda, [0, 0], vec![Vec::new(); n_metrics]));
                points.len() - 1
            }
        };
        let p = &mut points[idx];
        match values {
            Some(vals) => {
                p.2[0] += 1;
                for (col, v) in p.3.iter_mut().zip(vals) {
                    col.extend(v);
                }
            }
            None => p.2[1] += 1,
        }
    }
    points
        .into_iter()
        .map(|(strategy, lambda, [n_ok, n_failed], cols)| AggregateRow {
            strategy,
            lambda,
            n_ok,
            n_failed,
            metrics: cols.iter().map(|c| mean_ci95(c)).collect(),
        })
        .collect()
}

fn run_one(train: &Dataset, val: &Dataset, test: &Dataset, cfg: &TrainConfig, target_fpr: f64) -> mindiff_core::Result<RunMetrics> {
    let r = mindiff_core::train(train, cfg, &WallClock::new())?;
    let thresholds = calibrate_thresholds(&r.params, val, target_fpr)?;
    let eval = mindiff_core::evaluate(&r.params, test, &thresholds)?;
    Ok(RunMetrics { eval, steps_per_sec: r.steps_per_sec, total_steps: r.total_steps, skipped_regularizers: r.skipped_regularizers })
}

/// Trains, calibrates and evaluates every (strategy, lambda, run) cell on a
/// seeded train/validation/test split. A failing cell is recorded with its
/// reason and the sweep continues.
pub fn run_sweep(ds: &Dataset, cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let parts = ds.split(&cfg.split, cfg.seed)?;
    let (train, val, test) = (&parts[0], &parts[1], &parts[2]);
    let cells: Vec<(Strategy, f64, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| cfg.lambdas.iter().flat_map(move |&l| (0..cfg.runs_per_point).map(move |r| (s, l, r))))
        .collect();
    let work = |&(strategy, lambda, run): &(Strategy, f64, usize)| {
        let seed = run_seed(cfg.seed, strategy, lambda, run);
        let tc = TrainConfig { strategy, lambda, seed, ..cfg.train.clone() };
        let outcome = run_one(train, val, test, &tc, cfg.target_fpr).map_err(|e| e.to_string());
        RunRow { strategy, lambda, run, seed, outcome }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| cells.par_iter().map(work).collect());
    Ok(SweepReport { task_names: ds.task_names().to_vec(), group_names: ds.group_names().to_vec(), rows })
}

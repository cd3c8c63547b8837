//! Side-batch scaling and throughput benchmark.

use std::io::Write;
use std::path::Path;

use mindiff_core::{build_streams, synthesize, Clock, Dataset, Strategy, SynthConfig, TrainConfig, Trainer, WARMUP_STEPS};

use crate::config::{parse_strategies, ExperimentConfig};
use crate::error::{Error, Result};
use crate::report::write_atomically;
use crate::stats::median;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub tasks: Vec<usize>,
    pub groups: Vec<usize>,
    pub strategies: Vec<Strategy>,
    /// Timed steps per run, after the warmup steps.
    pub steps: usize,
    pub repeats: usize,
    pub n: usize,
    pub lambda: f64,
    /// Strategy, lambda and seed are overwritten per run.
    pub train: TrainConfig,
    pub seed: u64,
}

impl BenchConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self> {
        let b = &cfg.bench;
        let out = Self {
            tasks: b.tasks.clone(),
            groups: b.groups.clone(),
            strategies: parse_strategies(&b.strategies)?,
            steps: b.steps,
            repeats: b.repeats,
            n: b.n,
            lambda: b.lambda,
            train: cfg.train.to_train_config()?,
            seed: cfg.seed,
        };
        if out.tasks.is_empty() || out.groups.is_empty() || out.steps == 0 || out.repeats == 0 {
            return Err(Error::Config("bench needs tasks, groups, steps >= 1 and repeats >= 1".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub tasks: usize,
    pub groups: usize,
    pub strategy: Strategy,
    /// Side examples in one drawn batch.
    pub side_examples: usize,
    pub median_steps_per_sec: f64,
    pub samples: Vec<f64>,
}

/// Synthetic dataset used for one benchmark cell, with leakage on group 0.
pub fn bench_dataset(tasks: usize, groups: usize, n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let mut sc = SynthConfig::uniform(tasks, groups, n).with_group_bias(0, 0.2);
    sc.dim = dim;
    Ok(synthesize(&sc, seed)?)
}

/// Steps per second of `steps` SGD updates following [`WARMUP_STEPS`]
/// untimed ones.
pub fn time_steps(ds: &Dataset, cfg: &TrainConfig, steps: usize, clock: &dyn Clock) -> Result<f64> {
    let mut trainer = Trainer::new(ds, cfg)?;
    for _ in 0..WARMUP_STEPS {
        trainer.step()?;
    }
    let start = clock.now();
    for _ in 0..steps {
        trainer.step()?;
    }
    let elapsed = clock.now() - start;
    Ok(if elapsed > 0.0 { steps as f64 / elapsed } else { f64::INFINITY })
}

/// Median throughput per strategy on one dataset. Repeats are interleaved
/// across strategies so slow drifts in machine load affect all alike.
pub fn median_throughput(
    ds: &Dataset,
    base: &TrainConfig,
    strategies: &[Strategy],
    lambda: f64,
    steps: usize,
    repeats: usize,
    clock: &dyn Clock,
) -> Result<Vec<Vec<f64>>> {
    let mut samples = vec![Vec::with_capacity(repeats); strategies.len()];
    for rep in 0..repeats {
        for (k, &strategy) in strategies.iter().enumerate() {
            let cfg = TrainConfig { strategy, lambda, seed: base.seed.wrapping_add(rep as u64), ..base.clone() };
            samples[k].push(time_steps(ds, &cfg, steps, clock)?);
        }
    }
    Ok(samples)
}

/// Runs every `(T, |G|)` cell serially and reports the exact side-batch size
/// and the median steps per second of each strategy.
pub fn run_scaling_bench(cfg: &BenchConfig, clock: &dyn Clock) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &t in &cfg.tasks {
        for &g in &cfg.groups {
            let ds = bench_dataset(t, g, cfg.n, cfg.train.dim, cfg.seed)?;
            let base = TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
            let samples = median_throughput(&ds, &base, &cfg.strategies, cfg.lambda, cfg.steps, cfg.repeats, clock)?;
            for (&strategy, s) in cfg.strategies.iter().zip(samples) {
                let spec = TrainConfig { strategy, ..base.clone() }.stream_spec();
                let side_examples = build_streams(&ds, &spec, cfg.seed)?.next_batch().side_examples();
                rows.push(BenchRow {
                    tasks: t,
                    groups: g,
                    strategy,
                    side_examples,
                    median_steps_per_sec: median(&s).unwrap_or(f64::NAN),
                    samples: s,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let repeats = rows.iter().map(|r| r.samples.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["tasks", "groups", "strategy", "side_examples", "median_steps_per_sec"].map(String::from).into();
    header.extend((1..=repeats).map(|k| format!("steps_per_sec_{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.tasks.to_string(),
            r.groups.to_string(),
            r.strategy.name().to_string(),
            r.side_examples.to_string(),
            r.median_steps_per_sec.to_string(),
        ];
        rec.extend(r.samples.iter().map(f64::to_string));
        rec.resize(header.len(), String::new());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    write_atomically(path, |f| f.write_all(&bytes))
}

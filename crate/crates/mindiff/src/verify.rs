//! Self-checks run by the `verify` subcommand: the equal-opportunity table
//! sweep and reference comparisons for the MMD and ranking metrics.

use std::fmt;

use mindiff_core::{
    average_precision, brute_average_precision, lemma1_property_sweep, mmd_sq, naive_mmd_sq, pairwise_roc_auc, roc_auc,
    KernelConfig, Lemma1Report,
};
use mindiff_core::verification::MAX_TASKS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} cases, max error {:.3e} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

/// `mmd_sq` against the literal double sum on `pairs` random set pairs of
/// size at most 20 in `[0, 1]`, bandwidth 1.
pub fn mmd_oracle(pairs: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = KernelConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a: Vec<f64> = (0..rng.random_range(1..=20)).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..rng.random_range(1..=20)).map(|_| rng.random()).collect();
        worst = worst.max((mmd_sq(&a, &b, cfg)? - naive_mmd_sq(&a, &b, cfg.bandwidth)).abs());
    }
    Ok(OracleCheck { name: "mmd double-sum", cases: pairs, max_error: worst, tolerance: 1e-10 })
}

/// `mmd_sq({0}, {1})` at bandwidth 1 against `2 - 2 exp(-1/2)`.
pub fn mmd_singleton() -> Result<OracleCheck> {
    let v = mmd_sq(&[0.0], &[1.0], KernelConfig::default())?;
    Ok(OracleCheck { name: "mmd singleton closed form", cases: 1, max_error: (v - (2.0 - 2.0 * (-0.5f64).exp())).abs(), tolerance: 1e-12 })
}

fn random_scored_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(1..=200);
    // Coarse grids in some sets so that ties are common.
    let levels = if rng.random_bool(0.5) { rng.random_range(2..=10) } else { 0 };
    let scores = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if levels > 0 {
                (u * levels as f64).floor() / levels as f64
            } else {
                u
            }
        })
        .collect();
    let p = rng.random_range(0.05..0.95);
    let labels = (0..n).map(|_| rng.random_bool(p)).collect();
    (scores, labels)
}

fn option_error(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

/// ROC AUC and average precision against pairwise and threshold-by-threshold
/// references on `sets` random scored sets of size at most 200.
pub fn metric_oracles(sets: usize, seed: u64) -> [OracleCheck; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut auc_err, mut ap_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..sets {
        let (s, y) = random_scored_set(&mut rng);
        auc_err = auc_err.max(option_error(roc_auc(&s, &y), pairwise_roc_auc(&s, &y)));
        ap_err = ap_err.max(option_error(average_precision(&s, &y), brute_average_precision(&s, &y)));
    }
    [
        OracleCheck { name: "roc auc pairwise", cases: sets, max_error: auc_err, tolerance: 1e-12 },
        OracleCheck { name: "average precision", cases: sets, max_error: ap_err, tolerance: 1e-12 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub lemma: Lemma1Report,
    pub oracles: Vec<OracleCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.lemma.passed() && self.oracles.iter().all(OracleCheck::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.lemma;
        writeln!(
            f,
            "{} table sweep: {} tables, eps {:e}, violations {}, generator failures {}, worst gap/(T*eps) {:.3}, max decomposition error {:.3e}",
            if l.passed() { "PASS" } else { "FAIL" },
            l.tables,
            l.eps,
            l.violations,
            l.generator_failures,
            l.worst_gap_ratio,
            l.max_decomposition_error
        )?;
        writeln!(
            f,
            "     overlapping tables {}: counterexamples {}, largest overall gap {:.4}",
            l.overlap_tables, l.counterexamples, l.largest_counterexample_gap
        )?;
        for o in &self.oracles {
            writeln!(f, "{o}")?;
        }
        Ok(())
    }
}

pub fn run_verify(tables: usize, t_max: usize, eps: f64, seed: u64) -> Result<VerifyReport> {
    if !(1..=MAX_TASKS).contains(&t_max) || !(eps > 0.0) {
        return Err(Error::Config(format!("verify needs 1 <= t_max <= {MAX_TASKS} and eps > 0")));
    }
    let lemma = lemma1_property_sweep(tables, t_max, eps, seed);
    let mut oracles = vec![mmd_oracle(100, seed)?, mmd_singleton()?];
    oracles.extend(metric_oracles(100, seed.wrapping_add(1)));
    Ok(VerifyReport { lemma, oracles })
}

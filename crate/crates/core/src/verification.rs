//! Exact checks of equal-opportunity conditions over explicit finite joint
//! distributions of `(task predictions, membership, overall label)`.
//!
//! Used to exercise, by brute force, the claim that when at most one task
//! classifier fires on any input, per-task equal opportunity conditioned on
//! all labels being negative implies equal opportunity of the composite OR
//! decision. The per-task gaps add up: the overall gap is bounded by their
//! sum, so per-task gaps within `eps` give an overall gap within `T * eps`.
//! Without the non-overlap condition the implication fails, and the sweep
//! searches for such counterexamples.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest task count a table may have.
pub const MAX_TASKS: usize = 16;

/// Joint probability table over `(mask, g, y)` where bit `t` of `mask` is the
/// prediction of task `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    tasks: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(tasks: usize) -> Self {
        assert!((1..=MAX_TASKS).contains(&tasks), "tasks must be in 1..={MAX_TASKS}");
        Self { tasks, probs: vec![0.0; 4 << tasks] }
    }

    fn index(mask: usize, g: usize, y: usize) -> usize {
        (mask << 2) | (g << 1) | y
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn get(&self, mask: usize, g: usize, y: usize) -> f64 {
        self.probs[Self::index(mask, g, y)]
    }

    pub fn set(&mut self, mask: usize, g: usize, y: usize, p: f64) {
        self.probs[Self::index(mask, g, y)] = p;
    }

    pub fn num_masks(&self) -> usize {
        1 << self.tasks
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.probs.iter().all(|&p| p >= 0.0) && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// No outcome with positive probability has two or more tasks firing.
    pub fn satisfies_non_overlap(&self) -> bool {
        (0..self.num_masks())
            .filter(|m| m.count_ones() >= 2)
            .all(|m| (0..2).all(|g| (0..2).all(|y| self.get(m, g, y) == 0.0)))
    }

    fn negative_mass(&self, g: usize) -> Result<f64> {
        let mass: f64 = (0..self.num_masks()).map(|m| self.get(m, g, 0)).sum();
        if mass > 0.0 {
            Ok(mass)
        } else {
            Err(Error::UndefinedCondition(if g == 0 { "P(G=0, Y=0) = 0" } else { "P(G=1, Y=0) = 0" }))
        }
    }

    /// `P(Yhat_t = 1 | G = g, Y = 0)`
    pub fn task_fpr(&self, t: usize, g: usize) -> Result<f64> {
        let mass = self.negative_mass(g)?;
        let fire: f64 = (0..self.num_masks()).filter(|m| m >> t & 1 == 1).map(|m| self.get(m, g, 0)).sum();
        Ok(fire / mass)
    }

    /// `P(max_t Yhat_t = 1 | G = g, Y = 0)`
    pub fn overall_fpr(&self, g: usize) -> Result<f64> {
        let mass = self.negative_mass(g)?;
        let fire: f64 = (1..self.num_masks()).map(|m| self.get(m, g, 0)).sum();
        Ok(fire / mass)
    }

    /// Signed per-task gaps `P(. | G=0) - P(. | G=1)`.
    pub fn task_gaps(&self) -> Result<Vec<f64>> {
        (0..self.tasks).map(|t| Ok(self.task_fpr(t, 0)? - self.task_fpr(t, 1)?)).collect()
    }

    pub fn overall_gap(&self) -> Result<f64> {
        Ok(self.overall_fpr(0)? - self.overall_fpr(1)?)
    }
}

pub fn check_overconditioned_eo(table: &JointTable, eps: f64) -> Result<bool> {
    Ok(table.task_gaps()?.iter().all(|d| d.abs() <= eps))
}

pub fn check_overall_eo(table: &JointTable, eps: f64) -> Result<bool> {
    Ok(table.overall_gap()?.abs() <= eps)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lemma1Report {
    pub tables: usize,
    pub eps: f64,
    /// Tables whose overall gap exceeded `T * eps`.
    pub violations: usize,
    /// Generated tables that failed the overconditioned check (generator defect).
    pub generator_failures: usize,
    /// Largest `|overall gap| / (T * eps)` seen.
    pub worst_gap_ratio: f64,
    /// Largest deviation between the overall FPR and the sum of task FPRs.
    pub max_decomposition_error: f64,
    pub overlap_tables: usize,
    /// Overlapping tables with exact overconditioned EO but overall gap > 0.01.
    pub counterexamples: usize,
    pub largest_counterexample_gap: f64,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.violations == 0
            && self.generator_failures == 0
            && self.max_decomposition_error <= 1e-12
            && self.counterexamples >= 1
    }
}

fn exp_weight(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    -libm::log(1.0 - u)
}

/// Random non-overlapping table whose per-task negative-slice firing rates
/// differ across membership by at most `eps` (in absolute value).
pub fn random_non_overlap_table(tasks: usize, eps: f64, rng: &mut ChaCha8Rng) -> JointTable {
    let mut table = JointTable::new(tasks);
    let admissible: Vec<usize> = core::iter::once(0).chain((0..tasks).map(|t| 1 << t)).collect();
    let mut total = 0.0;
    for &m in &admissible {
        for g in 0..2 {
            for y in 0..2 {
                let w = exp_weight(rng);
                table.set(m, g, y, w);
                total += w;
            }
        }
    }
    for &m in &admissible {
        for g in 0..2 {
            for y in 0..2 {
                table.set(m, g, y, table.get(m, g, y) / total);
            }
        }
    }

    // Project the Y = 0 slices onto per-task firing rates that agree up to a
    // perturbation of at most eps, keeping each slice's mass.
    let mass: [f64; 2] = core::array::from_fn(|g| admissible.iter().map(|&m| table.get(m, g, 0)).sum());
    let mut common: Vec<f64> =
        (0..tasks).map(|t| 0.5 * (table.get(1 << t, 0, 0) / mass[0] + table.get(1 << t, 1, 0) / mass[1])).collect();
    let limit = 1.0 - tasks as f64 * eps;
    let sum: f64 = common.iter().sum();
    if sum > limit {
        for q in &mut common {
            *q *= limit / sum;
        }
    }
    for g in 0..2 {
        let mut fired = 0.0;
        for (t, &q) in common.iter().enumerate() {
            let delta = if q > eps { 0.999 * eps * rng.random_range(-0.5..0.5) } else { 0.0 };
            let rate = if g == 0 { q + delta } else { q - delta };
            table.set(1 << t, g, 0, mass[g] * rate);
            fired += rate;
        }
        table.set(0, g, 0, mass[g] * (1.0 - fired));
    }
    table
}

/// Table with identical per-task marginals in both negative slices but a
/// different amount of overlap between tasks: a mixture of the comonotone
/// coupling (weight `rho_g`) and the independent coupling.
pub fn random_overlap_table(tasks: usize, rng: &mut ChaCha8Rng) -> JointTable {
    let q: Vec<f64> = (0..tasks).map(|_| rng.random_range(0.02..0.4)).collect();
    let masks = 1usize << tasks;

    let mut comonotone = vec![0.0; masks];
    let mut cuts: Vec<f64> = q.clone();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi > lo {
            let mask = (0..tasks).filter(|&t| q[t] >= hi).fold(0, |acc, t| acc | 1 << t);
            comonotone[mask] += hi - lo;
        }
    }
    let independent: Vec<f64> = (0..masks)
        .map(|m| (0..tasks).map(|t| if m >> t & 1 == 1 { q[t] } else { 1.0 - q[t] }).product())
        .collect();

    let mut table = JointTable::new(tasks);
    let neg_mass = [rng.random_range(0.2..0.4), rng.random_range(0.2..0.4)];
    let pos_weights: Vec<f64> = (0..2 * masks).map(|_| exp_weight(rng)).collect();
    let pos_total: f64 = pos_weights.iter().sum();
    let pos_mass = 1.0 - neg_mass[0] - neg_mass[1];
    for g in 0..2 {
        let rho: f64 = rng.random();
        for m in 0..masks {
            table.set(m, g, 0, neg_mass[g] * (rho * comonotone[m] + (1.0 - rho) * independent[m]));
            table.set(m, g, 1, pos_mass * pos_weights[g * masks + m] / pos_total);
        }
    }
    table
}

/// Brute-force sweep over random tables.
///
/// Non-overlapping tables are generated with per-task gaps within `eps`;
/// each must show an overall gap within `T * eps` and an overall FPR equal to
/// the sum of task FPRs. An equal number of overlapping tables is generated
/// to search for counterexamples, which are counted, not asserted against.
pub fn lemma1_property_sweep(n_tables: usize, t_max: usize, eps: f64, seed: u64) -> Lemma1Report {
    assert!(t_max >= 1 && t_max <= MAX_TASKS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Lemma1Report { tables: n_tables, eps, ..Default::default() };
    for _ in 0..n_tables {
        let tasks = rng.random_range(1..=t_max);
        let table = random_non_overlap_table(tasks, eps, &mut rng);
        debug_assert!(table.satisfies_non_overlap() && table.is_normalized(1e-9));
        if !check_overconditioned_eo(&table, eps).unwrap_or(false) {
            report.generator_failures += 1;
            continue;
        }
        for g in 0..2 {
            let sum: f64 = (0..tasks).map(|t| table.task_fpr(t, g).unwrap()).sum();
            let err = (table.overall_fpr(g).unwrap() - sum).abs();
            report.max_decomposition_error = report.max_decomposition_error.max(err);
        }
        let bound = tasks as f64 * eps;
        let gap = table.overall_gap().unwrap().abs();
        if !check_overall_eo(&table, bound).unwrap() {
            report.violations += 1;
        }
        if bound > 0.0 {
            report.worst_gap_ratio = report.worst_gap_ratio.max(gap / bound);
        }
    }
    if t_max >= 2 {
        for _ in 0..n_tables {
            let tasks = rng.random_range(2..=t_max);
            let table = random_overlap_table(tasks, &mut rng);
            report.overlap_tables += 1;
            if check_overconditioned_eo(&table, 1e-9).unwrap_or(false) {
                let gap = table.overall_gap().unwrap().abs();
                if gap > 0.01 {
                    report.counterexamples += 1;
                    report.largest_counterexample_gap = report.largest_counterexample_gap.max(gap);
                }
            }
        }
    }
    report
}

/// Reference squared MMD: the literal triple double-sum, no symmetry tricks.
pub fn naive_mmd_sq(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let k = |x: f64, y: f64| libm::exp(-(x - y) * (x - y) / (2.0 * bandwidth * bandwidth));
    let mean_pairs = |xs: &[f64], ys: &[f64]| {
        let mut s = 0.0;
        for &x in xs {
            for &y in ys {
                s += k(x, y);
            }
        }
        s / (xs.len() * ys.len()) as f64
    };
    mean_pairs(a, a) + mean_pairs(b, b) - 2.0 * mean_pairs(a, b)
}

/// Reference ROC AUC over all positive/negative pairs, ties counting one half.
pub fn pairwise_roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

/// Reference average precision: precision and recall recounted from scratch
/// at every distinct score threshold, highest first.
pub fn brute_average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return None;
    }
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut sel, mut tp) = (0usize, 0usize);
        for (s, &y) in scores.iter().zip(labels) {
            if *s >= t {
                sel += 1;
                tp += usize::from(y);
            }
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (tp as f64 / sel as f64) * (recall - prev_recall);
        prev_recall = recall;
    }
    Some(ap)
}

//! Dataset model and the synthetic biased-data generator.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::{hash_vectorize, SparseFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Membership {
    NonMember,
    Member,
    Unknown,
}

impl Membership {
    pub fn is_known(self) -> bool {
        self != Membership::Unknown
    }

    pub fn from_flag(member: bool) -> Self {
        if member {
            Membership::Member
        } else {
            Membership::NonMember
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseFeatures,
    pub labels: Vec<bool>,
    pub groups: Vec<Membership>,
}

impl Example {
    /// System-level label: positive iff any task label is positive.
    pub fn overall_label(&self) -> bool {
        self.labels.iter().any(|&y| y)
    }
}

/// Unvectorized record, as read from a CSV file or produced by the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub text: String,
    pub labels: Vec<bool>,
    pub groups: Vec<Membership>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    task_names: Vec<String>,
    group_names: Vec<String>,
    dim: usize,
}

impl Dataset {
    pub fn new(task_names: Vec<String>, group_names: Vec<String>, dim: usize) -> Self {
        Self { examples: Vec::new(), task_names, group_names, dim }
    }

    pub fn push(&mut self, example: Example) -> Result<()> {
        if example.labels.len() != self.num_tasks() {
            return Err(Error::Config(format!(
                "example has {} labels, dataset has {} tasks",
                example.labels.len(),
                self.num_tasks()
            )));
        }
        if example.groups.len() != self.num_groups() {
            return Err(Error::Config(format!(
                "example has {} group flags, dataset has {} groups",
                example.groups.len(),
                self.num_groups()
            )));
        }
        if example.features.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: example.features.dim() });
        }
        self.examples.push(example);
        Ok(())
    }

    /// Vectorizes every record with the hashing trick.
    pub fn from_records(
        records: &[RawRecord],
        task_names: Vec<String>,
        group_names: Vec<String>,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".to_string()));
        }
        let mut ds = Self::new(task_names, group_names, dim);
        for r in records {
            ds.push(Example {
                features: hash_vectorize(&r.text, dim),
                labels: r.labels.clone(),
                groups: r.groups.clone(),
            })?;
        }
        Ok(ds)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task_names(&self) -> &[String] {
        &self.task_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            task_names: self.task_names.clone(),
            group_names: self.group_names.clone(),
            dim: self.dim,
        }
    }

    /// Seeded shuffle followed by a split into consecutive parts of the given
    /// fractions. The last part takes the rounding remainder.
    pub fn split(&self, fractions: &[f64], seed: u64) -> Result<Vec<Self>> {
        let sum: f64 = fractions.iter().sum();
        if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must be positive and sum to 1, got {fractions:?}")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut parts = Vec::with_capacity(fractions.len());
        let mut start = 0;
        let mut acc = 0.0;
        for (i, f) in fractions.iter().enumerate() {
            acc += f;
            let end = if i + 1 == fractions.len() {
                self.len()
            } else {
                (libm::round(acc * self.len() as f64) as usize).min(self.len())
            };
            parts.push(self.subset(&order[start..end]));
            start = end;
        }
        Ok(parts)
    }
}

/// Generator settings for a dataset with controllable label leakage into
/// group-member negatives.
///
/// Text is drawn from three token pools: neutral filler, per-task indicative
/// tokens, and per-group identity tokens. A positive for task `t` carries one
/// or two task-`t` tokens. A negative for task `t` carries a task-`t` token
/// with probability `noise`, and additionally with probability `bias[t][m]`
/// if it belongs to group `m`. Members mention one identity token of their
/// group with probability `mention_rate`, and their task rates are scaled by
/// `label_skew`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub tasks: usize,
    pub groups: usize,
    pub n: usize,
    pub dim: usize,
    /// `P(member)` per group, each in `(0, 1)`.
    pub group_prevalence: Vec<f64>,
    /// Probability that a membership flag is observed rather than unknown.
    pub group_label_rate: f64,
    /// Probability that a member's text mentions one of its identity tokens.
    pub mention_rate: f64,
    /// Multiplier on every `P(y_t = 1)` for members of each group; values
    /// above 1 associate the identity with positive labels.
    pub label_skew: Vec<f64>,
    /// `P(y_t = 1)` per task.
    pub task_rate: Vec<f64>,
    /// Leakage probability per `[task][group]`.
    pub bias: Vec<Vec<f64>>,
    pub noise: f64,
    pub filler_tokens: usize,
    pub filler_vocab: usize,
    pub task_vocab: usize,
    pub group_vocab: usize,
}

impl SynthConfig {
    /// Unbiased configuration with uniform rates.
    pub fn uniform(tasks: usize, groups: usize, n: usize) -> Self {
        Self {
            tasks,
            groups,
            n,
            dim: 1000,
            group_prevalence: vec![0.2; groups],
            group_label_rate: 1.0,
            mention_rate: 1.0,
            label_skew: vec![1.0; groups],
            task_rate: vec![0.1; tasks],
            bias: vec![vec![0.0; groups]; tasks],
            noise: 0.05,
            filler_tokens: 12,
            filler_vocab: 300,
            task_vocab: 8,
            group_vocab: 4,
        }
    }

    pub fn with_label_skew(mut self, m: usize, skew: f64) -> Self {
        self.label_skew[m] = skew;
        self
    }

    /// Sets the same leakage for every task on group `m`.
    pub fn with_group_bias(mut self, m: usize, strength: f64) -> Self {
        for row in &mut self.bias {
            row[m] = strength;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.tasks == 0 {
            return err("synthetic tasks must be >= 1".into());
        }
        if self.dim == 0 {
            return err("synthetic dim must be >= 1".into());
        }
        if self.group_prevalence.len() != self.groups {
            return err(format!("group_prevalence has {} entries, expected {}", self.group_prevalence.len(), self.groups));
        }
        if let Some(p) = self.group_prevalence.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return err(format!("group prevalence {p} not in (0, 1)"));
        }
        if self.task_rate.len() != self.tasks {
            return err(format!("task_rate has {} entries, expected {}", self.task_rate.len(), self.tasks));
        }
        if let Some(p) = self.task_rate.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return err(format!("task rate {p} not in (0, 1)"));
        }
        if !(self.group_label_rate > 0.0 && self.group_label_rate <= 1.0) {
            return err(format!("group_label_rate {} not in (0, 1]", self.group_label_rate));
        }
        if self.bias.len() != self.tasks || self.bias.iter().any(|r| r.len() != self.groups) {
            return err(format!("bias must be a {} x {} matrix", self.tasks, self.groups));
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !self.bias.iter().flatten().all(|&b| unit(b)) || !unit(self.noise) || !unit(self.mention_rate) {
            return err("bias strengths, noise and mention_rate must lie in [0, 1]".into());
        }
        if self.label_skew.len() != self.groups || self.label_skew.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return err(format!("label_skew must hold {} positive entries", self.groups));
        }
        let worst: f64 = self.label_skew.iter().map(|&s| s.max(1.0)).product();
        if let Some(p) = self.task_rate.iter().find(|&&p| p * worst >= 1.0) {
            return err(format!("task rate {p} times label skew {worst} reaches 1"));
        }
        if self.filler_vocab == 0 || self.task_vocab == 0 || self.group_vocab == 0 {
            return err("token vocabularies must be non-empty".into());
        }
        Ok(())
    }

    pub fn task_names(&self) -> Vec<String> {
        (0..self.tasks).map(|t| format!("task{t}")).collect()
    }

    pub fn group_names(&self) -> Vec<String> {
        (0..self.groups).map(|m| format!("group{m}")).collect()
    }
}

/// Generates raw records; deterministic in `seed`.
pub fn synthesize_records(cfg: &SynthConfig, seed: u64) -> Result<Vec<RawRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.n);
    let mut tokens: Vec<String> = Vec::new();
    for _ in 0..cfg.n {
        tokens.clear();
        let member: Vec<bool> = cfg.group_prevalence.iter().map(|&p| rng.random_bool(p)).collect();
        let skew: f64 = member.iter().zip(&cfg.label_skew).filter(|(&is_member, _)| is_member).map(|(_, &s)| s).product();
        let labels: Vec<bool> = cfg.task_rate.iter().map(|&p| rng.random_bool(p * skew)).collect();

        for _ in 0..cfg.filler_tokens {
            tokens.push(format!("w{}", rng.random_range(0..cfg.filler_vocab)));
        }
        for (m, &is_member) in member.iter().enumerate() {
            if is_member && rng.random_bool(cfg.mention_rate) {
                tokens.push(format!("g{m}x{}", rng.random_range(0..cfg.group_vocab)));
            }
        }
        for t in 0..cfg.tasks {
            let count = if labels[t] {
                1 + usize::from(rng.random_bool(0.5))
            } else {
                let mut c = usize::from(rng.random_bool(cfg.noise));
                for (m, &is_member) in member.iter().enumerate() {
                    if is_member && rng.random_bool(cfg.bias[t][m]) {
                        c += 1;
                    }
                }
                c.min(1)
            };
            for _ in 0..count {
                tokens.push(format!("t{t}x{}", rng.random_range(0..cfg.task_vocab)));
            }
        }
        tokens.shuffle(&mut rng);

        let groups = member
            .iter()
            .map(|&is_member| {
                if rng.random_bool(cfg.group_label_rate) {
                    Membership::from_flag(is_member)
                } else {
                    Membership::Unknown
                }
            })
            .collect();
        out.push(RawRecord { text: tokens.join(" "), labels, groups });
    }
    Ok(out)
}

/// Generates and vectorizes a synthetic dataset.
pub fn synthesize(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    let records = synthesize_records(cfg, seed)?;
    Dataset::from_records(&records, cfg.task_names(), cfg.group_names(), cfg.dim)
}

//! Strategy-dependent batch composition.
//!
//! Every strategy draws a main batch from all examples. Remediating strategies
//! additionally draw side batches of negatives with observed group membership,
//! one list per membership side:
//!
//! | strategy        | side pools        | side examples per batch |
//! |-----------------|-------------------|-------------------------|
//! | none            | 0                 | 0                       |
//! | baseline        | `2 * T * G`       | `2 * b_s * T * G`       |
//! | overconditioned | `2 * G`           | `2 * b_s * G`           |
//! | interleaved     | `2 * G`           | `2 * b_s`               |
//! | direct          | `2 * G`           | `2 * b_s`               |
//!
//! Baseline pools for `(t, m)` condition on `y_t = 0`; all other pools
//! condition on every task label being negative.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example, Membership};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    None,
    Direct,
    Baseline,
    Overconditioned,
    InterleavedOverconditioned,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::None,
        Strategy::Direct,
        Strategy::Baseline,
        Strategy::Overconditioned,
        Strategy::InterleavedOverconditioned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Direct => "direct",
            Strategy::Baseline => "mindiff",
            Strategy::Overconditioned => "mindiff-o",
            Strategy::InterleavedOverconditioned => "mindiff-io",
        }
    }

    /// Output heads of the network trained under this strategy.
    pub fn num_heads(self, num_tasks: usize) -> usize {
        match self {
            Strategy::Direct => 1,
            _ => num_tasks,
        }
    }

    /// Whether one randomly drawn group is remediated per step.
    pub fn interleaves(self) -> bool {
        matches!(self, Strategy::Direct | Strategy::InterleavedOverconditioned)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "none" | "unremediated" => Strategy::None,
            "direct" => Strategy::Direct,
            "mindiff" | "baseline" => Strategy::Baseline,
            "mindiff-o" | "overconditioned" => Strategy::Overconditioned,
            "mindiff-io" | "interleaved" | "interleaved-overconditioned" => {
                Strategy::InterleavedOverconditioned
            }
            _ => return Err(Error::Config(format!("unknown strategy '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub strategy: Strategy,
    pub main_batch: usize,
    /// Examples per membership side of each side pair.
    pub side_batch: usize,
    /// Group sampling weights for interleaving; `None` is uniform.
    pub group_weights: Option<Vec<f64>>,
}

impl StreamSpec {
    pub fn new(strategy: Strategy, main_batch: usize, side_batch: usize) -> Self {
        Self { strategy, main_batch, side_batch, group_weights: None }
    }

    pub fn validate(&self, num_groups: usize) -> Result<()> {
        if self.main_batch == 0 || self.side_batch == 0 {
            return Err(Error::Config("batch sizes must be >= 1".to_string()));
        }
        if let Some(w) = &self.group_weights {
            if w.len() != num_groups || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Config(format!(
                    "group_weights must be {num_groups} positive finite values"
                )));
            }
        }
        Ok(())
    }

    /// Side examples in every batch for the given problem size.
    pub fn side_examples_per_batch(&self, num_tasks: usize, num_groups: usize) -> usize {
        let bs = self.side_batch;
        match self.strategy {
            Strategy::None => 0,
            Strategy::Baseline => 2 * bs * num_tasks * num_groups,
            Strategy::Overconditioned => 2 * bs * num_groups,
            Strategy::Direct | Strategy::InterleavedOverconditioned => {
                if num_groups == 0 {
                    0
                } else {
                    2 * bs
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskScope {
    AllTasks,
    SingleTask(usize),
}

/// Side batch for one `(scope, group)` pair. Entries index into the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SideBatch {
    pub task_scope: TaskScope,
    pub group: usize,
    pub nonmember: Vec<usize>,
    pub member: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub main: Vec<usize>,
    pub sides: Vec<SideBatch>,
}

impl Batch {
    pub fn side_examples(&self) -> usize {
        self.sides.iter().map(|s| s.nonmember.len() + s.member.len()).sum()
    }

    /// Checks that every side example satisfies its pool's conditioning.
    pub fn check_conditioning(&self, ds: &Dataset) -> Result<()> {
        for side in &self.sides {
            for (list, want) in [(&side.nonmember, Membership::NonMember), (&side.member, Membership::Member)] {
                for &i in list {
                    let ex = &ds.examples()[i];
                    let negative = match side.task_scope {
                        TaskScope::SingleTask(t) => !ex.labels[t],
                        TaskScope::AllTasks => !ex.overall_label(),
                    };
                    if !negative || ex.groups[side.group] != want {
                        return Err(Error::Config(format!(
                            "example {i} violates conditioning of side ({:?}, group {})",
                            side.task_scope, side.group
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Infinite shuffled stream over a fixed index pool; reshuffles on exhaustion.
#[derive(Debug, Clone)]
struct CyclingPool {
    order: Vec<usize>,
    cursor: usize,
}

impl CyclingPool {
    fn new(indices: Vec<usize>) -> Self {
        let cursor = indices.len();
        Self { order: indices, cursor }
    }

    fn draw(&mut self, k: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        for _ in 0..k {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
    }
}

#[derive(Debug, Clone)]
struct PoolPair {
    scope: TaskScope,
    group: usize,
    nonmember: CyclingPool,
    member: CyclingPool,
}

/// Draws group indices for interleaving.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSampler {
    num_groups: usize,
    cumulative: Option<Vec<f64>>,
    probs: Option<Vec<f64>>,
}

impl GroupSampler {
    pub fn new(num_groups: usize, weights: Option<&[f64]>) -> Self {
        match weights {
            None => Self { num_groups, cumulative: None, probs: None },
            Some(w) => {
                let total: f64 = w.iter().sum();
                let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
                let mut acc = 0.0;
                let cumulative = probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                Self { num_groups, cumulative: Some(cumulative), probs: Some(probs) }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.cumulative {
            None => rng.random_range(0..self.num_groups),
            Some(c) => {
                let u: f64 = rng.random();
                c.iter().position(|&x| u < x).unwrap_or(self.num_groups - 1)
            }
        }
    }

    /// `1 / P(M = m)`, the factor that makes a single-group term unbiased
    /// for the all-group sum.
    pub fn inverse_probability(&self, m: usize) -> f64 {
        match &self.probs {
            None => self.num_groups as f64,
            Some(p) => 1.0 / p[m],
        }
    }
}

/// Per-run stream state. The main stream and the side streams use separate
/// generators, so the main batch sequence depends only on the seed.
#[derive(Debug, Clone)]
pub struct StreamSet<'a> {
    ds: &'a Dataset,
    spec: StreamSpec,
    main: CyclingPool,
    pools: Vec<PoolPair>,
    sampler: GroupSampler,
    main_rng: ChaCha8Rng,
    side_rng: ChaCha8Rng,
}

pub(crate) const MAIN_STREAM: u64 = 1;
pub(crate) const SIDE_STREAM: u64 = 2;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pool_pair(ds: &Dataset, scope: TaskScope, group: usize) -> Result<PoolPair> {
    let mut non = Vec::new();
    let mut mem = Vec::new();
    for (i, ex) in ds.examples().iter().enumerate() {
        let negative = match scope {
            TaskScope::SingleTask(t) => !ex.labels[t],
            TaskScope::AllTasks => !ex.overall_label(),
        };
        if !negative {
            continue;
        }
        match ex.groups[group] {
            Membership::NonMember => non.push(i),
            Membership::Member => mem.push(i),
            Membership::Unknown => {}
        }
    }
    let name = || match scope {
        TaskScope::SingleTask(t) => format!("task {t}, group {group}"),
        TaskScope::AllTasks => format!("group {group}"),
    };
    if non.is_empty() {
        return Err(Error::UnremediableStream(format!("{}: no non-member negatives", name())));
    }
    if mem.is_empty() {
        return Err(Error::UnremediableStream(format!("{}: no member negatives", name())));
    }
    Ok(PoolPair { scope, group, nonmember: CyclingPool::new(non), member: CyclingPool::new(mem) })
}

pub fn build_streams<'a>(ds: &'a Dataset, spec: &StreamSpec, seed: u64) -> Result<StreamSet<'a>> {
    spec.validate(ds.num_groups())?;
    if ds.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let groups = ds.num_groups();
    let mut pools = Vec::new();
    match spec.strategy {
        Strategy::None => {}
        Strategy::Baseline => {
            for t in 0..ds.num_tasks() {
                for m in 0..groups {
                    pools.push(pool_pair(ds, TaskScope::SingleTask(t), m)?);
                }
            }
        }
        Strategy::Overconditioned | Strategy::InterleavedOverconditioned | Strategy::Direct => {
            for m in 0..groups {
                pools.push(pool_pair(ds, TaskScope::AllTasks, m)?);
            }
        }
    }
    Ok(StreamSet {
        ds,
        spec: spec.clone(),
        main: CyclingPool::new((0..ds.len()).collect()),
        pools,
        sampler: GroupSampler::new(groups, spec.group_weights.as_deref()),
        main_rng: seeded(seed, MAIN_STREAM),
        side_rng: seeded(seed, SIDE_STREAM),
    })
}

impl<'a> StreamSet<'a> {
    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn num_side_pools(&self) -> usize {
        2 * self.pools.len()
    }

    pub fn sampler(&self) -> &GroupSampler {
        &self.sampler
    }

    /// Pool contents for `(scope, group)` as `(nonmember, member)`, sorted.
    pub fn pool_members(&self, scope: TaskScope, group: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        self.pools.iter().find(|p| p.scope == scope && p.group == group).map(|p| {
            let mut a = p.nonmember.order.clone();
            let mut b = p.member.order.clone();
            a.sort_unstable();
            b.sort_unstable();
            (a, b)
        })
    }

    pub fn next_batch(&mut self) -> Batch {
        let mut main = Vec::with_capacity(self.spec.main_batch);
        self.main.draw(self.spec.main_batch, &mut self.main_rng, &mut main);

        let bs = self.spec.side_batch;
        let mut sides = Vec::new();
        // Interleaving strategies keep exactly one pool pair per group, indexed by group.
        let selected = if self.spec.strategy.interleaves() && !self.pools.is_empty() {
            let m = self.sampler.sample(&mut self.side_rng);
            m..m + 1
        } else {
            0..self.pools.len()
        };
        for idx in selected {
            let pool = &mut self.pools[idx];
            let mut nonmember = Vec::with_capacity(bs);
            let mut member = Vec::with_capacity(bs);
            pool.nonmember.draw(bs, &mut self.side_rng, &mut nonmember);
            pool.member.draw(bs, &mut self.side_rng, &mut member);
            sides.push(SideBatch { task_scope: pool.scope, group: pool.group, nonmember, member });
        }
        let batch = Batch { main, sides };
        debug_assert!(batch.check_conditioning(self.ds).is_ok());
        batch
    }
}

/// Examples referenced by a list of dataset indices.
pub fn gather<'a>(ds: &'a Dataset, idx: &'a [usize]) -> impl Iterator<Item = &'a Example> + 'a {
    idx.iter().map(move |&i| &ds.examples()[i])
}

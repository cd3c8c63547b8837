//! Loss assembly per strategy, the SGD training loop, and throughput timing.
//!
//! The per-batch objective is
//!
//! ```text
//! loss = CE + lambda * sum_sides scale(side) * sum_{t in scope(side)} mmd²(p_t | nonmember, p_t | member)
//! ```
//!
//! where CE is the per-task binary cross-entropy summed over heads and
//! averaged over the main batch. `scale` is 1 except for interleaving
//! strategies with `interleave_rescale`, where it is the inverse probability
//! of the sampled group (|G| for uniform sampling), which makes the
//! interleaved penalty an unbiased estimate of the all-group penalty.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::mmd::{mmd_sq_with_grad, KernelConfig};
use crate::nn::{backward_logits_into, forward_into, sgd_step, softplus, ForwardCache, Gradients, MlpParams};
use crate::streams::{build_streams, Batch, GroupSampler, SideBatch, StreamSet, StreamSpec, Strategy, TaskScope};

const INIT_STREAM: u64 = 0;
const CHECK_STREAM: u64 = 3;
/// Steps excluded from the throughput window.
pub const WARMUP_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub kernel: KernelConfig,
    pub hidden: usize,
    pub dim: usize,
    pub seed: u64,
    pub interleave_rescale: bool,
    pub main_batch: usize,
    pub side_batch: usize,
    pub group_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            lambda: 0.0,
            epochs: 25,
            lr: 0.1,
            kernel: KernelConfig::default(),
            hidden: 64,
            dim: 1000,
            seed: 0,
            interleave_rescale: true,
            main_batch: 128,
            side_batch: 16,
            group_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn stream_spec(&self) -> StreamSpec {
        StreamSpec {
            strategy: self.strategy,
            main_batch: self.main_batch,
            side_batch: self.side_batch,
            group_weights: self.group_weights.clone(),
        }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let bad = |msg| Err(Error::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be > 0, got {}", self.lr));
        }
        if self.epochs == 0 || self.hidden == 0 || self.dim == 0 {
            return bad("epochs, hidden and dim must be >= 1".into());
        }
        KernelConfig::new(self.kernel.bandwidth)?;
        if ds.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: ds.dim() });
        }
        self.stream_spec().validate(ds.num_groups())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.main_batch)
    }

    pub fn init_params(&self, num_tasks: usize) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(INIT_STREAM);
        MlpParams::init(self.dim, self.hidden, self.strategy.num_heads(num_tasks), &mut rng)
    }

    fn side_scale(&self, sampler: &GroupSampler, group: usize) -> f64 {
        if self.strategy.interleaves() && self.interleave_rescale {
            self.lambda * sampler.inverse_probability(group)
        } else {
            self.lambda
        }
    }
}

/// Label for output head `k`: the task label, or the overall label for a
/// single-head network trained on the composite decision.
fn head_target(ex: &Example, heads: usize, k: usize) -> bool {
    if heads == ex.labels.len() {
        ex.labels[k]
    } else {
        ex.overall_label()
    }
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    cache: Option<ForwardCache>,
    side_caches: Vec<ForwardCache>,
    dlogits: Vec<f64>,
    side_dlogits: Vec<f64>,
    scratch: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    ga: Vec<f64>,
    gb: Vec<f64>,
}

/// Unscaled `sum_{t in scope} mmd²` for one side pair. When `grads` is given,
/// `scale * d/dtheta` of that sum is accumulated into it.
fn side_term(
    params: &MlpParams,
    ds: &Dataset,
    side: &SideBatch,
    kernel: KernelConfig,
    scale: f64,
    ws: &mut Workspace,
    grads: Option<&mut Gradients>,
) -> Result<f64> {
    let heads = params.heads();
    let nn = side.nonmember.len();
    let total = nn + side.member.len();
    while ws.side_caches.len() < total {
        ws.side_caches.push(ForwardCache::new(params));
    }
    for (slot, &i) in side.nonmember.iter().chain(&side.member).enumerate() {
        forward_into(params, &ds.examples()[i].features, &mut ws.side_caches[slot])?;
    }
    ws.side_dlogits.clear();
    ws.side_dlogits.resize(total * heads, 0.0);

    let scope = match side.task_scope {
        TaskScope::SingleTask(t) => t..t + 1,
        TaskScope::AllTasks => 0..heads,
    };
    let mut value = 0.0;
    for k in scope {
        ws.a.clear();
        ws.a.extend(ws.side_caches[..nn].iter().map(|c| c.probs[k]));
        ws.b.clear();
        ws.b.extend(ws.side_caches[nn..total].iter().map(|c| c.probs[k]));
        ws.ga.resize(ws.a.len(), 0.0);
        ws.gb.resize(ws.b.len(), 0.0);
        value += mmd_sq_with_grad(&ws.a, &ws.b, kernel, &mut ws.ga, &mut ws.gb)?;
        for (slot, g) in ws.ga.iter().chain(ws.gb.iter()).enumerate() {
            let p = ws.side_caches[slot].probs[k];
            ws.side_dlogits[slot * heads + k] += scale * g * p * (1.0 - p);
        }
    }
    if let Some(grads) = grads {
        for (slot, &i) in side.nonmember.iter().chain(&side.member).enumerate() {
            backward_logits_into(
                params,
                &ds.examples()[i].features,
                &ws.side_caches[slot],
                &ws.side_dlogits[slot * heads..(slot + 1) * heads],
                grads,
                &mut ws.scratch,
            );
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLoss {
    pub ce: f64,
    pub reg: f64,
    /// Side pairs skipped because one membership side was empty.
    pub skipped_sides: usize,
}

impl StepLoss {
    pub fn total(&self) -> f64 {
        self.ce + self.reg
    }
}

fn loss_into(
    params: &MlpParams,
    ds: &Dataset,
    batch: &Batch,
    cfg: &TrainConfig,
    sampler: &GroupSampler,
    ws: &mut Workspace,
    grads: &mut Gradients,
) -> Result<StepLoss> {
    grads.clear();
    let heads = params.heads();
    let mut out = StepLoss::default();
    if !batch.main.is_empty() {
        let inv_b = 1.0 / batch.main.len() as f64;
        let mut cache = ws.cache.take().unwrap_or_else(|| ForwardCache::new(params));
        ws.dlogits.resize(heads, 0.0);
        for &i in &batch.main {
            let ex = &ds.examples()[i];
            forward_into(params, &ex.features, &mut cache)?;
            for k in 0..heads {
                let y = if head_target(ex, heads, k) { 1.0 } else { 0.0 };
                let z = cache.logits[k];
                out.ce += softplus(z) - y * z;
                ws.dlogits[k] = (cache.probs[k] - y) * inv_b;
            }
            backward_logits_into(params, &ex.features, &cache, &ws.dlogits, grads, &mut ws.scratch);
        }
        out.ce *= inv_b;
        ws.cache = Some(cache);
    }
    if cfg.lambda > 0.0 {
        for side in &batch.sides {
            if side.nonmember.is_empty() || side.member.is_empty() {
                out.skipped_sides += 1;
                continue;
            }
            let scale = cfg.side_scale(sampler, side.group);
            out.reg += scale * side_term(params, ds, side, cfg.kernel, scale, ws, Some(grads))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub ce: f64,
    pub reg: f64,
    pub skipped_sides: usize,
    pub grads: Gradients,
}

/// Loss and gradients for one composed batch at fixed parameters.
pub fn batch_loss(params: &MlpParams, ds: &Dataset, batch: &Batch, cfg: &TrainConfig) -> Result<BatchLoss> {
    let sampler = GroupSampler::new(ds.num_groups(), cfg.group_weights.as_deref());
    let mut grads = Gradients::zeros_like(params);
    let step = loss_into(params, ds, batch, cfg, &sampler, &mut Workspace::default(), &mut grads)?;
    Ok(BatchLoss { loss: step.total(), ce: step.ce, reg: step.reg, skipped_sides: step.skipped_sides, grads })
}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: MlpParams,
    pub steps_per_sec: f64,
    /// Mean `(cross-entropy, regularizer)` per epoch.
    pub per_epoch_loss: Vec<(f64, f64)>,
    pub total_steps: usize,
    pub skipped_regularizers: usize,
}

/// Stepwise trainer; owns the parameters and the run's streams.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    ds: &'a Dataset,
    streams: StreamSet<'a>,
    sampler: GroupSampler,
    params: MlpParams,
    grads: Gradients,
    ws: Workspace,
    steps_done: usize,
    recent: Vec<f64>,
    skipped: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(ds: &'a Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate(ds)?;
        let params = cfg.init_params(ds.num_tasks());
        let streams = build_streams(ds, &cfg.stream_spec(), cfg.seed)?;
        Ok(Self {
            cfg: cfg.clone(),
            ds,
            sampler: GroupSampler::new(ds.num_groups(), cfg.group_weights.as_deref()),
            grads: Gradients::zeros_like(&params),
            params,
            streams,
            ws: Workspace::default(),
            steps_done: 0,
            recent: Vec::new(),
            skipped: 0,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.cfg.epochs * self.cfg.steps_per_epoch(self.ds.len())
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn into_params(self) -> MlpParams {
        self.params
    }

    /// Draws the next batch, evaluates the loss and applies one SGD update.
    pub fn step(&mut self) -> Result<StepLoss> {
        let batch = self.streams.next_batch();
        let loss = loss_into(&self.params, self.ds, &batch, &self.cfg, &self.sampler, &mut self.ws, &mut self.grads)?;
        if self.recent.len() == 5 {
            self.recent.remove(0);
        }
        self.recent.push(loss.total());
        if !loss.total().is_finite() {
            return Err(Error::NonFiniteLoss { step: self.steps_done, last: self.recent.clone() });
        }
        sgd_step(&mut self.params, &self.grads, self.cfg.lr)?;
        self.skipped += loss.skipped_sides;
        self.steps_done += 1;
        Ok(loss)
    }

    /// Runs all configured epochs. Throughput is measured over the steps
    /// after the first [`WARMUP_STEPS`] (or over all steps for short runs).
    pub fn run(mut self, clock: &dyn Clock) -> Result<TrainResult> {
        let per_epoch = self.cfg.steps_per_epoch(self.ds.len());
        let total = self.total_steps();
        let skip = if total > WARMUP_STEPS { WARMUP_STEPS } else { 0 };
        let mut start = clock.now();
        let mut per_epoch_loss = Vec::with_capacity(self.cfg.epochs);
        for _ in 0..self.cfg.epochs {
            let (mut ce, mut reg) = (0.0, 0.0);
            for _ in 0..per_epoch {
                if self.steps_done == skip && skip > 0 {
                    start = clock.now();
                }
                let l = self.step()?;
                ce += l.ce;
                reg += l.reg;
            }
            per_epoch_loss.push((ce / per_epoch as f64, reg / per_epoch as f64));
        }
        let elapsed = clock.now() - start;
        let timed = (total - skip) as f64;
        let steps_per_sec = if elapsed > 0.0 { timed / elapsed } else { f64::INFINITY };
        Ok(TrainResult {
            params: self.params,
            steps_per_sec,
            per_epoch_loss,
            total_steps: total,
            skipped_regularizers: self.skipped,
        })
    }
}

pub fn train(ds: &Dataset, cfg: &TrainConfig, clock: &dyn Clock) -> Result<TrainResult> {
    Trainer::new(ds, cfg)?.run(clock)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerCheck {
    pub interleaved_mean: f64,
    pub overconditioned_mean: f64,
    /// Standard error of the interleaved per-batch values.
    pub interleaved_std_err: f64,
    pub n_batches: usize,
}

/// Compares, at frozen parameters, the interleaved penalty with the full
/// overconditioned penalty over the same side draws.
///
/// Each batch draws side lists for every group; the overconditioned value
/// sums all groups, the interleaved value keeps one sampled group and
/// applies the configured rescaling.
pub fn expected_regularizer_check_at(
    params: &MlpParams,
    ds: &Dataset,
    cfg: &TrainConfig,
    n_batches: usize,
) -> Result<RegularizerCheck> {
    if cfg.strategy != Strategy::InterleavedOverconditioned {
        return Err(Error::Config("regularizer check requires the interleaved strategy".into()));
    }
    if n_batches == 0 {
        return Err(Error::Config("n_batches must be >= 1".into()));
    }
    cfg.validate(ds)?;
    let mut spec = cfg.stream_spec();
    spec.strategy = Strategy::Overconditioned;
    let mut streams = build_streams(ds, &spec, cfg.seed)?;
    let sampler = GroupSampler::new(ds.num_groups(), cfg.group_weights.as_deref());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(CHECK_STREAM);
    let mut ws = Workspace::default();

    let mut inter = Vec::with_capacity(n_batches);
    let mut over_sum = 0.0;
    let mut terms = vec![0.0; ds.num_groups()];
    for _ in 0..n_batches {
        let batch = streams.next_batch();
        for (slot, side) in batch.sides.iter().enumerate() {
            terms[slot] = side_term(params, ds, side, cfg.kernel, 0.0, &mut ws, None)?;
        }
        over_sum += cfg.lambda * terms.iter().sum::<f64>();
        let m = sampler.sample(&mut rng);
        inter.push(cfg.side_scale(&sampler, m) * terms[m]);
    }
    let n = n_batches as f64;
    let mean = inter.iter().sum::<f64>() / n;
    let var = if n_batches > 1 {
        inter.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RegularizerCheck {
        interleaved_mean: mean,
        overconditioned_mean: over_sum / n,
        interleaved_std_err: libm::sqrt(var / n),
        n_batches,
    })
}

/// [`expected_regularizer_check_at`] at the run's initial parameters.
pub fn expected_regularizer_check(ds: &Dataset, cfg: &TrainConfig, n_batches: usize) -> Result<RegularizerCheck> {
    let params = cfg.init_params(ds.num_tasks());
    expected_regularizer_check_at(&params, ds, cfg, n_batches)
}

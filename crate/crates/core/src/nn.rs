//! Single-hidden-layer multi-head perceptron over sparse inputs, with an
//! analytic backward pass and plain SGD.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hashing::SparseFeatures;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// Network parameters.
///
/// `w1` is logically `[hidden × dim]` but stored column-major so that the
/// column for one input bucket is contiguous; sparse inputs only touch the
/// columns of their non-zero buckets. `w2` is row-major `[heads × hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    dim: usize,
    hidden: usize,
    heads: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(dim: usize, hidden: usize, heads: usize) -> Self {
        Self {
            dim,
            hidden,
            heads,
            w1: vec![0.0; dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; heads * hidden],
            b2: vec![0.0; heads],
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, heads: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim, hidden, heads);
        let s1 = 1.0 / libm::sqrt(dim as f64);
        let s2 = 1.0 / libm::sqrt(hidden as f64);
        for w in &mut p.w1 {
            *w = rng.random_range(-s1..=s1);
        }
        for w in &mut p.w2 {
            *w = rng.random_range(-s2..=s2);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Weight from input bucket `j` to hidden unit `h`.
    pub fn w1(&self, h: usize, j: usize) -> f64 {
        self.w1[j * self.hidden + h]
    }

    pub fn set_w1(&mut self, h: usize, j: usize, v: f64) {
        self.w1[j * self.hidden + h] = v;
    }

    /// Weight from hidden unit `h` to head `k`.
    pub fn w2(&self, k: usize, h: usize) -> f64 {
        self.w2[k * self.hidden + h]
    }

    pub fn set_w2(&mut self, k: usize, h: usize, v: f64) {
        self.w2[k * self.hidden + h] = v;
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        &mut self.b1
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        &mut self.b2
    }

    /// All parameter blocks in a fixed order: `w1` (column-major), `b1`, `w2`, `b2`.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub hidden_pre: Vec<f64>,
    pub hidden_act: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardCache {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            hidden_pre: vec![0.0; params.hidden],
            hidden_act: vec![0.0; params.hidden],
            logits: vec![0.0; params.heads],
            probs: vec![0.0; params.heads],
        }
    }
}

/// Gradient accumulator with the same layout as [`MlpParams`].
///
/// Tracks which input columns of `w1` received a contribution so clearing and
/// applying the update only visit those columns.
#[derive(Debug, Clone)]
pub struct Gradients {
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    touched: Vec<u32>,
    touched_mask: Vec<bool>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            hidden: params.hidden,
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
            touched: Vec::new(),
            touched_mask: vec![false; params.dim],
        }
    }

    pub fn clear(&mut self) {
        for &j in &self.touched {
            let j = j as usize;
            self.w1[j * self.hidden..(j + 1) * self.hidden].fill(0.0);
            self.touched_mask[j] = false;
        }
        self.touched.clear();
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }

    pub fn w1(&self, h: usize, j: usize) -> f64 {
        self.w1[j * self.hidden + h]
    }

    pub fn w2(&self, k: usize, h: usize) -> f64 {
        self.w2[k * self.hidden + h]
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    /// Same block order as [`MlpParams::blocks`].
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    /// Columns of `w1` with a (possibly zero) contribution, in first-touch order.
    pub fn touched_columns(&self) -> &[u32] {
        &self.touched
    }

    pub fn is_finite(&self) -> bool {
        let cols_ok = self.touched.iter().all(|&j| {
            let j = j as usize;
            self.w1[j * self.hidden..(j + 1) * self.hidden].iter().all(|v| v.is_finite())
        });
        cols_ok
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }
}

fn check_dim(params: &MlpParams, x: &SparseFeatures) -> Result<()> {
    if x.dim() != params.dim {
        return Err(Error::DimensionMismatch { expected: params.dim, actual: x.dim() });
    }
    Ok(())
}

/// Forward pass into a reusable cache.
pub fn forward_into(params: &MlpParams, x: &SparseFeatures, cache: &mut ForwardCache) -> Result<()> {
    check_dim(params, x)?;
    let hdim = params.hidden;
    cache.hidden_pre.copy_from_slice(&params.b1);
    for &(j, c) in x.entries() {
        let col = &params.w1[j as usize * hdim..(j as usize + 1) * hdim];
        for (acc, w) in cache.hidden_pre.iter_mut().zip(col) {
            *acc += w * c;
        }
    }
    for (a, &z) in cache.hidden_act.iter_mut().zip(&cache.hidden_pre) {
        *a = if z > 0.0 { z } else { 0.0 };
    }
    for k in 0..params.heads {
        let row = &params.w2[k * hdim..(k + 1) * hdim];
        let z = params.b2[k] + row.iter().zip(&cache.hidden_act).map(|(w, a)| w * a).sum::<f64>();
        cache.logits[k] = z;
        cache.probs[k] = sigmoid(z);
    }
    Ok(())
}

pub fn forward(params: &MlpParams, x: &SparseFeatures) -> Result<ForwardCache> {
    let mut cache = ForwardCache::new(params);
    forward_into(params, x, &mut cache)?;
    Ok(cache)
}

/// Accumulates the gradient of a loss with upstream `dl_dlogits` into `grads`.
pub fn backward_logits_into(
    params: &MlpParams,
    x: &SparseFeatures,
    cache: &ForwardCache,
    dl_dlogits: &[f64],
    grads: &mut Gradients,
    scratch: &mut Vec<f64>,
) {
    let hdim = params.hidden;
    scratch.clear();
    scratch.resize(hdim, 0.0);
    for (k, &dz) in dl_dlogits.iter().enumerate() {
        if dz == 0.0 {
            continue;
        }
        grads.b2[k] += dz;
        let g_row = &mut grads.w2[k * hdim..(k + 1) * hdim];
        for (g, a) in g_row.iter_mut().zip(&cache.hidden_act) {
            *g += dz * a;
        }
        let w_row = &params.w2[k * hdim..(k + 1) * hdim];
        for (s, w) in scratch.iter_mut().zip(w_row) {
            *s += dz * w;
        }
    }
    // ReLU: subgradient 0 at exactly 0.
    for (s, &z) in scratch.iter_mut().zip(&cache.hidden_pre) {
        if z <= 0.0 {
            *s = 0.0;
        }
    }
    for (g, s) in grads.b1.iter_mut().zip(scratch.iter()) {
        *g += s;
    }
    for &(j, c) in x.entries() {
        let ju = j as usize;
        if !grads.touched_mask[ju] {
            grads.touched_mask[ju] = true;
            grads.touched.push(j);
        }
        let col = &mut grads.w1[ju * hdim..(ju + 1) * hdim];
        for (g, s) in col.iter_mut().zip(scratch.iter()) {
            *g += s * c;
        }
    }
}

/// Gradient of a loss with upstream derivative `dl_dprobs` w.r.t. every parameter.
pub fn backward(
    params: &MlpParams,
    x: &SparseFeatures,
    cache: &ForwardCache,
    dl_dprobs: &[f64],
) -> Gradients {
    let dl_dlogits: Vec<f64> =
        dl_dprobs.iter().zip(&cache.probs).map(|(d, p)| d * p * (1.0 - p)).collect();
    let mut grads = Gradients::zeros_like(params);
    let mut scratch = Vec::new();
    backward_logits_into(params, x, cache, &dl_dlogits, &mut grads, &mut scratch);
    grads
}

/// `params -= lr * grads`. Parameters are left untouched if any gradient is non-finite.
pub fn sgd_step(params: &mut MlpParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(alloc::format!("learning rate must be positive, got {lr}")));
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient("sgd_step"));
    }
    let hdim = params.hidden;
    for &j in &grads.touched {
        let range = j as usize * hdim..(j as usize + 1) * hdim;
        for (p, g) in params.w1[range.clone()].iter_mut().zip(&grads.w1[range]) {
            *p -= lr * g;
        }
    }
    for (p, g) in params.b1.iter_mut().zip(&grads.b1) {
        *p -= lr * g;
    }
    for (p, g) in params.w2.iter_mut().zip(&grads.w2) {
        *p -= lr * g;
    }
    for (p, g) in params.b2.iter_mut().zip(&grads.b2) {
        *p -= lr * g;
    }
    Ok(())
}

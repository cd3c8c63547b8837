//! Squared maximum mean discrepancy between two sets of scalar predictions
//! under a Gaussian kernel.
//!
//! The estimator is the biased V-statistic
//!
//! ```text
//! mmd²(A, B) = mean k(a, a') + mean k(b, b') - 2 mean k(a, b)
//! ```
//!
//! where each mean runs over all ordered pairs, diagonal included. It is
//! non-negative and defined for singleton sets.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: f64,
}

impl KernelConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(alloc::format!("kernel bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { bandwidth })
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { bandwidth: 1.0 }
    }
}

/// `exp(-(a - b)² / (2 bandwidth²))`
#[inline]
pub fn gaussian_kernel(a: f64, b: f64, cfg: KernelConfig) -> f64 {
    let d = a - b;
    libm::exp(-d * d / (2.0 * cfg.bandwidth * cfg.bandwidth))
}

/// Sum of `k(x_i, x_j)` over all ordered pairs, plus (optionally) the
/// per-element partial sums `sum_j dk(x_i, x_j)/dx_i`.
fn within(xs: &[f64], cfg: KernelConfig, mut dgrad: Option<&mut [f64]>) -> f64 {
    let inv_s2 = 1.0 / (cfg.bandwidth * cfg.bandwidth);
    let mut off = 0.0;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            let k = gaussian_kernel(xs[i], xs[j], cfg);
            off += k;
            if let Some(g) = dgrad.as_deref_mut() {
                let dk = -(xs[i] - xs[j]) * inv_s2 * k;
                g[i] += dk;
                g[j] -= dk;
            }
        }
    }
    xs.len() as f64 + 2.0 * off
}

fn canonical_order(a: &[f64], b: &[f64]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn check_non_empty(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("mmd sample set"));
    }
    Ok(())
}

/// Value and gradients in one pass. `grad_a`/`grad_b` are overwritten.
pub fn mmd_sq_with_grad(
    a: &[f64],
    b: &[f64],
    cfg: KernelConfig,
    grad_a: &mut [f64],
    grad_b: &mut [f64],
) -> Result<f64> {
    check_non_empty(a, b)?;
    if canonical_order(a, b) == Ordering::Greater {
        return mmd_sq_with_grad(b, a, cfg, grad_b, grad_a);
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let inv_s2 = 1.0 / (cfg.bandwidth * cfg.bandwidth);
    grad_a.fill(0.0);
    grad_b.fill(0.0);

    let saa = within(a, cfg, Some(grad_a));
    let sbb = within(b, cfg, Some(grad_b));
    // d/dx_i of sum over all ordered pairs counts each unordered pair twice.
    let wa = 2.0 / (n * n);
    let wb = 2.0 / (m * m);
    for g in grad_a.iter_mut() {
        *g *= wa;
    }
    for g in grad_b.iter_mut() {
        *g *= wb;
    }

    let wc = 2.0 / (n * m);
    let mut sab = 0.0;
    for (i, &x) in a.iter().enumerate() {
        let mut row = 0.0;
        for (j, &y) in b.iter().enumerate() {
            let k = gaussian_kernel(x, y, cfg);
            row += k;
            let dk = -(x - y) * inv_s2 * k;
            grad_a[i] -= wc * dk;
            grad_b[j] += wc * dk;
        }
        sab += row;
    }
    Ok(saa / (n * n) + sbb / (m * m) - 2.0 * sab / (n * m))
}

pub fn mmd_sq(a: &[f64], b: &[f64], cfg: KernelConfig) -> Result<f64> {
    check_non_empty(a, b)?;
    if canonical_order(a, b) == Ordering::Greater {
        return mmd_sq(b, a, cfg);
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let saa = within(a, cfg, None);
    let sbb = within(b, cfg, None);
    let sab: f64 = a
        .iter()
        .map(|&x| b.iter().map(|&y| gaussian_kernel(x, y, cfg)).sum::<f64>())
        .sum();
    Ok(saa / (n * n) + sbb / (m * m) - 2.0 * sab / (n * m))
}

/// Partial derivatives of [`mmd_sq`] with respect to each element of `a` and `b`.
pub fn mmd_sq_grad(a: &[f64], b: &[f64], cfg: KernelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    mmd_sq_with_grad(a, b, cfg, &mut ga, &mut gb)?;
    Ok((ga, gb))
}

//! Small-sample summary statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided 97.5% Student-t quantile with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    assert!(df >= 1, "t quantile needs at least one degree of freedom");
    StudentsT::new(0.0, 1.0, df as f64).expect("valid t parameters").inverse_cdf(0.975)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    /// Half-width of the 95% t-interval; `None` below two values.
    pub half_width: Option<f64>,
}

/// Mean and 95% confidence half-width `t_{0.975, n-1} * s / sqrt(n)` using
/// the sample standard deviation. `None` for an empty slice.
pub fn mean_ci95(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        t_quantile_975(n - 1) * var.sqrt() / (n as f64).sqrt()
    });
    Some(MeanCi { n, mean, half_width })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

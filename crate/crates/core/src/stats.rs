//! Small numeric helpers shared by the filters and the experiment runner.

use std::f64::consts::PI;

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * variance).ln() + d * d / variance)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Log of the unbiased sample variance of `exp(log_values)`, computed
/// without leaving the log domain for the common scale factor.
///
/// Returns `None` when the variance is zero or fewer than two values are
/// given.
pub fn log_sample_variance_of_exp(log_values: &[f64]) -> Option<f64> {
    if log_values.len() < 2 {
        return None;
    }
    let shift = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return None;
    }
    let scaled: Vec<f64> = log_values.iter().map(|l| (l - shift).exp()).collect();
    let var = sample_variance(&scaled);
    (var > 0.0 && var.is_finite()).then(|| var.ln() + 2.0 * shift)
}

/// Mean and standard error of `exp(log_values)` relative to `exp(log_ref)`.
///
/// Comparing ratios keeps tiny normalising constants on a sane scale.
pub fn ratio_mean_and_se(log_values: &[f64], log_ref: f64) -> (f64, f64) {
    let ratios: Vec<f64> = log_values.iter().map(|l| (l - log_ref).exp()).collect();
    (mean(&ratios), std_error(&ratios))
}

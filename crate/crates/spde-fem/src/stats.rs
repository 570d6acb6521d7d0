//! Statistical helpers for the Monte Carlo estimators: stable log-sum-exp,
//! self-normalised importance sampling moments with delta-method standard
//! errors, batch-means errors for correlated chains, and a small weighted
//! regression for rate fits.

/// `log(sum(exp(x)))` without overflow. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Mean and standard error of independent draws.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 1);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Sample variance of independent draws with the large-sample standard
/// error `sqrt((m4 - m2^2) / n)` from the central moments.
pub fn variance_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 2);
    let mean = values.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n as f64;
    m4 /= n as f64;
    let var = m2 * n as f64 / (n - 1) as f64;
    (var, ((m4 - m2 * m2).max(0.0) / n as f64).sqrt())
}

/// Lag-1 autocorrelation of a series (0 for constant series).
pub fn lag1_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 =
        series.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// Standard error of the mean of a correlated series, by splitting it into
/// `n_batches` contiguous batches and treating the batch means as
/// independent. Falls back to the independent-sample error when the series is
/// too short to batch.
pub fn batch_means_se(series: &[f64], n_batches: usize) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    if n < 8 {
        return mean_and_se(series).1;
    }
    let b = n_batches.clamp(2, n / 2);
    let batch_len = n / b;
    let used = batch_len * b;
    let means: Vec<f64> = (0..b)
        .map(|k| series[k * batch_len..(k + 1) * batch_len].iter().sum::<f64>() / batch_len as f64)
        .collect();
    let grand = series[..used].iter().sum::<f64>() / used as f64;
    let var_means =
        means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (b - 1) as f64;
    (var_means / b as f64).sqrt()
}

/// Bootstrap standard error of the sample mean (resampling with
/// replacement).
pub fn bootstrap_mean_se(values: &[f64], resamples: usize, rng: &mut impl rand::Rng) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut total = 0.0;
        for _ in 0..n {
            total += values[rng.random_range(0..n)];
        }
        means.push(total / n as f64);
    }
    // The spread of the bootstrap means estimates the standard error.
    let mean = means.iter().sum::<f64>() / resamples as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}

/// Effective sample size of normalised importance weights,
/// `(sum w)^2 / sum w^2`, computed from log-weights.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for lw in log_weights {
        let w = (lw - max).exp();
        sum += w;
        sum_sq += w * w;
    }
    if sum_sq == 0.0 {
        0.0
    } else {
        sum * sum / sum_sq
    }
}

/// Self-normalised importance-sampling estimate of `E[g]` with delta-method
/// standard error: `se^2 = sum w~_i^2 (g_i - est)^2` over normalised weights.
pub fn snis_mean_and_se(log_weights: &[f64], g: &[f64]) -> (f64, f64) {
    assert_eq!(log_weights.len(), g.len());
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let est = weights.iter().zip(g).map(|(w, gi)| w * gi).sum::<f64>() / total;
    let se_sq: f64 = weights
        .iter()
        .zip(g)
        .map(|(w, gi)| {
            let wn = w / total;
            wn * wn * (gi - est) * (gi - est)
        })
        .sum();
    (est, se_sq.sqrt())
}

/// Self-normalised estimate of `Var[x]` with a delta-method standard error
/// that accounts for the estimated mean.
pub fn snis_variance_and_se(log_weights: &[f64], x: &[f64]) -> (f64, f64) {
    assert_eq!(log_weights.len(), x.len());
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let m1 = weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() / total;
    let m2 = weights.iter().zip(x).map(|(w, xi)| w * xi * xi).sum::<f64>() / total;
    let var = m2 - m1 * m1;
    // Gradient of m2 - m1^2 in the direction of each sample's influence.
    let se_sq: f64 = weights
        .iter()
        .zip(x)
        .map(|(w, xi)| {
            let wn = w / total;
            let influence = (xi * xi - m2) - 2.0 * m1 * (xi - m1);
            wn * wn * influence * influence
        })
        .sum();
    (var, se_sq.sqrt())
}

/// Weighted covariance `E[(x - mx)(y - my)]` under normalised importance
/// weights, with delta-method standard error.
pub fn snis_covariance_and_se(log_weights: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(log_weights.len(), x.len());
    assert_eq!(x.len(), y.len());
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mx = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() / total;
    let my = weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / total;
    let mxy = weights.iter().zip(x.iter().zip(y)).map(|(w, (a, b))| w * a * b).sum::<f64>()
        / total;
    let cov = mxy - mx * my;
    let se_sq: f64 = weights
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (a, b))| {
            let wn = w / total;
            let influence = (a * b - mxy) - my * (a - mx) - mx * (b - my);
            wn * wn * influence * influence
        })
        .sum();
    (cov, se_sq.sqrt())
}

/// Least-squares line fit `y = intercept + slope * x` with independent
/// per-point standard errors on y propagated into the slope error.
pub fn line_fit(points: &[(f64, f64)], y_errors: &[f64]) -> LineFit {
    let k = points.len();
    assert!(k >= 2, "need at least two points to fit a line");
    assert_eq!(y_errors.len(), k);
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / k as f64;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let sxx: f64 = points.iter().map(|p| (p.0 - x_mean) * (p.0 - x_mean)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let slope_se_sq: f64 = points
        .iter()
        .zip(y_errors)
        .map(|(p, se)| {
            let c = (p.0 - x_mean) / sxx;
            c * c * se * se
        })
        .sum();
    LineFit { slope, intercept, slope_se: slope_se_sq.sqrt() }
}

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

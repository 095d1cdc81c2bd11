//! Small chain diagnostics used by tests and reported summaries.

/// Monte Carlo standard error of the mean of a correlated sequence, by the
/// method of batch means with `floor(sqrt(len))` batches. Falls back to the
/// naive iid standard error for very short sequences.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 9 {
        if n < 2 {
            return f64::INFINITY;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        return (var / n as f64).sqrt();
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch_len = n / n_batches;
    let used = n_batches * batch_len;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * batch_len..(b + 1) * batch_len].iter().sum::<f64>() / batch_len as f64)
        .collect();
    let grand = xs[..used].iter().sum::<f64>() / used as f64;
    let var_batch = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (n_batches as f64 - 1.0);
    (var_batch / n_batches as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against the given
/// cumulative distribution function. Sorts a copy of the input.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = (f - i as f64 / n).abs();
        let hi = ((i as f64 + 1.0) / n - f).abs();
        d = d.max(lo).max(hi);
    }
    d
}

/// Asymptotic p-value for the one-sample KS statistic, with the standard
/// small-sample correction to the effective sample size.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    if n == 0 || d <= 0.0 {
        return 1.0;
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 0.2 {
        // survival exceeds 1 - 1e-9 here and the alternating series needs
        // too many terms to cancel
        return 1.0;
    }
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

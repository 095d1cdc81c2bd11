//! Serial reference implementations of the truncated-normal MDS likelihood,
//! its gradient, and the truncation penalty.
//!
//! Observed dissimilarities y_ij are modeled as N(δ_ij, σ²) truncated to
//! y > 0, where δ_ij is the Euclidean distance between latent rows i and j.
//! Per observed pair the log density is
//!
//! ```text
//! -½ log(2πσ²) - (y-δ)²/(2σ²) - log Φ(δ/σ)
//! ```
//!
//! These functions are the single-threaded ground truth: every parallel
//! engine is tested against them, and the serial engine backend delegates
//! here so that it is bit-identical by construction. Summation order is
//! fixed (i-major over the lower triangle) so repeated calls are exactly
//! reproducible.

use super::normal::{inv_mills, log_phi, LN_2PI};
use super::types::{DissimilarityData, GradientMatrix, LatentConfiguration, MdsParams, PairMask};
use crate::error::{Error, Result};

/// Per-pair residual term `r = (y-δ)²/(2σ²) + log Φ(δ/σ)`.
///
/// The full per-pair log density is `-½log(2πσ²) - r`; keeping the constant
/// out lets callers add it once per observed pair.
pub fn pair_term(y: f64, delta: f64, sigma2: f64) -> Result<f64> {
    if !y.is_finite() || !delta.is_finite() || !sigma2.is_finite() {
        return Err(Error::invalid_argument(format!(
            "pair_term requires finite inputs, got y={y}, delta={delta}, sigma2={sigma2}"
        )));
    }
    if sigma2 <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if delta < 0.0 {
        return Err(Error::invalid_argument(format!(
            "distance must be non-negative, got {delta}"
        )));
    }
    Ok(pair_term_raw(y, delta, sigma2.sqrt(), sigma2))
}

#[inline]
pub(crate) fn pair_term_raw(y: f64, delta: f64, sigma: f64, sigma2: f64) -> f64 {
    let resid = y - delta;
    resid * resid / (2.0 * sigma2) + log_phi(delta / sigma)
}

/// Per observed pair, the likelihood carries `-½log(2πσ²)`.
#[inline]
pub(crate) fn per_pair_constant(sigma2: f64) -> f64 {
    -0.5 * (LN_2PI + sigma2.ln())
}

fn check_dims(data: &DissimilarityData, x: &LatentConfiguration) -> Result<()> {
    if data.n() != x.n() {
        return Err(Error::invalid_argument(format!(
            "data has {} items but configuration has {} rows",
            data.n(),
            x.n()
        )));
    }
    Ok(())
}

/// Full log-likelihood over all observed pairs, single-threaded.
pub fn log_likelihood_serial(
    data: &DissimilarityData,
    x: &LatentConfiguration,
    params: &MdsParams,
) -> Result<f64> {
    check_dims(data, x)?;
    let n = data.n();
    let sigma2 = params.sigma2();
    let sigma = params.sigma();
    let mask = data.mask();
    let mut sum = 0.0;
    let mut observed = 0usize;
    for i in 0..n {
        for j in 0..i {
            if mask.is_observed(i, j) {
                sum += pair_term_raw(data.value(i, j), x.distance(i, j), sigma, sigma2);
                observed += 1;
            }
        }
    }
    Ok(observed as f64 * per_pair_constant(sigma2) - sum)
}

/// The truncation penalty alone: `Σ log Φ(δ_ij/σ)` over masked pairs.
///
/// It enters the likelihood negated, so disabling truncation gives
/// `log_likelihood + truncation_sum`. Always ≤ 0 since each Φ ≤ 1.
pub fn truncation_sum_serial(
    x: &LatentConfiguration,
    params: &MdsParams,
    mask: &PairMask,
) -> Result<f64> {
    if mask.n() != x.n() {
        return Err(Error::invalid_argument(format!(
            "mask has {} items but configuration has {} rows",
            mask.n(),
            x.n()
        )));
    }
    let n = x.n();
    let sigma = params.sigma();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..i {
            if mask.is_observed(i, j) {
                sum += log_phi(x.distance(i, j) / sigma);
            }
        }
    }
    Ok(sum)
}

/// Log-likelihood with the truncation penalty ablated: plain normal
/// residuals plus the normalizing constant.
pub fn log_likelihood_untruncated_serial(
    data: &DissimilarityData,
    x: &LatentConfiguration,
    params: &MdsParams,
) -> Result<f64> {
    check_dims(data, x)?;
    let n = data.n();
    let sigma2 = params.sigma2();
    let mask = data.mask();
    let mut sum = 0.0;
    let mut observed = 0usize;
    for i in 0..n {
        for j in 0..i {
            if mask.is_observed(i, j) {
                let resid = data.value(i, j) - x.distance(i, j);
                sum += resid * resid / (2.0 * sigma2);
                observed += 1;
            }
        }
    }
    Ok(observed as f64 * per_pair_constant(sigma2) - sum)
}

/// Gradient of the log-likelihood with respect to every latent coordinate.
///
/// Row i receives `-Σ_j [(δ-y)/σ² + m(δ/σ)/σ]·(x_i-x_j)/δ` over observed
/// partners j, where m is the inverse Mills ratio. Each unordered pair is
/// visited once; the contribution to row j is the exact negation of the
/// contribution to row i. Pairs at δ = 0 have no defined direction: they
/// contribute nothing and are tallied in the result's coincident-pair
/// counter.
pub fn log_likelihood_gradient_serial(
    data: &DissimilarityData,
    x: &LatentConfiguration,
    params: &MdsParams,
) -> Result<GradientMatrix> {
    check_dims(data, x)?;
    let n = data.n();
    let d = x.d();
    let sigma2 = params.sigma2();
    let sigma = params.sigma();
    let mask = data.mask();
    let mut grad = GradientMatrix::zeros(n, d);
    let mut coincident = 0usize;
    {
        let g = grad.values_mut();
        for i in 0..n {
            for j in 0..i {
                if !mask.is_observed(i, j) {
                    continue;
                }
                let delta = x.distance(i, j);
                if delta == 0.0 {
                    coincident += 1;
                    continue;
                }
                let y = data.value(i, j);
                let coeff =
                    ((delta - y) / sigma2 + inv_mills(delta / sigma) / sigma) / delta;
                let xi = x.row(i);
                let xj = x.row(j);
                for k in 0..d {
                    let step = coeff * (xi[k] - xj[k]);
                    g[i * d + k] -= step;
                    g[j * d + k] += step;
                }
            }
        }
    }
    grad.record_coincident_pairs(coincident);
    Ok(grad)
}

//! Parameter updates other than the latent configuration: a conjugate
//! Wishart draw for the diffusion precision and a log-scale random-walk
//! Metropolis step for the residual variance.
//!
//! Convention: the precision prior Wishart(d0, T0) treats T0 as a rate
//! matrix, so its density carries exp(-tr(T0 P)/2) and the prior mean of the
//! precision is d0 * T0^-1. The full conditional given centered data is then
//! Wishart(d0 + N, rate T0 + S) with S the V-whitened scatter of X.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::error::{Error, Result};
use crate::model::LatentConfiguration;
use crate::tree::covariance::TreeCovariance;
use crate::tree::prior::{FactorCache, PriorHyperparams};

/// Samples a Wishart matrix with `df` degrees of freedom and the given
/// scale (not rate) matrix, by the Bartlett decomposition.
pub fn wishart_draw<R: Rng>(rng: &mut R, df: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    if d == 0 || scale.ncols() != d {
        return Err(Error::invalid_argument("scale matrix must be square"));
    }
    if !(df.is_finite() && df > d as f64 - 1.0) {
        return Err(Error::invalid_argument(format!(
            "degrees of freedom must exceed {}, got {df}",
            d as f64 - 1.0
        )));
    }
    let chol = scale
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("scale matrix is not positive definite"))?;
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::numeric(format!("chi-squared parameter invalid: {e}")))?;
        a[(i, i)] = rng.sample::<f64, _>(chi).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = chol.l() * a;
    Ok(&la * la.transpose())
}

/// V-whitened scatter of the centered configuration: `(X-mu0)^T V^-1 (X-mu0)`.
pub fn whitened_scatter(
    x: &LatentConfiguration,
    mu0: &DVector<f64>,
    cov: &TreeCovariance,
    cache: &mut FactorCache,
) -> Result<DMatrix<f64>> {
    let (n, d) = (x.n(), x.d());
    if cov.n() != n {
        return Err(Error::invalid_argument(
            "covariance and configuration disagree on the item count",
        ));
    }
    if mu0.len() != d {
        return Err(Error::invalid_argument("prior mean dimension mismatch"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(d, d));
    }
    let mut z = DMatrix::zeros(n, d);
    for i in 0..n {
        for k in 0..d {
            z[(i, k)] = x.row(i)[k] - mu0[k];
        }
    }
    let vinv_z = cache.factor(cov)?.solve(&z);
    Ok(z.transpose() * vinv_z)
}

/// Draws a new diffusion covariance from its full conditional: the
/// precision is Wishart with degrees `d0 + N` and rate `T0 + scatter`, and
/// the returned matrix is that precision inverted.
pub fn gibbs_sigma_mat<R: Rng>(
    scatter: &DMatrix<f64>,
    n: usize,
    hyper: &PriorHyperparams,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = hyper.t0_mat.nrows();
    if scatter.nrows() != d || scatter.ncols() != d {
        return Err(Error::invalid_argument("scatter matrix dimension mismatch"));
    }
    let rate = &hyper.t0_mat + scatter;
    let scale = rate
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("posterior rate matrix is not positive definite"))?
        .inverse();
    let precision = wishart_draw(rng, hyper.d0 + n as f64, &scale)?;
    let sigma = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("sampled precision is not positive definite"))?
        .inverse();
    // Symmetrize away the inversion's rounding skew.
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Random-walk Metropolis on the log residual variance, targeting
/// `log_lik(sigma2)` plus the inverse-gamma prior implied by a Gamma(s0, r0)
/// prior on the precision, with the log-scale Jacobian.
///
/// Returns the (possibly unchanged) variance and the acceptance flag.
pub fn mh_sigma2<R: Rng>(
    sigma2: f64,
    mut log_lik: impl FnMut(f64) -> Result<f64>,
    hyper: &PriorHyperparams,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if !(proposal_sd.is_finite() && proposal_sd >= 0.0) {
        return Err(Error::invalid_argument("proposal scale must be non-negative"));
    }
    let log_target = |s2: f64, ll: f64| -> f64 {
        // inverse-gamma density plus the d(log s2) Jacobian
        ll - (hyper.s0 + 1.0) * s2.ln() - hyper.r0 / s2 + s2.ln()
    };
    let current_ll = log_lik(sigma2)?;
    let z: f64 = rng.sample(StandardNormal);
    let proposed = (sigma2.ln() + proposal_sd * z).exp();
    if !(proposed.is_finite() && proposed > 0.0) {
        return Ok((sigma2, false));
    }
    let proposed_ll = log_lik(proposed)?;
    let log_ratio = log_target(proposed, proposed_ll) - log_target(sigma2, current_ll);
    let u: f64 = rng.random_range(0.0..1.0);
    if u.ln() < log_ratio {
        Ok((proposed, true))
    } else {
        Ok((sigma2, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::diagnostics::{batch_means_se, ks_p_value, ks_statistic};
    use crate::tree::covariance::{build_tree_covariance, Forest};
    use crate::tree::newick::parse_trees;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use statrs::distribution::{ContinuousCDF, Gamma};

    #[test]
    fn wishart_prior_mean_is_df_times_scale() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let scale = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.8]);
        let df = 5.0;
        let reps = 20_000;
        let mut mean = DMatrix::zeros(2, 2);
        let mut sq00 = 0.0;
        for _ in 0..reps {
            let w = wishart_draw(&mut rng, df, &scale).unwrap();
            sq00 += w[(0, 0)] * w[(0, 0)];
            mean += w;
        }
        mean /= reps as f64;
        let var00 = sq00 / reps as f64 - mean[(0, 0)] * mean[(0, 0)];
        let se00 = (var00 / reps as f64).sqrt();
        for i in 0..2 {
            for j in 0..2 {
                let want = df * scale[(i, j)];
                // same-order SE bound for every entry
                assert!(
                    (mean[(i, j)] - want).abs() <= 4.0 * se00,
                    "entry ({i},{j}): {} vs {want}",
                    mean[(i, j)]
                );
            }
        }
    }

    #[test]
    fn one_dimensional_wishart_is_gamma_distributed() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let df = 7.0;
        let scale = DMatrix::from_element(1, 1, 0.4);
        let draws: Vec<f64> = (0..4_000)
            .map(|_| wishart_draw(&mut rng, df, &scale).unwrap()[(0, 0)])
            .collect();
        // Wishart_1(df, s) = Gamma(shape df/2, rate 1/(2s))
        let gamma = Gamma::new(df / 2.0, 1.0 / (2.0 * 0.4)).unwrap();
        let d = ks_statistic(&draws, |x| gamma.cdf(x));
        let p = ks_p_value(d, draws.len());
        assert!(p > 0.01, "KS p-value {p} (d = {d})");
    }

    #[test]
    fn no_data_draw_recovers_the_prior_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let hyper = PriorHyperparams::new(
            4.0,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            1.0,
            1.0,
        )
        .unwrap();
        let scatter = DMatrix::zeros(2, 2);
        let reps = 20_000;
        let mut mean = DMatrix::zeros(2, 2);
        for _ in 0..reps {
            let sigma = gibbs_sigma_mat(&scatter, 0, &hyper, &mut rng).unwrap();
            let precision = sigma.cholesky().unwrap().inverse();
            mean += precision;
        }
        mean /= reps as f64;
        let want = hyper.t0_mat.clone().cholesky().unwrap().inverse() * hyper.d0;
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (mean[(i, j)] - want[(i, j)]).abs() <= 0.05 * want[(i, i)].abs().max(1.0),
                    "entry ({i},{j}): {} vs {}",
                    mean[(i, j)],
                    want[(i, j)]
                );
            }
        }
    }

    #[test]
    fn posterior_mean_matches_conjugacy_algebra() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        // identity V over 3 items via three single-tip trees
        let trees = parse_trees("a;b;c;").unwrap();
        let f = Forest::over_own_tips(trees).unwrap();
        let cov = build_tree_covariance(&f, 1.0, 1.0).unwrap();
        let mut cache = FactorCache::new();
        let x = LatentConfiguration::new(3, 2, vec![1.0, 0.0, 0.5, -0.5, -1.0, 2.0]).unwrap();
        let mu0 = DVector::zeros(2);
        let scatter = whitened_scatter(&x, &mu0, &cov, &mut cache).unwrap();
        // V = I so the scatter is X^T X
        let mut want_scatter = DMatrix::zeros(2, 2);
        for i in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    want_scatter[(a, b)] += x.row(i)[a] * x.row(i)[b];
                }
            }
        }
        assert!((scatter.clone() - want_scatter).norm() < 1e-12);
        let hyper = PriorHyperparams::new(3.0, DMatrix::identity(2, 2), 1.0, 1.0).unwrap();
        let reps = 20_000;
        let mut mean_prec = DMatrix::zeros(2, 2);
        for _ in 0..reps {
            let sigma = gibbs_sigma_mat(&scatter, 3, &hyper, &mut rng).unwrap();
            mean_prec += sigma.cholesky().unwrap().inverse();
        }
        mean_prec /= reps as f64;
        let want = (&hyper.t0_mat + &scatter).cholesky().unwrap().inverse() * (hyper.d0 + 3.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (mean_prec[(i, j)] - want[(i, j)]).abs() <= 0.05 * want[(i, i)].max(1.0),
                    "entry ({i},{j}): {} vs {}",
                    mean_prec[(i, j)],
                    want[(i, j)]
                );
            }
        }
    }

    #[test]
    fn zero_proposal_scale_always_accepts_in_place() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let hyper = PriorHyperparams::new(3.0, DMatrix::identity(2, 2), 2.0, 1.5).unwrap();
        let (next, accepted) = mh_sigma2(1.7, |_| Ok(0.0), &hyper, 0.0, &mut rng).unwrap();
        assert_eq!(next, 1.7);
        assert!(accepted);
    }

    #[test]
    fn no_likelihood_chain_is_stationary_at_the_prior() {
        // With log_lik = 0 the target is the inverse-gamma prior; the
        // precision 1/sigma2 then follows Gamma(s0, rate r0) whose mean is
        // s0 / r0.
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let (s0, r0) = (3.0, 2.0);
        let hyper = PriorHyperparams::new(3.0, DMatrix::identity(2, 2), s0, r0).unwrap();
        let mut s2 = 1.0;
        let mut precisions = Vec::new();
        let iters = 40_000;
        for _ in 0..iters {
            let (next, _) = mh_sigma2(s2, |_| Ok(0.0), &hyper, 0.8, &mut rng).unwrap();
            s2 = next;
            precisions.push(1.0 / s2);
        }
        let mean = precisions.iter().sum::<f64>() / precisions.len() as f64;
        let se = batch_means_se(&precisions);
        assert!(
            (mean - s0 / r0).abs() <= 3.0 * se,
            "precision mean {mean} vs {} (3se {})",
            s0 / r0,
            3.0 * se
        );
        // Distributional check on effectively independent draws.
        let thinned: Vec<f64> = precisions.iter().copied().step_by(40).collect();
        let gamma = Gamma::new(s0, r0).unwrap();
        let d = ks_statistic(&thinned, |x| gamma.cdf(x));
        let p = ks_p_value(d, thinned.len());
        assert!(p > 0.001, "KS p-value {p} (d = {d})");
    }

    #[test]
    fn likelihood_shifts_the_sigma2_posterior() {
        // Gaussian pseudo-likelihood concentrated at sigma2 = 4 must pull
        // the chain above the prior mean of 1/3... i.e. the variance mean
        // moves toward 4.
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let hyper = PriorHyperparams::new(3.0, DMatrix::identity(2, 2), 3.0, 2.0).unwrap();
        let mut s2 = 1.0;
        let mut values = Vec::new();
        for _ in 0..30_000 {
            let (next, _) =
                mh_sigma2(s2, |v| Ok(-80.0 * (v.ln() - 4.0f64.ln()).powi(2)), &hyper, 0.4, &mut rng)
                    .unwrap();
            s2 = next;
            values.push(s2);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((3.0..5.0).contains(&mean), "posterior mean {mean} should sit near 4");
    }
}

//! Hamiltonian transitions for the latent configuration.
//!
//! The integrator is the standard leapfrog: half momentum kick, full
//! position drift, repeated, closing with a half kick. Proposals are
//! accepted on the energy change alone; a non-finite value anywhere along
//! the trajectory marks it divergent and the proposal is rejected outright.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{GradientMatrix, LatentConfiguration};

/// Kinetic-energy metric. A diagonal mass holds one positive entry per
/// latent dimension, shared by all items.
#[derive(Clone, Debug)]
pub enum Mass {
    Identity,
    Diagonal(Vec<f64>),
}

impl Mass {
    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Mass::Identity => Ok(()),
            Mass::Diagonal(m) => {
                if m.len() != d {
                    return Err(Error::invalid_argument(format!(
                        "diagonal mass has {} entries but the latent dimension is {d}",
                        m.len()
                    )));
                }
                if m.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(Error::invalid_argument("mass entries must be positive"));
                }
                Ok(())
            }
        }
    }

    #[inline]
    fn entry(&self, k: usize) -> f64 {
        match self {
            Mass::Identity => 1.0,
            Mass::Diagonal(m) => m[k],
        }
    }
}

#[derive(Clone, Debug)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub mass: Mass,
}

impl HmcConfig {
    pub fn new(step_size: f64, leapfrog_steps: usize, mass: Mass) -> Result<Self> {
        let cfg = HmcConfig { step_size, leapfrog_steps, mass };
        cfg.validate_for(usize::MAX)?;
        Ok(cfg)
    }

    /// Validates against a known latent dimension (`usize::MAX` skips the
    /// dimension check for configs built before the data is loaded).
    pub fn validate_for(&self, d: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid_argument("step size must be positive"));
        }
        if self.leapfrog_steps < 1 {
            return Err(Error::invalid_argument("leapfrog step count must be at least 1"));
        }
        if d != usize::MAX {
            self.mass.validate(d)?;
        } else if let Mass::Diagonal(m) = &self.mass {
            if m.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(Error::invalid_argument("mass entries must be positive"));
            }
        }
        Ok(())
    }
}

/// The differentiable density HMC moves through. Implementations may cache
/// factorizations internally, hence `&mut self`.
pub trait XTarget {
    fn log_density(&mut self, x: &LatentConfiguration) -> Result<f64>;
    fn gradient(&mut self, x: &LatentConfiguration) -> Result<GradientMatrix>;
}

pub struct Trajectory {
    pub x: LatentConfiguration,
    pub momentum: Vec<f64>,
    pub delta_h: f64,
    pub divergent: bool,
}

fn kinetic(p: &[f64], mass: &Mass, d: usize) -> f64 {
    let mut sum = 0.0;
    for (idx, &v) in p.iter().enumerate() {
        sum += v * v / mass.entry(idx % d);
    }
    0.5 * sum
}

/// Integrates `leapfrog_steps` steps from `(x0, p0)` and reports the energy
/// change. A non-finite density, gradient, or coordinate marks the result
/// divergent; callers must reject such proposals.
pub fn leapfrog_trajectory(
    x0: &LatentConfiguration,
    p0: &[f64],
    target: &mut dyn XTarget,
    hmc: &HmcConfig,
) -> Result<Trajectory> {
    let (n, d) = (x0.n(), x0.d());
    hmc.validate_for(d)?;
    if p0.len() != n * d {
        return Err(Error::invalid_argument("momentum length must match the configuration"));
    }
    let eps = hmc.step_size;
    let mut x = x0.clone();
    let mut p = p0.to_vec();
    let logp0 = target.log_density(&x)?;
    let h0 = -logp0 + kinetic(&p, &hmc.mass, d);

    let divergent = |x: &LatentConfiguration, p: &[f64]| {
        Trajectory {
            x: x.clone(),
            momentum: p.to_vec(),
            delta_h: f64::INFINITY,
            divergent: true,
        }
    };
    if !h0.is_finite() {
        return Ok(divergent(&x, &p));
    }

    let mut grad = target.gradient(&x)?;
    for step in 0..hmc.leapfrog_steps {
        for (pv, gv) in p.iter_mut().zip(grad.values()) {
            *pv += 0.5 * eps * gv;
        }
        {
            let coords = x.coords_mut();
            for (idx, c) in coords.iter_mut().enumerate() {
                *c += eps * p[idx] / hmc.mass.entry(idx % d);
            }
        }
        if x.coords().iter().any(|v| !v.is_finite()) {
            return Ok(divergent(&x, &p));
        }
        grad = target.gradient(&x)?;
        if grad.values().iter().any(|v| !v.is_finite()) {
            return Ok(divergent(&x, &p));
        }
        for (pv, gv) in p.iter_mut().zip(grad.values()) {
            *pv += 0.5 * eps * gv;
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Ok(divergent(&x, &p));
        }
        let _ = step;
    }
    let logp1 = target.log_density(&x)?;
    let h1 = -logp1 + kinetic(&p, &hmc.mass, d);
    if !h1.is_finite() {
        return Ok(divergent(&x, &p));
    }
    Ok(Trajectory { x, momentum: p, delta_h: h1 - h0, divergent: false })
}

pub struct HmcOutcome {
    pub x: LatentConfiguration,
    pub accepted: bool,
    pub divergent: bool,
    pub delta_h: f64,
}

/// One Metropolis-adjusted Hamiltonian move: fresh momentum, a leapfrog
/// trajectory, and acceptance with probability `min(1, exp(-delta_h))`.
pub fn hmc_transition<R: Rng>(
    x: &LatentConfiguration,
    target: &mut dyn XTarget,
    hmc: &HmcConfig,
    rng: &mut R,
) -> Result<HmcOutcome> {
    let (n, d) = (x.n(), x.d());
    let mut p = vec![0.0; n * d];
    for (idx, v) in p.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * hmc.mass.entry(idx % d).sqrt();
    }
    let traj = leapfrog_trajectory(x, &p, target, hmc)?;
    let u: f64 = rng.random_range(0.0..1.0);
    let accepted = !traj.divergent && u.ln() < -traj.delta_h;
    Ok(HmcOutcome {
        x: if accepted { traj.x } else { x.clone() },
        accepted,
        divergent: traj.divergent,
        delta_h: traj.delta_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::diagnostics::batch_means_se;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Independent standard normals over every coordinate.
    struct StdNormalTarget;

    impl XTarget for StdNormalTarget {
        fn log_density(&mut self, x: &LatentConfiguration) -> Result<f64> {
            Ok(-0.5 * x.coords().iter().map(|v| v * v).sum::<f64>())
        }

        fn gradient(&mut self, x: &LatentConfiguration) -> Result<GradientMatrix> {
            let mut g = GradientMatrix::zeros(x.n(), x.d());
            for (gv, xv) in g.values_mut().iter_mut().zip(x.coords()) {
                *gv = -xv;
            }
            Ok(g)
        }
    }

    /// Standard normal that turns to NaN outside a box, to exercise the
    /// divergence path.
    struct CliffTarget;

    impl XTarget for CliffTarget {
        fn log_density(&mut self, x: &LatentConfiguration) -> Result<f64> {
            if x.coords().iter().any(|v| v.abs() > 3.0) {
                return Ok(f64::NAN);
            }
            Ok(-0.5 * x.coords().iter().map(|v| v * v).sum::<f64>())
        }

        fn gradient(&mut self, x: &LatentConfiguration) -> Result<GradientMatrix> {
            let mut g = GradientMatrix::zeros(x.n(), x.d());
            for (gv, xv) in g.values_mut().iter_mut().zip(x.coords()) {
                *gv = if xv.abs() > 3.0 { f64::NAN } else { -xv };
            }
            Ok(g)
        }
    }

    fn random_point(rng: &mut ChaCha20Rng, n: usize, d: usize) -> (LatentConfiguration, Vec<f64>) {
        let x = LatentConfiguration::new(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect(),
        )
        .unwrap();
        let p = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, p)
    }

    #[test]
    fn leapfrog_is_time_reversible() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let hmc = HmcConfig::new(0.1, 25, Mass::Identity).unwrap();
        for _ in 0..10 {
            let (x0, p0) = random_point(&mut rng, 4, 2);
            let fwd = leapfrog_trajectory(&x0, &p0, &mut StdNormalTarget, &hmc).unwrap();
            assert!(!fwd.divergent);
            let p_rev: Vec<f64> = fwd.momentum.iter().map(|v| -v).collect();
            let back = leapfrog_trajectory(&fwd.x, &p_rev, &mut StdNormalTarget, &hmc).unwrap();
            for (a, b) in back.x.coords().iter().zip(x0.coords()) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
            for (a, b) in back.momentum.iter().zip(&p0) {
                assert!((a + b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn energy_error_scales_quadratically_in_step_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut sum_coarse = 0.0;
        let mut sum_fine = 0.0;
        for _ in 0..64 {
            let (x0, p0) = random_point(&mut rng, 3, 2);
            let coarse = HmcConfig::new(0.2, 10, Mass::Identity).unwrap();
            let fine = HmcConfig::new(0.1, 20, Mass::Identity).unwrap();
            let a = leapfrog_trajectory(&x0, &p0, &mut StdNormalTarget, &coarse).unwrap();
            let b = leapfrog_trajectory(&x0, &p0, &mut StdNormalTarget, &fine).unwrap();
            sum_coarse += a.delta_h.abs();
            sum_fine += b.delta_h.abs();
        }
        let ratio = sum_coarse / sum_fine;
        assert!((3.5..=4.5).contains(&ratio), "|dH| ratio {ratio} outside [3.5, 4.5]");
    }

    #[test]
    fn vanishing_step_size_drives_delta_h_to_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (x0, p0) = random_point(&mut rng, 3, 2);
        let hmc = HmcConfig::new(1e-4, 5, Mass::Identity).unwrap();
        let traj = leapfrog_trajectory(&x0, &p0, &mut StdNormalTarget, &hmc).unwrap();
        assert!(traj.delta_h.abs() < 1e-6);
    }

    #[test]
    fn divergent_trajectories_are_flagged_and_rejected() {
        let x0 = LatentConfiguration::new(1, 1, vec![2.9]).unwrap();
        let p0 = vec![50.0];
        let hmc = HmcConfig::new(0.5, 4, Mass::Identity).unwrap();
        let traj = leapfrog_trajectory(&x0, &p0, &mut CliffTarget, &hmc).unwrap();
        assert!(traj.divergent);
        assert_eq!(traj.delta_h, f64::INFINITY);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let out = hmc_transition(&x0, &mut CliffTarget, &hmc, &mut rng).unwrap();
        // The momentum draw is broad enough that some trajectories leave the
        // box; rejected ones must return the starting point bit-for-bit.
        if !out.accepted {
            assert_eq!(out.x.coords()[0].to_bits(), x0.coords()[0].to_bits());
        }
    }

    #[test]
    fn chain_matches_standard_normal_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let hmc = HmcConfig::new(0.6, 8, Mass::Identity).unwrap();
        let mut x = LatentConfiguration::new(1, 2, vec![0.5, -0.5]).unwrap();
        let mut first = Vec::new();
        let mut accepts = 0usize;
        let total = 20_000;
        for _ in 0..total {
            let out = hmc_transition(&x, &mut StdNormalTarget, &hmc, &mut rng).unwrap();
            if out.accepted {
                accepts += 1;
            }
            x = out.x;
            first.push(x.coords()[0]);
        }
        let accept_rate = accepts as f64 / total as f64;
        assert!(accept_rate > 0.5, "acceptance collapsed: {accept_rate}");
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        let var = first.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / first.len() as f64;
        let se_mean = batch_means_se(&first);
        assert!(mean.abs() <= 3.0 * se_mean, "mean {mean} (3se {})", 3.0 * se_mean);
        let sq: Vec<f64> = first.iter().map(|v| v * v).collect();
        let se_sq = batch_means_se(&sq);
        assert!((var - 1.0).abs() <= 3.0 * se_sq, "variance {var} (3se {})", 3.0 * se_sq);
    }

    #[test]
    fn diagonal_mass_preserves_the_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let hmc = HmcConfig::new(0.4, 10, Mass::Diagonal(vec![0.5, 2.0])).unwrap();
        let mut x = LatentConfiguration::new(1, 2, vec![0.0, 0.0]).unwrap();
        let mut second = Vec::new();
        for _ in 0..20_000 {
            let out = hmc_transition(&x, &mut StdNormalTarget, &hmc, &mut rng).unwrap();
            x = out.x;
            second.push(x.coords()[1]);
        }
        let mean = second.iter().sum::<f64>() / second.len() as f64;
        let var =
            second.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / second.len() as f64;
        let se = batch_means_se(&second);
        assert!(mean.abs() <= 3.0 * se);
        let sq: Vec<f64> = second.iter().map(|v| v * v).collect();
        assert!((var - 1.0).abs() <= 3.0 * batch_means_se(&sq));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(HmcConfig::new(0.0, 5, Mass::Identity).is_err());
        assert!(HmcConfig::new(0.1, 0, Mass::Identity).is_err());
        assert!(HmcConfig::new(0.1, 5, Mass::Diagonal(vec![1.0, -1.0])).is_err());
        let cfg = HmcConfig::new(0.1, 5, Mass::Diagonal(vec![1.0, 1.0])).unwrap();
        assert!(cfg.validate_for(3).is_err());
    }
}

//! The random-scan driver tying the blocks together: a Hamiltonian move for
//! the latent configuration, a Metropolis move for the residual variance, a
//! conjugate draw for the diffusion covariance, and uniform resampling of
//! the tree-mixture component. The whole chain is a deterministic function
//! of (seed, config, data).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{DissimilarityData, GradientMatrix, LatentConfiguration, MdsParams};
use crate::sampler::gibbs::{gibbs_sigma_mat, mh_sigma2, whitened_scatter};
use crate::sampler::hmc::{hmc_transition, HmcConfig, XTarget};
use crate::tree::covariance::{build_tree_covariance, TreeCovariance};
use crate::tree::prior::{
    matrix_normal_logpdf_pruning, prior_gradient, DiffusionParams, FactorCache, PriorHyperparams,
};
use crate::tree::simulate::simulate_brownian_tips;
use crate::tree::Forest;

/// Relative frequencies of the four update blocks.
#[derive(Clone, Copy, Debug)]
pub struct ScanWeights {
    pub x: f64,
    pub sigma2: f64,
    pub sigma_mat: f64,
    pub tree: f64,
}

impl Default for ScanWeights {
    fn default() -> Self {
        ScanWeights { x: 0.8, sigma2: 0.1, sigma_mat: 0.05, tree: 0.05 }
    }
}

impl ScanWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.x, self.sigma2, self.sigma_mat, self.tree];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid_argument("scan weights must be finite and non-negative"));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid_argument("at least one scan weight must be positive"));
        }
        Ok(())
    }

    fn total(&self) -> f64 {
        self.x + self.sigma2 + self.sigma_mat + self.tree
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    X,
    Sigma2,
    SigmaMat,
    Tree,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::X => "x",
            BlockKind::Sigma2 => "sigma2",
            BlockKind::SigmaMat => "sigma_mat",
            BlockKind::Tree => "tree",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub hmc: HmcConfig,
    pub weights: ScanWeights,
    pub sigma2_proposal_sd: f64,
    /// Step-size adaptation iterations run before the recorded chain; zero
    /// keeps the configured step size.
    pub warmup_iterations: usize,
    pub target_accept: f64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid_argument("iteration count must be at least 1"));
        }
        if self.thin < 1 {
            return Err(Error::invalid_argument("thinning interval must be at least 1"));
        }
        if !(self.sigma2_proposal_sd.is_finite() && self.sigma2_proposal_sd >= 0.0) {
            return Err(Error::invalid_argument("sigma2 proposal scale must be non-negative"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid_argument("target acceptance must lie in (0, 1)"));
        }
        self.weights.validate()?;
        self.hmc.validate_for(usize::MAX)
    }
}

/// Joint state of one chain.
#[derive(Clone, Debug)]
pub struct SamplerState {
    pub x: LatentConfiguration,
    pub sigma2: f64,
    pub sigma_mat: DMatrix<f64>,
    pub tree_index: usize,
    pub iteration: usize,
}

/// Everything the driver reads but does not own. `data: None` disables the
/// likelihood so the chain samples the prior, which the stationarity tests
/// rely on.
pub struct ChainInputs<'a> {
    pub engine: &'a Engine,
    pub data: Option<&'a DissimilarityData>,
    pub mixture: &'a [Forest],
    pub diffusion: &'a DiffusionParams,
    pub hyper: &'a PriorHyperparams,
}

/// One thinned record of the chain.
#[derive(Clone, Debug)]
pub struct Draw {
    pub iteration: usize,
    pub log_posterior: f64,
    pub sigma2: f64,
    pub sigma_mat: DMatrix<f64>,
    pub tree_index: usize,
    pub x: LatentConfiguration,
    pub block: BlockKind,
    pub accepted: bool,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct BlockTally {
    pub attempts: usize,
    pub accepts: usize,
}

impl BlockTally {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.attempts as f64
        }
    }
}

pub struct ChainOutput {
    pub draws: Vec<Draw>,
    pub x_block: BlockTally,
    pub x_divergences: usize,
    pub sigma2_block: BlockTally,
    pub sigma_mat_updates: usize,
    pub tree_updates: usize,
    /// Step size actually used after any warmup adaptation.
    pub step_size: f64,
    pub final_state: SamplerState,
}

/// Log density of the latent configuration's full conditional (likelihood
/// plus matrix-normal prior), the potential the Hamiltonian move simulates.
pub fn log_posterior_x(
    engine: &Engine,
    data: Option<&DissimilarityData>,
    x: &LatentConfiguration,
    sigma2: f64,
    forest: &Forest,
    dp: &DiffusionParams,
) -> Result<f64> {
    let mut total = matrix_normal_logpdf_pruning(x, forest, dp)?;
    if let Some(data) = data {
        let params = MdsParams::new(sigma2)?;
        total += engine.log_likelihood(data, x, &params)?;
    }
    Ok(total)
}

struct PosteriorXTarget<'a> {
    engine: &'a Engine,
    data: Option<&'a DissimilarityData>,
    params: Option<MdsParams>,
    forest: &'a Forest,
    cov: &'a TreeCovariance,
    dp: &'a DiffusionParams,
    cache: &'a mut FactorCache,
}

impl XTarget for PosteriorXTarget<'_> {
    fn log_density(&mut self, x: &LatentConfiguration) -> Result<f64> {
        let mut total = matrix_normal_logpdf_pruning(x, self.forest, self.dp)?;
        if let (Some(data), Some(params)) = (self.data, &self.params) {
            total += self.engine.log_likelihood(data, x, params)?;
        }
        Ok(total)
    }

    fn gradient(&mut self, x: &LatentConfiguration) -> Result<GradientMatrix> {
        let mut g = prior_gradient(x, self.cov, self.dp, self.cache)?;
        if let (Some(data), Some(params)) = (self.data, &self.params) {
            g.add(&self.engine.gradient(data, x, params)?);
        }
        Ok(g)
    }
}

fn with_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::InvalidArgument(m) => {
            Error::InvalidArgument(format!("iteration {iteration}: {m}"))
        }
        Error::InvalidInput(m) => Error::InvalidInput(format!("iteration {iteration}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("iteration {iteration}: {m}")),
        Error::Capability(m) => Error::Capability(format!("iteration {iteration}: {m}")),
        other => other,
    }
}

/// Unnormalized joint log density recorded in the trace: likelihood, latent
/// prior, and the hyperprior terms for the residual variance and the
/// diffusion precision.
fn log_joint(
    inputs: &ChainInputs,
    state: &SamplerState,
    dp: &DiffusionParams,
    hyper: &PriorHyperparams,
) -> Result<f64> {
    let forest = &inputs.mixture[state.tree_index];
    let mut lp = log_posterior_x(inputs.engine, inputs.data, &state.x, state.sigma2, forest, dp)?;
    lp += -(hyper.s0 + 1.0) * state.sigma2.ln() - hyper.r0 / state.sigma2;
    let d = state.sigma_mat.nrows() as f64;
    let chol = state
        .sigma_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("diffusion covariance left the SPD cone"))?;
    let precision = chol.inverse();
    let log_det_prec = -2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    lp += 0.5 * (hyper.d0 - d - 1.0) * log_det_prec
        - 0.5 * (&hyper.t0_mat * &precision).trace();
    Ok(lp)
}

/// Runs one chain. `init: None` starts from a prior draw of the latent
/// configuration with unit residual variance and the configured diffusion.
pub fn run_chain(
    cfg: &ChainConfig,
    inputs: &ChainInputs,
    init: Option<SamplerState>,
) -> Result<ChainOutput> {
    cfg.validate()?;
    if inputs.mixture.is_empty() {
        return Err(Error::invalid_argument("tree mixture must contain at least one component"));
    }
    let n = inputs.mixture[0].n_items();
    for f in inputs.mixture {
        if f.n_items() != n {
            return Err(Error::invalid_argument(
                "all mixture components must cover the same item set",
            ));
        }
    }
    if let Some(data) = inputs.data {
        if data.n() != n {
            return Err(Error::invalid_argument(format!(
                "data has {} items but the trees cover {n}",
                data.n()
            )));
        }
    }
    let d = inputs.diffusion.d();
    cfg.hmc.validate_for(d)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let covariances: Vec<TreeCovariance> = inputs
        .mixture
        .iter()
        .map(|f| build_tree_covariance(f, inputs.diffusion.tau0(), inputs.diffusion.tau_e()))
        .collect::<Result<_>>()?;
    let mut caches: Vec<FactorCache> = (0..inputs.mixture.len()).map(|_| FactorCache::new()).collect();

    let mut state = match init {
        Some(s) => {
            if s.x.n() != n || s.x.d() != d {
                return Err(Error::invalid_argument("initial state dimensions disagree"));
            }
            if s.tree_index >= inputs.mixture.len() {
                return Err(Error::invalid_argument("initial tree index out of range"));
            }
            if !(s.sigma2.is_finite() && s.sigma2 > 0.0) {
                return Err(Error::invalid_argument("initial residual variance must be positive"));
            }
            s
        }
        None => SamplerState {
            x: simulate_brownian_tips(&inputs.mixture[0], inputs.diffusion, &mut rng)?,
            sigma2: 1.0,
            sigma_mat: inputs.diffusion.sigma_mat().clone(),
            tree_index: 0,
            iteration: 0,
        },
    };
    let mut dp = inputs.diffusion.with_sigma_mat(state.sigma_mat.clone())?;

    // Warmup: adapt the step size on latent-configuration moves only, then
    // discard everything. Dual averaging toward the target acceptance.
    let mut step_size = cfg.hmc.step_size;
    if cfg.warmup_iterations > 0 {
        let mu = (10.0 * cfg.hmc.step_size).ln();
        let (gamma, t0, kappa) = (0.05, 10.0, 0.75);
        let mut log_eps = cfg.hmc.step_size.ln();
        let mut log_eps_bar = log_eps;
        let mut h_bar = 0.0;
        for t in 1..=cfg.warmup_iterations {
            let hmc = HmcConfig {
                step_size: log_eps.exp().clamp(1e-8, 1e3),
                leapfrog_steps: cfg.hmc.leapfrog_steps,
                mass: cfg.hmc.mass.clone(),
            };
            let mut target = PosteriorXTarget {
                engine: inputs.engine,
                data: inputs.data,
                params: inputs.data.map(|_| MdsParams::new(state.sigma2)).transpose()?,
                forest: &inputs.mixture[state.tree_index],
                cov: &covariances[state.tree_index],
                dp: &dp,
                cache: &mut caches[state.tree_index],
            };
            let out = hmc_transition(&state.x, &mut target, &hmc, &mut rng)
                .map_err(|e| with_iteration(e, t))?;
            let alpha = if out.divergent { 0.0 } else { (-out.delta_h).exp().min(1.0) };
            state.x = out.x;
            let tf = t as f64;
            h_bar = (1.0 - 1.0 / (tf + t0)) * h_bar + (cfg.target_accept - alpha) / (tf + t0);
            log_eps = mu - tf.sqrt() / gamma * h_bar;
            let eta = tf.powf(-kappa);
            log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
        }
        step_size = log_eps_bar.exp().clamp(1e-8, 1e3);
    }
    let hmc = HmcConfig {
        step_size,
        leapfrog_steps: cfg.hmc.leapfrog_steps,
        mass: cfg.hmc.mass.clone(),
    };

    let mut draws = Vec::new();
    let mut x_block = BlockTally::default();
    let mut x_divergences = 0usize;
    let mut sigma2_block = BlockTally::default();
    let mut sigma_mat_updates = 0usize;
    let mut tree_updates = 0usize;
    let total_weight = cfg.weights.total();

    for i in 1..=cfg.iterations {
        let pick = rng.random_range(0.0..total_weight);
        let (block, accepted);
        if pick < cfg.weights.x {
            let mut target = PosteriorXTarget {
                engine: inputs.engine,
                data: inputs.data,
                params: inputs.data.map(|_| MdsParams::new(state.sigma2)).transpose()?,
                forest: &inputs.mixture[state.tree_index],
                cov: &covariances[state.tree_index],
                dp: &dp,
                cache: &mut caches[state.tree_index],
            };
            let out = hmc_transition(&state.x, &mut target, &hmc, &mut rng)
                .map_err(|e| with_iteration(e, i))?;
            x_block.attempts += 1;
            if out.accepted {
                x_block.accepts += 1;
            }
            if out.divergent {
                x_divergences += 1;
            }
            state.x = out.x;
            block = BlockKind::X;
            accepted = out.accepted;
        } else if pick < cfg.weights.x + cfg.weights.sigma2 {
            let engine = inputs.engine;
            let x = &state.x;
            let (next, ok) = mh_sigma2(
                state.sigma2,
                |s2| match inputs.data {
                    Some(data) => engine.log_likelihood(data, x, &MdsParams::new(s2)?),
                    None => Ok(0.0),
                },
                inputs.hyper,
                cfg.sigma2_proposal_sd,
                &mut rng,
            )
            .map_err(|e| with_iteration(e, i))?;
            state.sigma2 = next;
            sigma2_block.attempts += 1;
            if ok {
                sigma2_block.accepts += 1;
            }
            block = BlockKind::Sigma2;
            accepted = ok;
        } else if pick < cfg.weights.x + cfg.weights.sigma2 + cfg.weights.sigma_mat {
            let scatter = whitened_scatter(
                &state.x,
                inputs.diffusion.mu0(),
                &covariances[state.tree_index],
                &mut caches[state.tree_index],
            )
            .map_err(|e| with_iteration(e, i))?;
            let sigma = gibbs_sigma_mat(&scatter, n, inputs.hyper, &mut rng)
                .map_err(|e| with_iteration(e, i))?;
            state.sigma_mat = sigma;
            dp = inputs
                .diffusion
                .with_sigma_mat(state.sigma_mat.clone())
                .map_err(|e| with_iteration(e, i))?;
            sigma_mat_updates += 1;
            block = BlockKind::SigmaMat;
            accepted = true;
        } else {
            state.tree_index = rng.random_range(0..inputs.mixture.len());
            tree_updates += 1;
            block = BlockKind::Tree;
            accepted = true;
        }
        state.iteration = i;
        if i % cfg.thin == 0 {
            let log_posterior =
                log_joint(inputs, &state, &dp, inputs.hyper).map_err(|e| with_iteration(e, i))?;
            draws.push(Draw {
                iteration: i,
                log_posterior,
                sigma2: state.sigma2,
                sigma_mat: state.sigma_mat.clone(),
                tree_index: state.tree_index,
                x: state.x.clone(),
                block,
                accepted,
            });
        }
    }

    Ok(ChainOutput {
        draws,
        x_block,
        x_divergences,
        sigma2_block,
        sigma_mat_updates,
        tree_updates,
        step_size,
        final_state: state,
    })
}

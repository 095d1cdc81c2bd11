//! Posterior sampling: Hamiltonian moves over the latent configuration
//! inside a random-scan Metropolis-within-Gibbs driver, plus the diagnostics
//! the tests and summaries lean on.

pub mod chain;
pub mod diagnostics;
pub mod gibbs;
pub mod hmc;

pub use chain::{
    log_posterior_x, run_chain, BlockKind, BlockTally, ChainConfig, ChainInputs, ChainOutput,
    Draw, SamplerState, ScanWeights,
};
pub use diagnostics::{batch_means_se, ks_p_value, ks_statistic};
pub use gibbs::{gibbs_sigma_mat, mh_sigma2, whitened_scatter, wishart_draw};
pub use hmc::{
    hmc_transition, leapfrog_trajectory, HmcConfig, HmcOutcome, Mass, Trajectory, XTarget,
};

//! Bayesian multidimensional scaling with phylogenetic tree priors and
//! parallel likelihood engines.
//!
//! Items with pairwise dissimilarities are embedded in a low-dimensional
//! Euclidean space. Observed dissimilarities are modeled as truncated-normal
//! noise around latent distances; the latent coordinates carry a Brownian
//! diffusion prior along one or more phylogenetic trees. Inference runs a
//! random-scan sampler with Hamiltonian updates for the coordinates, and the
//! O(N²) likelihood and gradient evaluations are served by interchangeable
//! engines (serial, vectorized, threaded, and a tiled device-style backend).
//!
//! Modules:
//! - [`model`]: data types, stable normal-tail numerics, serial likelihood
//!   and gradient (the ground truth every engine is tested against).
//! - [`engine`]: fused parallel evaluation backends behind one configuration.
//! - [`tree`]: Newick parsing, tree-structured covariances, matrix-normal
//!   prior densities (dense and pruning routes), Brownian simulation.
//! - [`sampler`]: Hamiltonian updates, Gibbs and Metropolis moves, the
//!   random-scan chain driver.
//! - [`select`]: pairwise cross-validation and held-out predictive density.
//! - [`net`]: effective distances on a mobility network.
//! - [`app`]: file formats, configuration, and the CLI command bodies.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory; the
//! `phylomds` binary exposes the same capabilities as subcommands.

pub mod app;
pub mod engine;
pub mod error;
pub mod model;
pub mod net;
pub mod sampler;
pub mod select;
pub mod tree;

pub use error::{Error, Result};

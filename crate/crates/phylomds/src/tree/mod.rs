//! Phylogenies, the covariance they induce over items, the matrix-normal
//! prior evaluated densely or by pruning, and forward simulation.

pub mod covariance;
pub mod newick;
pub mod phylogeny;
pub mod prior;
pub mod simulate;

pub use covariance::{build_tree_covariance, Forest, TreeCovariance};
pub use newick::{parse_mixture, parse_trees};
pub use phylogeny::{Phylogeny, TreeNode};
pub use prior::{
    matrix_normal_logpdf_dense, matrix_normal_logpdf_pruning, matrix_normal_logpdf_pruning_counted,
    prior_gradient, DiffusionParams, FactorCache, PriorHyperparams,
};
pub use simulate::simulate_brownian_tips;

//! Observation model: data types, stable normal-tail numerics, and the
//! serial reference likelihood, gradient, and truncation penalty.

pub mod likelihood;
pub mod normal;
pub mod types;

pub use likelihood::{
    log_likelihood_gradient_serial, log_likelihood_serial, log_likelihood_untruncated_serial,
    pair_term, truncation_sum_serial,
};
pub use types::{DissimilarityData, GradientMatrix, LatentConfiguration, MdsParams, PairMask};

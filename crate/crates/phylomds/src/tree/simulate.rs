//! Forward simulation of the latent diffusion along a forest.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::LatentConfiguration;
use crate::tree::covariance::Forest;
use crate::tree::prior::DiffusionParams;

/// Draws tip locations by walking each tree from the root: the root is
/// drawn around the prior mean at the root scale, every child around its
/// parent at the branch length, unsequenced items around the prior mean at
/// the unsequenced scale. Zero scales are exact (no noise is added), so
/// degenerate settings collapse tips onto the mean without rounding.
pub fn simulate_brownian_tips<R: Rng>(
    forest: &Forest,
    dp: &DiffusionParams,
    rng: &mut R,
) -> Result<LatentConfiguration> {
    let d = dp.d();
    let chol = dp
        .sigma_mat()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("diffusion covariance is not positive definite"))?;
    let n = forest.n_items();
    let mut coords = vec![0.0; n * d];
    for (t, tree) in forest.trees().iter().enumerate() {
        let mut values: Vec<DVector<f64>> = vec![DVector::zeros(0); tree.node_count()];
        let root = tree.root();
        values[root] = gaussian_step(dp.mu0(), dp.tau0(), &chol, rng);
        // Parents precede children in reverse post-order.
        let mut order = tree.post_order();
        order.reverse();
        for &k in &order {
            if k != root {
                let parent = tree.node(k).parent.unwrap();
                let step = gaussian_step(&values[parent], tree.node(k).branch, &chol, rng);
                values[k] = step;
            }
        }
        for (slot, &tip) in tree.tips().iter().enumerate() {
            let row = forest.tip_row(t, slot);
            for i in 0..d {
                coords[row * d + i] = values[tip][i];
            }
        }
    }
    for &row in forest.unsequenced() {
        let v = gaussian_step(dp.mu0(), dp.tau_e(), &chol, rng);
        for i in 0..d {
            coords[row * d + i] = v[i];
        }
    }
    LatentConfiguration::new(n, d, coords)
}

/// `mean + sqrt(scale) * L z`, exact when `scale` is zero.
fn gaussian_step<R: Rng>(
    mean: &DVector<f64>,
    scale: f64,
    chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let d = mean.len();
    if scale == 0.0 {
        return mean.clone();
    }
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol.l() * z * scale.sqrt()
}

//! Matrix-normal prior over latent locations with tree-structured row
//! covariance: a dense factorized evaluation that serves as the oracle, a
//! post-order pruning evaluation that is linear in tips, and the prior score
//! used by gradient-based transitions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::normal::LN_2PI;
use crate::model::{GradientMatrix, LatentConfiguration};
use crate::tree::covariance::{Forest, TreeCovariance};

/// Diffusion parameters shared by density evaluation and simulation.
///
/// `tau0` scales the root prior, `tau_e` the variance of items outside any
/// tree. Zero scales are accepted here so degenerate simulations stay exact;
/// density evaluations on such values fail where the factorization does.
#[derive(Clone, Debug)]
pub struct DiffusionParams {
    sigma_mat: DMatrix<f64>,
    mu0: DVector<f64>,
    tau0: f64,
    tau_e: f64,
}

impl DiffusionParams {
    pub fn new(sigma_mat: DMatrix<f64>, mu0: DVector<f64>, tau0: f64, tau_e: f64) -> Result<Self> {
        let d = sigma_mat.nrows();
        if d == 0 || sigma_mat.ncols() != d {
            return Err(Error::invalid_argument("diffusion covariance must be square and non-empty"));
        }
        if mu0.len() != d {
            return Err(Error::invalid_argument(format!(
                "prior mean has {} entries but the diffusion covariance is {d}x{d}",
                mu0.len()
            )));
        }
        if sigma_mat.iter().any(|v| !v.is_finite()) || mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("diffusion parameters must be finite"));
        }
        for i in 0..d {
            for j in 0..i {
                if (sigma_mat[(i, j)] - sigma_mat[(j, i)]).abs()
                    > 1e-12 * sigma_mat[(i, i)].abs().max(1.0)
                {
                    return Err(Error::invalid_argument("diffusion covariance must be symmetric"));
                }
            }
        }
        if sigma_mat.clone().cholesky().is_none() {
            return Err(Error::invalid_argument("diffusion covariance must be positive definite"));
        }
        if !(tau0.is_finite() && tau0 >= 0.0) || !(tau_e.is_finite() && tau_e >= 0.0) {
            return Err(Error::invalid_argument(
                "root and unsequenced prior scales must be finite and non-negative",
            ));
        }
        Ok(DiffusionParams { sigma_mat, mu0, tau0, tau_e })
    }

    /// Identity diffusion in `d` dimensions centered at the origin.
    pub fn standard(d: usize, tau0: f64, tau_e: f64) -> Result<Self> {
        DiffusionParams::new(DMatrix::identity(d, d), DVector::zeros(d), tau0, tau_e)
    }

    pub fn d(&self) -> usize {
        self.sigma_mat.nrows()
    }

    pub fn sigma_mat(&self) -> &DMatrix<f64> {
        &self.sigma_mat
    }

    /// Replaces the diffusion covariance, keeping mean and scales.
    pub fn with_sigma_mat(&self, sigma_mat: DMatrix<f64>) -> Result<Self> {
        DiffusionParams::new(sigma_mat, self.mu0.clone(), self.tau0, self.tau_e)
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn tau_e(&self) -> f64 {
        self.tau_e
    }
}

/// Hyperparameters of the conjugate priors on the diffusion precision and
/// the residual precision.
#[derive(Clone, Debug)]
pub struct PriorHyperparams {
    pub d0: f64,
    pub t0_mat: DMatrix<f64>,
    pub s0: f64,
    pub r0: f64,
}

impl PriorHyperparams {
    pub fn new(d0: f64, t0_mat: DMatrix<f64>, s0: f64, r0: f64) -> Result<Self> {
        let d = t0_mat.nrows();
        if d == 0 || t0_mat.ncols() != d {
            return Err(Error::invalid_argument("precision rate matrix must be square"));
        }
        if !(d0.is_finite() && d0 > d as f64 - 1.0) {
            return Err(Error::invalid_argument(format!(
                "degrees of freedom must exceed {} for a {d}x{d} rate matrix",
                d as f64 - 1.0
            )));
        }
        if t0_mat.clone().cholesky().is_none() {
            return Err(Error::invalid_argument("precision rate matrix must be positive definite"));
        }
        if !(s0.is_finite() && s0 > 0.0) || !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::invalid_argument("residual precision shape and rate must be positive"));
        }
        Ok(PriorHyperparams { d0, t0_mat, s0, r0 })
    }

    /// Weakly informative defaults: d0 = D + 1, identity rate, unit
    /// shape/rate on the residual precision.
    pub fn default_for_dim(d: usize) -> Self {
        PriorHyperparams {
            d0: d as f64 + 1.0,
            t0_mat: DMatrix::identity(d, d),
            s0: 1.0,
            r0: 1.0,
        }
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn centered(x: &LatentConfiguration, mu0: &DVector<f64>) -> DMatrix<f64> {
    let (n, d) = (x.n(), x.d());
    let mut z = DMatrix::zeros(n, d);
    for i in 0..n {
        let row = x.row(i);
        for k in 0..d {
            z[(i, k)] = row[k] - mu0[k];
        }
    }
    z
}

fn check_prior_dims(x: &LatentConfiguration, dp: &DiffusionParams) -> Result<()> {
    if dp.d() != x.d() {
        return Err(Error::invalid_argument(format!(
            "configuration has {} columns but the diffusion covariance is {}x{}",
            x.d(),
            dp.d(),
            dp.d()
        )));
    }
    Ok(())
}

/// Exact log density through dense factorizations of both covariances.
/// Cubic in the item count; the oracle against which pruning is tested.
pub fn matrix_normal_logpdf_dense(
    x: &LatentConfiguration,
    v: &TreeCovariance,
    dp: &DiffusionParams,
) -> Result<f64> {
    check_prior_dims(x, dp)?;
    if v.n() != x.n() {
        return Err(Error::invalid_argument(format!(
            "covariance is over {} items but the configuration has {} rows",
            v.n(),
            x.n()
        )));
    }
    let (n, d) = (x.n(), x.d());
    if n == 0 {
        return Ok(0.0);
    }
    let chol_v = v
        .to_dmatrix()
        .cholesky()
        .ok_or_else(|| Error::numeric("item covariance is not positive definite"))?;
    let chol_s = dp
        .sigma_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("diffusion covariance is not positive definite"))?;
    let z = centered(x, &dp.mu0);
    let vinv_z = chol_v.solve(&z);
    let sinv_zt = chol_s.solve(&z.transpose());
    let mut trace = 0.0;
    for i in 0..n {
        for k in 0..d {
            trace += vinv_z[(i, k)] * sinv_zt[(k, i)];
        }
    }
    Ok(-0.5 * trace
        - 0.5 * (n * d) as f64 * LN_2PI
        - 0.5 * n as f64 * log_det(&chol_s)
        - 0.5 * d as f64 * log_det(&chol_v))
}

/// Log density by post-order pruning, linear in tips for fixed dimension.
pub fn matrix_normal_logpdf_pruning(
    x: &LatentConfiguration,
    forest: &Forest,
    dp: &DiffusionParams,
) -> Result<f64> {
    matrix_normal_logpdf_pruning_counted(x, forest, dp).map(|(lp, _)| lp)
}

/// As [`matrix_normal_logpdf_pruning`], also reporting the number of
/// Gaussian closure terms evaluated. One term is produced per branch merge,
/// per tree root, and per unsequenced item, so the count equals the item
/// total; tests pin this to assert linear cost by construction.
pub fn matrix_normal_logpdf_pruning_counted(
    x: &LatentConfiguration,
    forest: &Forest,
    dp: &DiffusionParams,
) -> Result<(f64, usize)> {
    check_prior_dims(x, dp)?;
    if forest.n_items() != x.n() {
        return Err(Error::invalid_argument(format!(
            "forest covers {} items but the configuration has {} rows",
            forest.n_items(),
            x.n()
        )));
    }
    let d = x.d();
    let chol_s = dp
        .sigma_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("diffusion covariance is not positive definite"))?;
    let ld_s = log_det(&chol_s);
    let quad = |q: &DVector<f64>| -> f64 { chol_s.solve(q).dot(q) };
    let mut logp = 0.0;
    let mut terms = 0usize;
    let mut q = DVector::zeros(d);
    for (t, tree) in forest.trees().iter().enumerate() {
        let mut mean: Vec<DVector<f64>> = vec![DVector::zeros(d); tree.node_count()];
        let mut extra = vec![0.0; tree.node_count()];
        let mut tip_slot = vec![usize::MAX; tree.node_count()];
        for (slot, &node) in tree.tips().iter().enumerate() {
            tip_slot[node] = slot;
        }
        for k in tree.post_order() {
            if tree.is_tip(k) {
                let row = x.row(forest.tip_row(t, tip_slot[k]));
                for (dst, &src) in mean[k].iter_mut().zip(row) {
                    *dst = src;
                }
                extra[k] = 0.0;
            } else {
                let (c1, c2) = (tree.node(k).children[0], tree.node(k).children[1]);
                let v1 = extra[c1] + tree.node(c1).branch;
                let v2 = extra[c2] + tree.node(c2).branch;
                let s = v1 + v2;
                for i in 0..d {
                    q[i] = mean[c1][i] - mean[c2][i];
                }
                logp -= 0.5 * (d as f64 * (LN_2PI + s.ln()) + ld_s + quad(&q) / s);
                terms += 1;
                let mut m = DVector::zeros(d);
                for i in 0..d {
                    m[i] = (v2 * mean[c1][i] + v1 * mean[c2][i]) / s;
                }
                mean[k] = m;
                extra[k] = v1 * v2 / s;
            }
        }
        let root = tree.root();
        let s = extra[root] + dp.tau0;
        for i in 0..d {
            q[i] = mean[root][i] - dp.mu0[i];
        }
        logp -= 0.5 * (d as f64 * (LN_2PI + s.ln()) + ld_s + quad(&q) / s);
        terms += 1;
    }
    for &row in forest.unsequenced() {
        let xr = x.row(row);
        for i in 0..d {
            q[i] = xr[i] - dp.mu0[i];
        }
        logp -= 0.5 * (d as f64 * (LN_2PI + dp.tau_e.ln()) + ld_s + quad(&q) / dp.tau_e);
        terms += 1;
    }
    Ok((logp, terms))
}

/// Caches the item-covariance factorization keyed by covariance version, so
/// repeated score evaluations inside one trajectory factor exactly once and
/// a rebuilt covariance can never be paired with a stale factor.
#[derive(Default)]
pub struct FactorCache {
    version: u64,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl FactorCache {
    pub fn new() -> Self {
        FactorCache::default()
    }

    pub fn factor(&mut self, v: &TreeCovariance) -> Result<&Cholesky<f64, Dyn>> {
        if self.chol.is_none() || self.version != v.version() {
            let chol = v
                .to_dmatrix()
                .cholesky()
                .ok_or_else(|| Error::numeric("item covariance is not positive definite"))?;
            self.version = v.version();
            self.chol = Some(chol);
        }
        Ok(self.chol.as_ref().unwrap())
    }
}

/// Score of the matrix-normal prior with respect to the latent rows.
pub fn prior_gradient(
    x: &LatentConfiguration,
    v: &TreeCovariance,
    dp: &DiffusionParams,
    cache: &mut FactorCache,
) -> Result<GradientMatrix> {
    check_prior_dims(x, dp)?;
    if v.n() != x.n() {
        return Err(Error::invalid_argument(format!(
            "covariance is over {} items but the configuration has {} rows",
            v.n(),
            x.n()
        )));
    }
    let (n, d) = (x.n(), x.d());
    let chol_s = dp
        .sigma_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("diffusion covariance is not positive definite"))?;
    let chol_v = cache.factor(v)?;
    let z = centered(x, &dp.mu0);
    let vinv_z = chol_v.solve(&z);
    let g = chol_s.solve(&vinv_z.transpose()).transpose();
    let mut out = GradientMatrix::zeros(n, d);
    for i in 0..n {
        let row = out.row_mut(i);
        for k in 0..d {
            row[k] = -g[(i, k)];
        }
    }
    Ok(out)
}

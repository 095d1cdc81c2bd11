//! Binding trees to item rows and building the induced covariance.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tree::phylogeny::Phylogeny;

/// One or more trees over disjoint subsets of a shared item set.
///
/// Items claimed by no tree are "unsequenced": under the prior they are
/// independent draws centered on the prior mean. Binding resolves tip labels
/// to item rows and is where label mistakes surface.
#[derive(Clone, Debug)]
pub struct Forest {
    trees: Vec<Phylogeny>,
    tip_rows: Vec<Vec<usize>>,
    n_items: usize,
    unsequenced: Vec<usize>,
}

impl Forest {
    pub fn bind(trees: Vec<Phylogeny>, items: &[String]) -> Result<Forest> {
        let n_items = items.len();
        let mut row_of = std::collections::HashMap::new();
        for (row, label) in items.iter().enumerate() {
            if row_of.insert(label.as_str(), row).is_some() {
                return Err(Error::invalid_input(format!("duplicate item label '{label}'")));
            }
        }
        let mut claimed = vec![false; n_items];
        let mut tip_rows = Vec::with_capacity(trees.len());
        for tree in &trees {
            let mut rows = Vec::with_capacity(tree.tip_count());
            for &t in tree.tips() {
                let label = tree.node(t).label.as_deref().unwrap();
                let &row = row_of.get(label).ok_or_else(|| {
                    Error::invalid_input(format!(
                        "tree tip '{label}' does not match any item label"
                    ))
                })?;
                if claimed[row] {
                    return Err(Error::invalid_input(format!(
                        "item '{label}' appears in more than one tree"
                    )));
                }
                claimed[row] = true;
                rows.push(row);
            }
            tip_rows.push(rows);
        }
        let unsequenced = (0..n_items).filter(|&r| !claimed[r]).collect();
        Ok(Forest { trees, tip_rows, n_items, unsequenced })
    }

    /// A forest whose items are exactly the trees' tips, in tree order.
    pub fn over_own_tips(trees: Vec<Phylogeny>) -> Result<Forest> {
        let items: Vec<String> = trees
            .iter()
            .flat_map(|t| t.tip_labels().into_iter().map(str::to_string))
            .collect();
        Forest::bind(trees, &items)
    }

    pub fn trees(&self) -> &[Phylogeny] {
        &self.trees
    }

    /// Item row of tip slot `k` of tree `t`.
    pub fn tip_row(&self, t: usize, k: usize) -> usize {
        self.tip_rows[t][k]
    }

    /// Item rows in tip order for tree `t`.
    pub fn tip_rows(&self, t: usize) -> &[usize] {
        &self.tip_rows[t]
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn unsequenced(&self) -> &[usize] {
        &self.unsequenced
    }
}

static COVARIANCE_VERSION: AtomicU64 = AtomicU64::new(1);

/// Symmetric positive-definite item covariance induced by a forest.
///
/// Each tree contributes one block: diagonal entries are the root prior
/// scale plus the root-to-tip time, off-diagonal entries the root prior
/// scale plus the time shared on the two root paths. Unsequenced items sit
/// alone on the diagonal. `version` identifies the build so downstream
/// factorization caches can detect staleness.
#[derive(Clone, Debug)]
pub struct TreeCovariance {
    n: usize,
    values: Vec<f64>,
    version: u64,
}

impl TreeCovariance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.values)
    }
}

/// Builds the item covariance for one forest. Positive-definiteness is
/// verified by factorization; failure (possible only for degenerate branch
/// lengths) is reported as a numeric error.
pub fn build_tree_covariance(forest: &Forest, tau0: f64, tau_e: f64) -> Result<TreeCovariance> {
    if !(tau0.is_finite() && tau0 >= 0.0) || !(tau_e.is_finite() && tau_e >= 0.0) {
        return Err(Error::invalid_argument(
            "root and unsequenced prior scales must be finite and non-negative",
        ));
    }
    let n = forest.n_items();
    let mut values = vec![0.0; n * n];
    for (t, tree) in forest.trees().iter().enumerate() {
        let depths = tree.depths();
        let tips = tree.tips();
        for (a, &ta) in tips.iter().enumerate() {
            let ra = forest.tip_row(t, a);
            values[ra * n + ra] = tau0 + depths[ta];
            for (b, &tb) in tips.iter().enumerate().take(a) {
                let rb = forest.tip_row(t, b);
                let v = tau0 + mrca_depth(tree, &depths, ta, tb);
                values[ra * n + rb] = v;
                values[rb * n + ra] = v;
            }
        }
    }
    for &r in forest.unsequenced() {
        values[r * n + r] = tau_e;
    }
    let cov = TreeCovariance {
        n,
        values,
        version: COVARIANCE_VERSION.fetch_add(1, Ordering::Relaxed),
    };
    if n > 0 && cov.to_dmatrix().cholesky().is_none() {
        return Err(Error::numeric(
            "tree covariance is not positive definite; check branch lengths and prior scales",
        ));
    }
    Ok(cov)
}

/// Depth (time from the root) of the most recent common ancestor of two
/// nodes, found by walking the deeper node upward until the chains meet.
fn mrca_depth(tree: &Phylogeny, depths: &[f64], mut a: usize, mut b: usize) -> f64 {
    let edges_above = |k: usize| tree.root_path(k).len() - 1;
    let (mut da, mut db) = (edges_above(a), edges_above(b));
    while da > db {
        a = tree.node(a).parent.unwrap();
        da -= 1;
    }
    while db > da {
        b = tree.node(b).parent.unwrap();
        db -= 1;
    }
    while a != b {
        a = tree.node(a).parent.unwrap();
        b = tree.node(b).parent.unwrap();
    }
    depths[a]
}

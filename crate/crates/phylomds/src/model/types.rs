//! Core data types shared by the likelihood, engines, prior, and sampler.

use crate::error::{Error, Result};

/// Observation mask over item pairs: entry (i, j) says whether the
/// dissimilarity between items i and j was observed.
///
/// Invariants: symmetric, diagonal always unobserved. Consumers only ever
/// consult i > j entries; symmetry is maintained so either orientation works.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairMask {
    n: usize,
    flags: Vec<bool>,
}

impl PairMask {
    pub fn all_observed(n: usize) -> Self {
        let mut flags = vec![true; n * n];
        for i in 0..n {
            flags[i * n + i] = false;
        }
        PairMask { n, flags }
    }

    pub fn none_observed(n: usize) -> Self {
        PairMask {
            n,
            flags: vec![false; n * n],
        }
    }

    pub fn from_flags(n: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != n * n {
            return Err(Error::invalid_argument(format!(
                "mask length {} does not match n = {n}",
                flags.len()
            )));
        }
        for i in 0..n {
            if flags[i * n + i] {
                return Err(Error::invalid_input(format!(
                    "mask marks diagonal entry ({i}, {i}) as observed"
                )));
            }
            for j in 0..i {
                if flags[i * n + j] != flags[j * n + i] {
                    return Err(Error::invalid_input(format!(
                        "mask is asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(PairMask { n, flags })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.flags[i * self.n + j]
    }

    /// Marks (i, j) and (j, i). Diagonal requests are rejected upstream;
    /// here they are a programming error.
    pub fn set(&mut self, i: usize, j: usize, observed: bool) {
        assert_ne!(i, j, "diagonal mask entries are fixed unobserved");
        self.flags[i * self.n + j] = observed;
        self.flags[j * self.n + i] = observed;
    }

    /// Number of observed unordered pairs (counted over i > j).
    pub fn observed_pair_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for j in 0..i {
                if self.flags[i * self.n + j] {
                    count += 1;
                }
            }
        }
        count
    }

    /// Observed unordered pairs in fixed i-major order (i > j).
    pub fn observed_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n)
            .flat_map(move |i| (0..i).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.flags[i * self.n + j])
    }
}

/// Symmetric pairwise dissimilarity data with an observation mask.
///
/// Values are stored as a full row-major n×n matrix; only masked i > j
/// entries are ever read. Observed values are finite and non-negative.
#[derive(Clone, Debug)]
pub struct DissimilarityData {
    n: usize,
    values: Vec<f64>,
    mask: PairMask,
    n_observed: usize,
}

impl DissimilarityData {
    pub fn new(n: usize, values: Vec<f64>, mask: PairMask) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid_argument(format!(
                "value matrix length {} does not match n = {n}",
                values.len()
            )));
        }
        if mask.n() != n {
            return Err(Error::invalid_argument(format!(
                "mask size {} does not match n = {n}",
                mask.n()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if !mask.is_observed(i, j) {
                    continue;
                }
                let y = values[i * n + j];
                if !y.is_finite() || y < 0.0 {
                    return Err(Error::invalid_input(format!(
                        "observed dissimilarity ({i}, {j}) = {y} is not a finite non-negative value"
                    )));
                }
                if values[j * n + i] != y {
                    return Err(Error::invalid_input(format!(
                        "dissimilarity matrix is asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let n_observed = mask.observed_pair_count();
        Ok(DissimilarityData {
            n,
            values,
            mask,
            n_observed,
        })
    }

    /// Builds from an explicit list of observed pairs; everything else is
    /// unobserved. Pairs may be given in either orientation.
    pub fn from_observed_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut values = vec![0.0; n * n];
        let mut mask = PairMask::none_observed(n);
        for &(i, j, y) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::invalid_argument(format!(
                    "pair ({i}, {j}) is out of range for n = {n}"
                )));
            }
            values[i * n + j] = y;
            values[j * n + i] = y;
            mask.set(i, j, true);
        }
        DissimilarityData::new(n, values, mask)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &PairMask {
        &self.mask
    }

    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    /// Same values under a different mask. The new mask must only observe
    /// pairs this data set already observes (used to carve out folds).
    pub fn with_mask(&self, mask: PairMask) -> Result<Self> {
        for (i, j) in mask.observed_pairs() {
            if !self.mask.is_observed(i, j) {
                return Err(Error::invalid_argument(format!(
                    "new mask observes ({i}, {j}) which the data set does not"
                )));
            }
        }
        DissimilarityData::new(self.n, self.values.clone(), mask)
    }
}

/// Latent coordinates for n items in d dimensions, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentConfiguration {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl LatentConfiguration {
    pub fn new(n: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid_argument("latent dimension must be at least 1"));
        }
        if coords.len() != n * d {
            return Err(Error::invalid_argument(format!(
                "coordinate buffer length {} does not match {n}×{d}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input(
                "latent coordinates contain a non-finite value",
            ));
        }
        Ok(LatentConfiguration { n, d, coords })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        LatentConfiguration {
            n,
            d: d.max(1),
            coords: vec![0.0; n * d.max(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    /// Euclidean distance between rows i and j.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = &self.coords[i * self.d..i * self.d + self.d];
        let b = &self.coords[j * self.d..j * self.d + self.d];
        let mut acc = 0.0;
        for k in 0..self.d {
            let diff = a[k] - b[k];
            acc += diff * diff;
        }
        acc.sqrt()
    }
}

/// Scalar parameters of the truncated-normal observation model.
#[derive(Clone, Copy, Debug)]
pub struct MdsParams {
    sigma2: f64,
}

impl MdsParams {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "sigma2 must be finite and positive, got {sigma2}"
            )));
        }
        Ok(MdsParams { sigma2 })
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Gradient with respect to the latent coordinates, plus a diagnostic count
/// of observed pairs skipped because the pair distance was exactly zero
/// (the direction (x_i - x_j)/δ is undefined there; those pairs contribute
/// a zero vector).
#[derive(Clone, Debug)]
pub struct GradientMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    coincident_pairs: usize,
}

impl GradientMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        GradientMatrix {
            n,
            d,
            values: vec![0.0; n * d],
            coincident_pairs: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn coincident_pairs(&self) -> usize {
        self.coincident_pairs
    }

    pub fn record_coincident_pairs(&mut self, count: usize) {
        self.coincident_pairs += count;
    }

    /// Componentwise sum; used when assembling likelihood and prior parts.
    pub fn add(&mut self, other: &GradientMatrix) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        self.coincident_pairs += other.coincident_pairs;
    }
}

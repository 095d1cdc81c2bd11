//! Lane-aligned copy of the latent coordinates.

use crate::model::LatentConfiguration;

/// Row-contiguous N×padded_d copy of the coordinates, with each row
/// zero-padded to a multiple of the lane width so packet loops can walk
/// whole rows without a remainder. The padding columns are exactly zero,
/// so distances over padded rows equal distances over the original rows.
pub struct PaddedLatentBuffer {
    n: usize,
    d: usize,
    padded_d: usize,
    storage: Vec<f64>,
}

impl PaddedLatentBuffer {
    pub fn new(x: &LatentConfiguration, lane_width: usize) -> Self {
        let n = x.n();
        let d = x.d();
        let lane = lane_width.max(1);
        let padded_d = d.div_ceil(lane) * lane;
        let mut storage = vec![0.0; n * padded_d];
        for i in 0..n {
            storage[i * padded_d..i * padded_d + d].copy_from_slice(x.row(i));
        }
        PaddedLatentBuffer {
            n,
            d,
            padded_d,
            storage,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn padded_d(&self) -> usize {
        self.padded_d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.storage[i * self.padded_d..(i + 1) * self.padded_d]
    }

    /// Euclidean distance between rows i and j over the padded width; the
    /// zero padding contributes nothing.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = self.row(i);
        let b = self.row(j);
        let mut acc = 0.0;
        for k in 0..self.padded_d {
            let diff = a[k] - b[k];
            acc += diff * diff;
        }
        acc.sqrt()
    }
}

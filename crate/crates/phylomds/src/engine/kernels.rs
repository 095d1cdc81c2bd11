//! Fused evaluation kernels behind the engine backends.
//!
//! Every kernel walks pair terms and reduces on the fly: no N×N buffer of
//! intermediate terms is ever materialized. Scratch is bounded by the tile
//! edge, the lane width, and per-thread partials. All partitions are fixed
//! functions of (n, config), and partial sums are combined in partition
//! order on a binary tree, so a given configuration always reproduces the
//! same bits regardless of thread scheduling.

use std::ops::Range;

use rayon::prelude::*;

use super::buffer::PaddedLatentBuffer;
use super::packet::{batched_inv_mills, batched_log_phi, MAX_LANE_WIDTH};
use super::reduce::{tiled_reduction, tree_combine_rows};
use crate::model::normal::{inv_mills, log_phi};
use crate::model::types::{GradientMatrix, PairMask};

/// Which per-pair quantity a sum kernel accumulates.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(super) enum SumKind {
    /// Residual plus truncation: (y-δ)²/(2σ²) + ln Φ(δ/σ).
    Full,
    /// Residual only.
    Untruncated,
    /// Truncation only: ln Φ(δ/σ).
    TruncationOnly,
}

/// Read-only inputs shared by all sum kernels.
pub(super) struct SumInputs<'a> {
    /// Row-major n×n observed values; `None` for truncation-only sums.
    pub values: Option<&'a [f64]>,
    pub mask: &'a PairMask,
    pub n: usize,
    pub sigma: f64,
    pub sigma2: f64,
}

impl SumInputs<'_> {
    #[inline]
    fn value(&self, i: usize, j: usize) -> f64 {
        match self.values {
            Some(v) => v[i * self.n + j],
            None => 0.0,
        }
    }
}

#[inline]
fn scalar_term(kind: SumKind, y: f64, delta: f64, sigma: f64, sigma2: f64) -> f64 {
    match kind {
        SumKind::Full => {
            let r = y - delta;
            r * r / (2.0 * sigma2) + log_phi(delta / sigma)
        }
        SumKind::Untruncated => {
            let r = y - delta;
            r * r / (2.0 * sigma2)
        }
        SumKind::TruncationOnly => log_phi(delta / sigma),
    }
}

/// Single-thread packet walk: i-major over the lower triangle, inner loop
/// in lane-width packets over j, Φ through the packet primitive.
pub(super) fn sum_vectorized(
    kind: SumKind,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    lane: usize,
) -> f64 {
    let n = inp.n;
    let needs_phi = kind != SumKind::Untruncated;
    let mut delta = [0.0f64; MAX_LANE_WIDTH];
    let mut phi = [0.0f64; MAX_LANE_WIDTH];
    let mut total = 0.0;
    for i in 0..n {
        let mut j = 0;
        while j < i {
            let w = lane.min(i - j);
            for l in 0..w {
                delta[l] = buf.distance(i, j + l);
            }
            if needs_phi {
                for l in 0..w {
                    phi[l] = delta[l] / inp.sigma;
                }
                batched_log_phi(&mut phi[..w]);
            }
            for l in 0..w {
                if !inp.mask.is_observed(i, j + l) {
                    continue;
                }
                total += match kind {
                    SumKind::Full => {
                        let r = inp.value(i, j + l) - delta[l];
                        r * r / (2.0 * inp.sigma2) + phi[l]
                    }
                    SumKind::Untruncated => {
                        let r = inp.value(i, j + l) - delta[l];
                        r * r / (2.0 * inp.sigma2)
                    }
                    SumKind::TruncationOnly => phi[l],
                };
            }
            j += w;
        }
    }
    total
}

/// Contiguous column blocks with roughly equal pair counts (column j owns
/// the pairs i > j, so early columns are heavier). Pure function of (n,
/// parts); at most `parts` blocks, in column order.
pub(super) fn column_blocks(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.max(1);
    let total = n.saturating_sub(1) * n / 2;
    let mut blocks = Vec::with_capacity(parts);
    let mut start = 0usize;
    let mut acc = 0usize;
    for j in 0..n {
        acc += n - 1 - j;
        if total > 0 && blocks.len() + 1 < parts && acc * parts >= (blocks.len() + 1) * total
        {
            blocks.push(start..j + 1);
            start = j + 1;
        }
    }
    blocks.push(start..n);
    blocks
}

/// One thread's share: columns `cols`, rows i > j within each column so x_j
/// stays hot; scalar or packet inner walk.
fn sum_block(
    kind: SumKind,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    cols: Range<usize>,
    lane: Option<usize>,
) -> f64 {
    let n = inp.n;
    let mut total = 0.0;
    match lane {
        None => {
            for j in cols {
                for i in j + 1..n {
                    if inp.mask.is_observed(i, j) {
                        total += scalar_term(
                            kind,
                            inp.value(i, j),
                            buf.distance(i, j),
                            inp.sigma,
                            inp.sigma2,
                        );
                    }
                }
            }
        }
        Some(w) => {
            let needs_phi = kind != SumKind::Untruncated;
            let mut delta = [0.0f64; MAX_LANE_WIDTH];
            let mut phi = [0.0f64; MAX_LANE_WIDTH];
            for j in cols {
                let mut i = j + 1;
                while i < n {
                    let width = w.min(n - i);
                    for l in 0..width {
                        delta[l] = buf.distance(i + l, j);
                    }
                    if needs_phi {
                        for l in 0..width {
                            phi[l] = delta[l] / inp.sigma;
                        }
                        batched_log_phi(&mut phi[..width]);
                    }
                    for l in 0..width {
                        if !inp.mask.is_observed(i + l, j) {
                            continue;
                        }
                        total += match kind {
                            SumKind::Full => {
                                let r = inp.value(i + l, j) - delta[l];
                                r * r / (2.0 * inp.sigma2) + phi[l]
                            }
                            SumKind::Untruncated => {
                                let r = inp.value(i + l, j) - delta[l];
                                r * r / (2.0 * inp.sigma2)
                            }
                            SumKind::TruncationOnly => phi[l],
                        };
                    }
                    i += width;
                }
            }
        }
    }
    total
}

/// Thread-pool sum: one balanced column block per worker, per-block partials
/// combined in block order on the reduction tree.
pub(super) fn sum_threaded(
    kind: SumKind,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    pool: &rayon::ThreadPool,
    threads: usize,
    lane: Option<usize>,
) -> f64 {
    let blocks = column_blocks(inp.n, threads);
    let partials: Vec<f64> = pool.install(|| {
        blocks
            .par_iter()
            .map(|cols| sum_block(kind, inp, buf, cols.clone(), lane))
            .collect()
    });
    tiled_reduction(&partials)
}

/// Device-style sum: the full n×n grid is covered by B×B tiles; each tile
/// stages its coordinate rows, evaluates all B² cells (the i ≤ j half and
/// out-of-range cells contribute exact zeros), and reduces them on a binary
/// tree. Tile partials reduce per row strip, then strip partials reduce at
/// the top, keeping live partials O(n/B + B²) rather than O((n/B)²).
pub(super) fn sum_tiled(
    kind: SumKind,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    pool: &rayon::ThreadPool,
    b: usize,
) -> f64 {
    let n = inp.n;
    if n == 0 {
        return 0.0;
    }
    let strips = n.div_ceil(b);
    let pd = buf.padded_d();
    let strip_partials: Vec<f64> = pool.install(|| {
        (0..strips)
            .into_par_iter()
            .map_init(
                || TileScratch::new(b, pd, strips),
                |scratch, ti| {
                    scratch.tile_partials.clear();
                    for tj in 0..strips {
                        let tile = tile_sum(kind, inp, buf, ti, tj, b, scratch);
                        scratch.tile_partials.push(tile);
                    }
                    tiled_reduction(&scratch.tile_partials)
                },
            )
            .collect()
    });
    tiled_reduction(&strip_partials)
}

struct TileScratch {
    xi: Vec<f64>,
    xj: Vec<f64>,
    cells: Vec<f64>,
    tile_partials: Vec<f64>,
}

impl TileScratch {
    fn new(b: usize, pd: usize, strips: usize) -> Self {
        TileScratch {
            xi: vec![0.0; b * pd],
            xj: vec![0.0; b * pd],
            cells: vec![0.0; b * b],
            tile_partials: Vec::with_capacity(strips),
        }
    }
}

fn tile_sum(
    kind: SumKind,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    ti: usize,
    tj: usize,
    b: usize,
    scratch: &mut TileScratch,
) -> f64 {
    let n = inp.n;
    let pd = buf.padded_d();
    let i0 = ti * b;
    let j0 = tj * b;
    for bi in 0..b {
        let dst = &mut scratch.xi[bi * pd..(bi + 1) * pd];
        if i0 + bi < n {
            dst.copy_from_slice(buf.row(i0 + bi));
        } else {
            dst.fill(0.0);
        }
    }
    for bj in 0..b {
        let dst = &mut scratch.xj[bj * pd..(bj + 1) * pd];
        if j0 + bj < n {
            dst.copy_from_slice(buf.row(j0 + bj));
        } else {
            dst.fill(0.0);
        }
    }
    for bi in 0..b {
        for bj in 0..b {
            let i = i0 + bi;
            let j = j0 + bj;
            scratch.cells[bi * b + bj] = if i < n && j < n && j < i && inp.mask.is_observed(i, j)
            {
                let xi = &scratch.xi[bi * pd..(bi + 1) * pd];
                let xj = &scratch.xj[bj * pd..(bj + 1) * pd];
                let mut acc = 0.0;
                for k in 0..pd {
                    let diff = xi[k] - xj[k];
                    acc += diff * diff;
                }
                scalar_term(kind, inp.value(i, j), acc.sqrt(), inp.sigma, inp.sigma2)
            } else {
                0.0
            };
        }
    }
    tree_combine_rows(&mut scratch.cells, b * b, 1);
    scratch.cells[0]
}

/// Inner walk used per gradient row.
#[derive(Clone, Copy)]
pub(super) enum RowWalk {
    /// B strided accumulators (accumulator s takes j ≡ s mod B), combined on
    /// a binary tree.
    Strided(usize),
    /// Lane-width packets over contiguous j, Φ through the packet primitive.
    Packets(usize),
}

/// Gradient over all rows: per-row reductions are independent and may run on
/// the pool; each row writes only its own output slice. Returns the count of
/// coincident observed pairs (each unordered pair is seen from both of its
/// rows, so the raw tally is halved).
pub(super) fn gradient_fused(
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    d: usize,
    walk: RowWalk,
    pool: Option<&rayon::ThreadPool>,
) -> GradientMatrix {
    let n = inp.n;
    let mut out = GradientMatrix::zeros(n, d);
    let scratch_len = match walk {
        RowWalk::Strided(b) => b * d,
        RowWalk::Packets(_) => d,
    };
    let doubled: usize = {
        let rows = out.values_mut();
        let run_row = |scratch: &mut Vec<f64>, i: usize, row_out: &mut [f64]| -> usize {
            let coincident = match walk {
                RowWalk::Strided(b) => grad_row_strided(i, b, inp, buf, d, scratch),
                RowWalk::Packets(w) => grad_row_packets(i, w, inp, buf, d, scratch),
            };
            for k in 0..d {
                row_out[k] = -scratch[k];
            }
            coincident
        };
        match pool {
            Some(p) => p.install(|| {
                rows.par_chunks_mut(d)
                    .enumerate()
                    .map_init(
                        || vec![0.0; scratch_len],
                        |scratch, (i, row_out)| run_row(scratch, i, row_out),
                    )
                    .sum()
            }),
            None => {
                let mut scratch = vec![0.0; scratch_len];
                rows.chunks_mut(d)
                    .enumerate()
                    .map(|(i, row_out)| run_row(&mut scratch, i, row_out))
                    .sum()
            }
        }
    };
    debug_assert_eq!(doubled % 2, 0);
    out.record_coincident_pairs(doubled / 2);
    out
}

#[inline]
fn pair_coefficient(y: f64, delta: f64, sigma: f64, sigma2: f64) -> f64 {
    ((delta - y) / sigma2 + inv_mills(delta / sigma) / sigma) / delta
}

/// Row i by B strided accumulators: accumulator s sums partners
/// j ∈ {s, s+B, s+2B, …} \ {i}; the B accumulator vectors then combine on a
/// binary tree. Scratch is b×d, fully overwritten. Returns coincident count.
fn grad_row_strided(
    i: usize,
    b: usize,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    d: usize,
    scratch: &mut [f64],
) -> usize {
    let n = inp.n;
    scratch.fill(0.0);
    let mut coincident = 0usize;
    let xi = buf.row(i);
    for s in 0..b {
        let acc = &mut scratch[s * d..(s + 1) * d];
        let mut j = s;
        while j < n {
            if j != i && inp.mask.is_observed(i, j) {
                let delta = buf.distance(i, j);
                if delta == 0.0 {
                    coincident += 1;
                } else {
                    let coeff =
                        pair_coefficient(inp.value(i, j), delta, inp.sigma, inp.sigma2);
                    let xj = buf.row(j);
                    for k in 0..d {
                        acc[k] += coeff * (xi[k] - xj[k]);
                    }
                }
            }
            j += b;
        }
    }
    tree_combine_rows(scratch, b, d);
    coincident
}

/// Row i by contiguous lane packets over j; the Mills ratio runs through the
/// packet primitive. Scratch is d, fully overwritten.
fn grad_row_packets(
    i: usize,
    lane: usize,
    inp: &SumInputs,
    buf: &PaddedLatentBuffer,
    d: usize,
    scratch: &mut [f64],
) -> usize {
    let n = inp.n;
    scratch.fill(0.0);
    let mut coincident = 0usize;
    let xi = buf.row(i);
    let mut delta = [0.0f64; MAX_LANE_WIDTH];
    let mut mills = [0.0f64; MAX_LANE_WIDTH];
    let mut j = 0;
    while j < n {
        let w = lane.min(n - j);
        for l in 0..w {
            delta[l] = buf.distance(i, j + l);
        }
        for l in 0..w {
            mills[l] = delta[l] / inp.sigma;
        }
        batched_inv_mills(&mut mills[..w]);
        for l in 0..w {
            let jj = j + l;
            if jj == i || !inp.mask.is_observed(i, jj) {
                continue;
            }
            if delta[l] == 0.0 {
                coincident += 1;
                continue;
            }
            let coeff =
                ((delta[l] - inp.value(i, jj)) / inp.sigma2 + mills[l] / inp.sigma) / delta[l];
            let xj = buf.row(jj);
            for k in 0..d {
                scratch[k] += coeff * (xi[k] - xj[k]);
            }
        }
        j += w;
    }
    coincident
}

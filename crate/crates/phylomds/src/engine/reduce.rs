//! Binary-tree reductions.
//!
//! The device-style backend reduces each tile's terms on a binary tree, and
//! the threaded backends combine their per-thread partial sums the same way.
//! The tree shape depends only on the input length, so a given input order
//! always produces the same bits.

/// Pairwise binary-tree sum.
///
/// The input is conceptually padded with zeros to the next power of two,
/// then combined level by level (`buf[k] += buf[k + width]` with halving
/// width). Agrees with a sequential sum up to floating-point reassociation.
pub fn tiled_reduction(partials: &[f64]) -> f64 {
    if partials.len() <= 1 {
        return partials.first().copied().unwrap_or(0.0);
    }
    let width = partials.len().next_power_of_two();
    let mut buf = Vec::with_capacity(width);
    buf.extend_from_slice(partials);
    buf.resize(width, 0.0);
    tree_combine_rows(&mut buf, width, 1);
    buf[0]
}

/// In-place binary-tree combine of `rows` rows of length `row_len`, leaving
/// the total in row 0. `rows` must be a power of two. With `row_len == 1`
/// this is the scalar reduction; the gradient kernels use it to combine
/// strided accumulator vectors.
pub(crate) fn tree_combine_rows(buf: &mut [f64], rows: usize, row_len: usize) {
    debug_assert!(rows.is_power_of_two());
    debug_assert!(buf.len() >= rows * row_len);
    let mut width = rows;
    while width > 1 {
        width /= 2;
        for k in 0..width {
            let (head, tail) = buf.split_at_mut((k + width) * row_len);
            let dst = &mut head[k * row_len..k * row_len + row_len];
            let src = &tail[..row_len];
            for c in 0..row_len {
                dst[c] += src[c];
            }
        }
    }
}

//! Lane-packet transforms.
//!
//! The vectorized backends process pair terms in packets of `lane_width`
//! values and route every Φ evaluation through these primitives. Each lane
//! is evaluated with the same scalar routines as the serial path, so every
//! lane width is available on every host and packet results match the scalar
//! path exactly.

use crate::model::normal::{inv_mills, log_phi};

/// Permitted packet widths.
pub const LANE_WIDTHS: [usize; 4] = [1, 2, 4, 8];

/// Largest permitted lane width; fixed-size packet scratch is sized by it.
pub const MAX_LANE_WIDTH: usize = 8;

/// Element-wise ln Φ over a packet, in place. Finite inputs give finite
/// outputs for arguments as deep as the f64 range allows.
#[inline]
pub fn batched_log_phi(lanes: &mut [f64]) {
    for z in lanes {
        *z = log_phi(*z);
    }
}

/// Element-wise inverse Mills ratio φ/Φ over a packet, in place.
#[inline]
pub fn batched_inv_mills(lanes: &mut [f64]) {
    for z in lanes {
        *z = inv_mills(*z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packet_of_zeros_gives_log_half() {
        for width in LANE_WIDTHS {
            let mut lanes = vec![0.0; width];
            batched_log_phi(&mut lanes);
            for v in lanes {
                assert_eq!(v, 0.5f64.ln());
            }
        }
    }

    #[test]
    fn packet_matches_scalar_path() {
        let inputs = [0.0, 1.0, -1.0, 2.0];
        let mut lanes = inputs;
        batched_log_phi(&mut lanes);
        for (lane, z) in lanes.iter().zip(inputs) {
            let scalar = log_phi(z);
            assert!(
                (lane - scalar).abs() <= 1e-14 * scalar.abs().max(1.0),
                "lane {lane} vs scalar {scalar} at z={z}"
            );
        }
    }

    #[test]
    fn packet_of_deep_tail_values_stays_finite() {
        // ln Φ(-30) = -454.32124395634320 at 50-digit precision.
        let mut lanes = [-30.0; 8];
        batched_log_phi(&mut lanes);
        for v in lanes {
            assert!(v.is_finite());
            assert!(((v + 454.32124395634320) / 454.32124395634320).abs() < 1e-12);
        }
    }

    #[test]
    fn inv_mills_packet_matches_scalar() {
        let inputs = [0.5, 3.0, -2.0, 10.0];
        let mut lanes = inputs;
        batched_inv_mills(&mut lanes);
        for (lane, z) in lanes.iter().zip(inputs) {
            assert_eq!(*lane, inv_mills(z));
        }
    }
}

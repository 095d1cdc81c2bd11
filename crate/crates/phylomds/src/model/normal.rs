//! Stable standard-normal tail functions.
//!
//! The truncated-normal likelihood needs `ln Φ(z)` and the inverse Mills
//! ratio `φ(z)/Φ(z)` far into the lower tail, where the naive route
//! `Φ(z).ln()` underflows to `-inf` near z = -38. Both are rewritten in
//! terms of the scaled complementary error function
//! `erfcx(x) = exp(x²)·erfc(x)`, which stays in a friendly range for all
//! x ≥ 0, so `ln Φ(z) = ln(1/2) - z²/2 + ln erfcx(-z/√2)` is finite for any
//! finite z.
//!
//! erfc and erfcx are evaluated with rational Chebyshev approximations
//! (after W. J. Cody's SPECFUN), accurate to a few ulp in every branch;
//! library erfc implementations that are merely 1e-10 accurate are not good
//! enough for the 1e-12 tail guarantees made here.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// ln √(2π).
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// ln 2π.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// √(2/π).
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// 1/√π.
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Branch point between the direct erfc route and the erfcx route for
/// `log_phi` and `inv_mills`. For z ≥ -1, Φ(z) ≥ 0.158 and the direct route
/// loses nothing; below it the relative error of `Φ.ln()` grows without
/// bound and the erfcx form takes over.
const TAIL_SWITCH: f64 = -1.0;

// Rational approximation coefficients, Cody's CALERF regions:
// |x| ≤ 0.46875 (erf), 0.46875 < x ≤ 4 (erfcx), x > 4 (erfcx via 1/x²).
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERFC_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERFC_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERFC_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERFC_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// erf(x) for |x| ≤ 0.46875.
#[inline]
fn erf_small(x: f64) -> f64 {
    let y = x.abs();
    let ysq = if y > 1.11e-16 { y * y } else { 0.0 };
    let mut num = ERF_A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + ERF_A[i]) * ysq;
        den = (den + ERF_B[i]) * ysq;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// erfcx(y) for 0.46875 < y ≤ 4.
#[inline]
fn erfcx_mid(y: f64) -> f64 {
    let mut num = ERFC_C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + ERFC_C[i]) * y;
        den = (den + ERFC_D[i]) * y;
    }
    (num + ERFC_C[7]) / (den + ERFC_D[7])
}

/// erfcx(y) for y > 4; an expansion in 1/y², valid to arbitrarily large y
/// (the correction vanishes and erfcx → 1/(y√π)).
#[inline]
fn erfcx_large(y: f64) -> f64 {
    let ysq = 1.0 / (y * y);
    let mut num = ERFC_P[5] * ysq;
    let mut den = ysq;
    for i in 0..4 {
        num = (num + ERFC_P[i]) * ysq;
        den = (den + ERFC_Q[i]) * ysq;
    }
    let r = ysq * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
    (FRAC_1_SQRT_PI - r) / y
}

/// exp(-y²) with the argument split so the dominant part is exact.
#[inline]
fn exp_neg_sq(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}

/// Complementary error function, all real x.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let r = if y <= 0.46875 {
        return 1.0 - erf_small(x);
    } else if y <= 4.0 {
        exp_neg_sq(y) * erfcx_mid(y)
    } else if y < 26.6 {
        exp_neg_sq(y) * erfcx_large(y)
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// Scaled complementary error function `exp(x²)·erfc(x)` for x ≥ 0.
/// Stays between 0 and 1 for x ≥ 0 and never under- or overflows.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "erfcx evaluated for non-negative arguments only");
    if x <= 0.46875 {
        (x * x).exp() * (1.0 - erf_small(x))
    } else if x <= 4.0 {
        erfcx_mid(x)
    } else {
        erfcx_large(x)
    }
}

/// Standard normal density φ(z).
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF Φ(z).
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// ln Φ(z), finite for every finite z.
///
/// `Φ(z) = ½ erfc(-z/√2)`, so with x = -z/√2:
/// `ln Φ(z) = ln ½ - x² + ln erfcx(x)`, which never underflows.
#[inline]
pub fn log_phi(z: f64) -> f64 {
    if z >= TAIL_SWITCH {
        normal_cdf(z).ln()
    } else {
        let x = -z * FRAC_1_SQRT_2;
        -std::f64::consts::LN_2 - x * x + erfcx(x).ln()
    }
}

/// Inverse Mills ratio φ(z)/Φ(z), finite and positive for every finite z.
///
/// For z ≥ -1 the direct ratio is safe (Φ ≥ 0.158). Below, substituting
/// erfcx gives `φ/Φ = √(2/π) / erfcx(-z/√2)` with no underflow on either
/// side.
#[inline]
pub fn inv_mills(z: f64) -> f64 {
    if z >= TAIL_SWITCH {
        normal_pdf(z) / normal_cdf(z)
    } else {
        SQRT_2_OVER_PI / erfcx(-z * FRAC_1_SQRT_2)
    }
}

// Scalar math that routes to the platform libm when `std` is present.

#[cfg(any(test, feature = "std"))]
mod imp {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    /// `a * b + c` with a single rounding.
    #[inline(always)]
    pub fn fma(a: f64, b: f64, c: f64) -> f64 {
        a.mul_add(b, c)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline]
    pub fn tanh(x: f64) -> f64 {
        x.tanh()
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline]
    pub fn asinh(x: f64) -> f64 {
        x.asinh()
    }
    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        x.powf(y)
    }
    #[inline]
    pub fn round(x: f64) -> f64 {
        x.round()
    }
}

#[cfg(not(any(test, feature = "std")))]
mod imp {
    pub use libm::{asinh, cos, exp, fma, log as ln, pow as powf, round, sin, sqrt, tanh};
}

pub(crate) use imp::*;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p_unit(exp(-x))
    } else {
        ln_1p_unit(exp(x))
    }
}

/// `ln(1 + e)` for `e` in `[0, 1]` through the cheaper `ln`, with the
/// rounding of `1 + e` compensated to first order.
#[inline]
pub(crate) fn ln_1p_unit(e: f64) -> f64 {
    let u = 1.0 + e;
    if u == 1.0 {
        e
    } else {
        ln(u) - ((u - 1.0) - e) / u
    }
}

/// `e^x` for `x <= 0`, written without branches so that loops over slices
/// vectorize. Results below the normal range flush to zero.
#[inline(always)]
fn exp_nonpositive(x: f64) -> f64 {
    const LOG2E: f64 = core::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let xc = x.max(-708.0);
    let shifted = xc * LOG2E + SHIFTER;
    let n = shifted - SHIFTER;
    let r = fma(-n, LN2_LO, fma(-n, LN2_HI, xc));
    // Taylor series to degree 13; |r| <= ln(2)/2
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = fma(p, r, c);
    }
    // the low mantissa bits of `shifted` hold n in two's complement
    let n_int = shifted.to_bits().wrapping_sub(SHIFTER.to_bits());
    let scale = f64::from_bits(n_int.wrapping_add(1023) << 52);
    if x < -708.0 {
        0.0
    } else {
        p * scale
    }
}

/// `ln(1 + e)` for `e` in `[0, 1]` as `2 atanh(e / (2 + e))`.
#[inline(always)]
fn ln_1p_unit_series(e: f64) -> f64 {
    let s = e / (2.0 + e);
    let s2 = s * s;
    let mut p = 1.0 / 33.0;
    for k in [
        31.0, 29.0, 27.0, 25.0, 23.0, 21.0, 19.0, 17.0, 15.0, 13.0, 11.0, 9.0, 7.0, 5.0, 3.0, 1.0,
    ] {
        p = fma(p, s2, 1.0 / k);
    }
    2.0 * s * p
}

/// Softplus of every entry of `z` in place, with the logistic derivative
/// written to `slope`.
pub(crate) fn softplus_with_slope(z: &mut [f64], slope: &mut [f64]) {
    for (v, d) in z.iter_mut().zip(slope.iter_mut()) {
        let x = *v;
        let e = exp_nonpositive(-x.abs());
        let num = if x >= 0.0 { 1.0 } else { e };
        *d = num / (1.0 + e);
        *v = x.max(0.0) + ln_1p_unit_series(e);
    }
}

/// Logistic function `1 / (1 + e^-x)`, saturating cleanly at both ends.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

//! Scalar abstraction for the numeric kernel.
//!
//! Curve evaluation, the normal CDF, and the root solvers are written
//! against [`Real`] so they work for both `f32` and `f64`. Everything
//! above the kernel (simulator, fitting, verification, CLI) uses the
//! concrete `f64` aliases exported from the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the numeric kernel.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion of an `f64` constant.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    /// Lossy widening to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Overflow-safe softplus `ln(1 + e^x)`, strictly positive for all inputs.
pub fn softplus<S: Real>(x: S) -> S {
    x.abs().neg().exp().ln_1p() + x.max(S::zero())
}

/// Inverse of [`softplus`]: returns `x` with `softplus(x) = y` for `y > 0`.
pub fn softplus_inv<S: Real>(y: S) -> S {
    // ln(e^y - 1) = y + ln(1 - e^-y), stable for large y.
    y + y.neg().exp().neg().ln_1p()
}

/// Logistic sigmoid, the derivative of softplus.
pub fn sigmoid<S: Real>(x: S) -> S {
    let one = S::one();
    if x >= S::zero() {
        one / (one + x.neg().exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_positive_for_large_negative_input() {
        assert!(softplus(-700.0f64) > 0.0);
        assert!(softplus(-40.0f32) > 0.0);
    }

    #[test]
    fn softplus_matches_naive_form_in_safe_range() {
        for &x in &[-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            let naive = (1.0f64 + x.exp()).ln();
            assert!((softplus(x) - naive).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn softplus_linear_for_large_input() {
        let x = 900.0f64;
        assert_eq!(softplus(x), x);
    }

    #[test]
    fn softplus_inverse_round_trip() {
        for &y in &[1e-6, 0.1, 1.0, 17.0, 250.0] {
            let x = softplus_inv(y);
            assert!((softplus(x) - y).abs() <= 1e-12 * y.max(1.0), "y={y}");
        }
    }

    #[test]
    fn sigmoid_is_softplus_slope() {
        for &x in &[-8.0, -1.0, 0.0, 2.5, 9.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((sigmoid(x) - fd).abs() < 1e-8, "x={x}");
        }
    }
}

//! Scalar abstraction shared by the plain `f64` simulation path and the
//! taped reverse-mode path.
//!
//! Simulation code is written once, generic over [`Real`]. Instantiated with
//! `f64` it runs the primal computation; instantiated with
//! [`crate::tape::Var`] it records every operation for the backward pass.
//! Both paths execute identical floating-point operations in identical
//! order, so the taped primal is bit-equal to the plain one.
//!
//! Subgradient conventions at non-smooth points (applied consistently on
//! both paths):
//! - `sqrt` at 0 has derivative 0 (one-sided),
//! - `abs` at 0 has derivative 0,
//! - `max_zero` (i.e. `max(0, x)`) at exactly 0 has derivative 0.

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

// f64 math fns live in std, not core; route through libm for no_std builds.
macro_rules! fmath {
    ($name:ident, $libm:ident) => {
        #[inline]
        pub(crate) fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            return x.$name();
            #[cfg(not(feature = "std"))]
            return libm::$libm(x);
        }
    };
}

pub(crate) mod fm {
    fmath!(sqrt, sqrt);
    fmath!(exp, exp);
    fmath!(ln, log);
    fmath!(sin, sin);
    fmath!(cos, cos);
    fmath!(tanh, tanh);

    #[inline]
    pub(crate) fn abs(x: f64) -> f64 {
        #[cfg(feature = "std")]
        return x.abs();
        #[cfg(not(feature = "std"))]
        return libm::fabs(x);
    }
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    #[cfg(feature = "std")]
    return x.round();
    #[cfg(not(feature = "std"))]
    return libm::round(x);
}

#[inline]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    #[cfg(feature = "std")]
    return y.atan2(x);
    #[cfg(not(feature = "std"))]
    return libm::atan2(y, x);
}

/// Differentiable scalar. `f64` gives the primal path; [`crate::tape::Var`]
/// gives the recorded path.
///
/// Mixed `T op f64` arithmetic treats the `f64` side as a constant with zero
/// derivative. Branch decisions in generic code must compare [`Real::primal`]
/// values, which makes the branch pattern part of the primal computation.
pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Current numeric value, used for branching and diagnostics.
    fn primal(self) -> f64;

    /// A constant in the same context as `self` (same tape, no derivative).
    fn lift(self, value: f64) -> Self;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;

    /// `max(0, self)` with derivative 0 at exactly 0.
    fn max_zero(self) -> Self;

    #[inline]
    fn sq(self) -> Self {
        self * self
    }

    #[inline]
    fn recip(self) -> Self {
        self.lift(1.0) / self
    }

    /// Branchless-convention minimum: picks by primal comparison.
    #[inline]
    fn min_val(self, other: Self) -> Self {
        if self.primal() <= other.primal() {
            self
        } else {
            other
        }
    }

    /// Branchless-convention maximum: picks by primal comparison.
    #[inline]
    fn max_val(self, other: Self) -> Self {
        if self.primal() >= other.primal() {
            self
        } else {
            other
        }
    }
}

impl Real for f64 {
    #[inline]
    fn primal(self) -> f64 {
        self
    }

    #[inline]
    fn lift(self, value: f64) -> f64 {
        value
    }

    #[inline]
    fn sqrt(self) -> f64 {
        fm::sqrt(self)
    }

    #[inline]
    fn exp(self) -> f64 {
        fm::exp(self)
    }

    #[inline]
    fn ln(self) -> f64 {
        fm::ln(self)
    }

    #[inline]
    fn sin(self) -> f64 {
        fm::sin(self)
    }

    #[inline]
    fn cos(self) -> f64 {
        fm::cos(self)
    }

    #[inline]
    fn tanh(self) -> f64 {
        fm::tanh(self)
    }

    #[inline]
    fn abs(self) -> f64 {
        fm::abs(self)
    }

    #[inline]
    fn max_zero(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
}

/// `tanh(k*s)/s`, the smooth friction saturation factor, with the Taylor
/// limit `k*(1 - (k*s)^2/3)` for small `s` so the value and derivative stay
/// finite as `s -> 0`.
#[inline]
pub fn tanh_over<T: Real>(k: T, s: T) -> T {
    if s.primal() < 1e-8 {
        let u = k * s;
        k * (-(u * u) * (1.0 / 3.0) + 1.0)
    } else {
        (k * s).tanh() / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_real_basics() {
        let x: f64 = 2.0;
        assert_eq!(x.primal(), 2.0);
        assert_eq!(x.lift(7.5), 7.5);
        assert_eq!((-3.0f64).max_zero(), 0.0);
        assert_eq!(3.0f64.max_zero(), 3.0);
        assert_eq!(0.0f64.max_zero(), 0.0);
        assert_eq!(2.0f64.min_val(3.0), 2.0);
        assert_eq!(2.0f64.max_val(3.0), 3.0);
    }

    #[test]
    fn tanh_over_matches_direct_form_and_limit() {
        let k = 50.0;
        for &s in &[1e-3, 0.1, 2.0] {
            let direct = (k * s as f64).tanh() / s;
            assert!((tanh_over(k, s) - direct).abs() < 1e-12);
        }
        // Small-s limit tends to k.
        assert!((tanh_over(k, 1e-12) - k).abs() / k < 1e-9);
    }
}

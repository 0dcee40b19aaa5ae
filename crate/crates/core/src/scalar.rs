//! Scalar abstraction shared by the analytic modules.
//!
//! Closed forms, the Airy evaluator, quadrature and the minimizers are
//! written against [`Real`] so they run in `f32` or `f64`. The Monte Carlo
//! kernels are `f64` only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard normal CDF.
    #[inline]
    fn norm_cdf(self) -> Self {
        Self::lit(0.5) * (-self / Self::SQRT_2()).erfc()
    }

    /// Standard normal survival function, `1 - Φ(x)` without cancellation.
    #[inline]
    fn norm_sf(self) -> Self {
        Self::lit(0.5) * (self / Self::SQRT_2()).erfc()
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

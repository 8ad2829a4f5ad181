//! Scalar abstraction shared by every numerical module.
//!
//! The numerical core is written once against [`Real`] and instantiated for
//! `f64` (the default used by the pipeline and CLI) and `f32`. Linear algebra
//! goes through `nalgebra::RealField`; conversions to and from literals and
//! reporting values go through `num-traits`.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the identification pipeline.
pub trait Real:
    RealField + Copy + Debug + Display + FromStr + Default + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Machine epsilon of the type, as an `f64`.
    const EPS: f64;

    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// A tolerance of `base`, raised to `100·EPS` for low-precision types.
    #[inline]
    fn tol(base: f64) -> Self {
        Self::lit(base.max(100.0 * Self::EPS))
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f64 {
    const EPS: f64 = f64::EPSILON;
}

impl Real for f32 {
    const EPS: f64 = f32::EPSILON as f64;
}

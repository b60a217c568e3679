//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`) usable throughout the crate.
///
/// Elementary functions come from [`nalgebra::RealField`]; conversions to and
/// from `f64` literals go through `num-traits`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn nan() -> Self {
        Self::lit(f64::NAN)
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn finite(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Machine epsilon of `T`.
#[inline]
pub fn eps<T: Real>() -> T {
    T::default_epsilon()
}

pub(crate) fn to_f64_vec<T: Real>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.to_f64_lossy()).collect()
}

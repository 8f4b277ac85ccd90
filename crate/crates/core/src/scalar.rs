//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the metric, SVCCA and analysis routines.
///
/// Implemented for `f32` and `f64`. All reported tolerances assume `f64`;
/// `f32` is supported for memory-bound activation work.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as a real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub(crate) fn mean<T: Real>(xs: impl ExactSizeIterator<Item = T>) -> Option<T> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let sum = xs.fold(T::zero(), |acc, x| acc + x);
    Some(sum / T::from_count(n))
}

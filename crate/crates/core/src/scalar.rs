//! Numeric traits the statistics and weighting code is written against.
//!
//! [`Real`] covers the floating point types (`f32`, `f64`) and is what the
//! correlation, error, weighting and regression routines need. [`Field`] only
//! asks for exact field arithmetic, so the agreement statistics can also be
//! evaluated over [`crate::Rational`] when the inputs are integer ratings.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumAssign, Signed, ToPrimitive};

/// Ordered field with conversions from machine numbers.
pub trait Field: Num + Signed + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive {}

impl<T> Field for T where T: Num + Signed + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive {}

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Field + Float + NumAssign + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into `T`.
///
/// Only used for literals that every supported scalar can represent.
pub(crate) fn lit<T: FromPrimitive>(value: f64) -> T {
    T::from_f64(value).expect("literal representable in scalar type")
}

pub(crate) fn from_usize<T: FromPrimitive>(value: usize) -> T {
    T::from_usize(value).expect("count representable in scalar type")
}

/// Rounds to three decimal places, half away from zero.
pub fn round3<T: Real>(value: T) -> T {
    let scale: T = lit(1000.0);
    (value * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round3_matches_display_rounding() {
        assert_eq!(round3(0.5804_f64), 0.58);
        assert_eq!(round3(0.6626_f64), 0.663);
        assert_eq!(round3(0.77_f32), 0.77_f32);
        assert_eq!(round3(-0.3033_f64), -0.303);
    }
}

//! Scalar abstraction for the numeric core.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. Keep tolerances in mind when
/// instantiating with `f32`: the default power-flow tolerance of 1e-8 is
/// below single-precision resolution and must be relaxed.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Shorthand for lifting an `f64` constant into the scalar type.
#[inline]
pub fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

/// Lossy conversion back to `f64` for reporting.
#[inline]
pub fn f<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}

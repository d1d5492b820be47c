//! Generic scalar trait for the numerical core.
//!
//! All core math is written against [`Scalar`] so that the same code runs in
//! `f32` or `f64`. The crate root exports `f64` type aliases, which is what
//! the experiment harness and the CLI use.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar used throughout the numerical core.
pub trait Scalar: Float + FromPrimitive + NumAssign + Debug + Display + Send + Sync + 'static {
    /// Lossless-enough conversion from `f64` literals (tolerances, constants).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

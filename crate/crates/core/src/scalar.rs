//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All kinematics, dynamics and optimization code is written against [`Real`]
//! so it runs on `f32`, `f64`, and on [`Dual`](crate::dual::Dual) numbers when
//! exact derivatives of the prediction model are needed.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar usable inside `nalgebra` containers.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + nalgebra::Scalar
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts a literal. Panics only if the target cannot represent any
    /// finite `f64`, which never happens for the provided impls.
    fn lit(x: f64) -> Self;

    /// Value without derivative information (identity for plain floats).
    fn re(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn re(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn re(self) -> f64 {
        self as f64
    }
}

/// Standard gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;

#[inline]
pub fn gravity<T: Real>() -> T {
    T::lit(GRAVITY)
}

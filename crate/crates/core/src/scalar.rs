//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the classifier, policy network and optimizer run on: f32 or f64.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, panicking only if the type cannot represent finite values.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact conversion from an on-disk 32-bit value.
    #[inline]
    fn from_f32_exact(x: f32) -> Self {
        Self::from_f32(x).expect("f32 representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero vectors have cosine 0 with everything.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    (dot(a, b) / (na * nb)).max(-T::one()).min(T::one())
}

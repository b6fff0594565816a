//! Scalar abstraction.
//!
//! Every geometric and objective routine in the crate is written once over
//! [`Real`], then evaluated either with plain floats (`f64`/`f32`) or with the
//! reverse-mode [`Var`](crate::ad::Var) when gradients are needed.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Lifts a constant into the scalar type.
    fn lit(v: f64) -> Self;

    /// Primal value as `f64`.
    fn value(self) -> f64;

    /// `bias + Σ coeffs[i]·xs[i]` with constant coefficients.
    fn affine(bias: Self, coeffs: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), xs.len());
        coeffs
            .iter()
            .zip(xs)
            .fold(bias, |acc, (&c, &x)| acc + Self::lit(c) * x)
    }

    /// `Σ a[i]·b[i]`.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(Self::zero(), |acc, (&x, &y)| acc + x * y)
    }

    fn sum_all(xs: &[Self]) -> Self {
        xs.iter().fold(Self::zero(), |acc, &x| acc + x)
    }

    /// Euclidean norm. The derivative at the origin is taken as zero.
    fn norm(xs: &[Self]) -> Self {
        Self::dot(xs, xs).sqrt()
    }

    /// A scalar with known `value` and partials `d value / d xs[i]`,
    /// evaluated elsewhere in plain floats.
    fn custom(value: f64, partials: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(partials.len(), xs.len());
        let _ = (partials, xs);
        Self::lit(value)
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn value(self) -> f64 {
        self as f64
    }
}

/// Lifts a slice of constants.
pub fn lift<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::lit(x)).collect()
}

/// Primal values of a slice.
pub fn values<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.value()).collect()
}

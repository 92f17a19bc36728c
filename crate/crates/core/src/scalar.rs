//! Scalar abstraction shared by the probability formulas and closed-form
//! distributions.
//!
//! The mark/drop probability functions only need field arithmetic and an
//! ordering, so they are written against [`Scalar`] and run unchanged on
//! `f32`, `f64` and exact rationals such as `num_rational::Ratio<i64>`.
//! Anything that needs transcendental functions (the rate estimator, the
//! Monte Carlo machinery) is bounded on [`num_traits::Float`] instead.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type usable by the probability and distribution formulas.
pub trait Scalar: Copy + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive {
    /// Converts a packet count into the scalar domain.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("packet count not representable in scalar type")
    }

    /// `1/2`, used by the uniformization law.
    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl<T> Scalar for T where T: Copy + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive {}

/// Clamps `x` into the closed unit interval.
pub fn clamp_unit<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        S::zero()
    } else if x > S::one() {
        S::one()
    } else {
        x
    }
}

pub(crate) fn max<S: Scalar>(a: S, b: S) -> S {
    if a < b {
        b
    } else {
        a
    }
}

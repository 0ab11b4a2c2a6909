//! Numeric field used by the tap recursions.
//!
//! Everything that has to run both in `f64` and in exact rational arithmetic
//! is written against [`Scalar`]. The rational instance is what the
//! dynamical-system tap oracle uses, since that recursion amplifies rounding.

use num::traits::{FromPrimitive, Num, Signed, ToPrimitive};
use num::BigRational;
use std::fmt::Debug;

pub trait Scalar: Num + Signed + Clone + Debug + FromPrimitive + ToPrimitive + PartialOrd {
    /// Exact conversion for the rational instance, identity for `f64`.
    fn from_f64_exact(x: f64) -> Self {
        Self::from_f64(x).expect("finite input")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer fits")
    }
}

impl Scalar for f64 {}
impl Scalar for BigRational {}

pub type Rational = BigRational;

pub fn rat(x: f64) -> Rational {
    Rational::from_f64_exact(x)
}

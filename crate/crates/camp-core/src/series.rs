//! Truncated power series in the lag variable.
//!
//! A `Series` of horizon `T` stores `c_0..=c_T`. Reads outside that window
//! return zero, which is the negative-index convention every recursion in
//! the crate relies on. Products are truncated at `T`.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(usize, usize),
    #[error("series has zero constant term and cannot be inverted")]
    NotInvertible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series<S = f64> {
    coeffs: Vec<S>,
}

impl<S: Scalar> Series<S> {
    pub fn zeros(horizon: usize) -> Self {
        Self { coeffs: vec![S::zero(); horizon + 1] }
    }

    /// Unit impulse `δ_{t,0}`.
    pub fn identity(horizon: usize) -> Self {
        let mut s = Self::zeros(horizon);
        s.coeffs[0] = S::one();
        s
    }

    /// Pads with zeros or truncates to the requested horizon.
    pub fn from_slice(c: &[S], horizon: usize) -> Self {
        let mut s = Self::zeros(horizon);
        for (dst, src) in s.coeffs.iter_mut().zip(c) {
            *dst = src.clone();
        }
        s
    }

    pub fn horizon(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<S> {
        self.coeffs
    }

    /// Coefficient at a signed lag, zero outside `[0, T]`.
    pub fn at(&self, t: isize) -> S {
        if t < 0 {
            return S::zero();
        }
        self.coeffs.get(t as usize).cloned().unwrap_or_else(S::zero)
    }

    pub fn set(&mut self, t: usize, v: S) {
        self.coeffs[t] = v;
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self::from_slice(&self.coeffs, horizon)
    }

    fn check(&self, other: &Self) -> Result<(), SeriesError> {
        if self.horizon() != other.horizon() {
            return Err(SeriesError::HorizonMismatch(self.horizon(), other.horizon()));
        }
        Ok(())
    }

    pub fn convolve(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let n = self.coeffs.len();
        let mut out = vec![S::zero(); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs[..n - i].iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Ok(Self { coeffs: out })
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    fn zip(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| f(a.clone(), b.clone()))
            .collect();
        Self { coeffs }
    }

    pub fn scale(&self, k: &S) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.clone() * k.clone()).collect() }
    }

    /// Multiplication by `z^{-k}`: `(shift a)_t = a_{t-k}`.
    pub fn shift(&self, k: usize) -> Self {
        let mut out = Self::zeros(self.horizon());
        for t in k..self.coeffs.len() {
            out.coeffs[t] = self.coeffs[t - k].clone();
        }
        out
    }

    /// `(1 - z^{-1}) a`, i.e. `a_t - a_{t-1}`.
    pub fn difference(&self) -> Self {
        self.zip(&self.shift(1), |a, b| a - b)
    }

    /// Solves `self * x = num` for `x` by forward substitution.
    pub fn divide(num: &Self, den: &Self) -> Result<Self, SeriesError> {
        num.check(den)?;
        if den.coeffs[0].is_zero() {
            return Err(SeriesError::NotInvertible);
        }
        let n = num.coeffs.len();
        let mut x: Vec<S> = Vec::with_capacity(n);
        for t in 0..n {
            let mut acc = num.coeffs[t].clone();
            for tau in 1..=t {
                acc = acc - den.coeffs[tau].clone() * x[t - tau].clone();
            }
            x.push(acc / den.coeffs[0].clone());
        }
        Ok(Self { coeffs: x })
    }

    /// `exp(self)` for a series with zero constant term, via `t e_t = Σ k s_k e_{t-k}`.
    pub fn exp_nilpotent(&self) -> Self {
        let n = self.coeffs.len();
        let mut e = vec![S::zero(); n];
        e[0] = S::one();
        for t in 1..n {
            let mut acc = S::zero();
            for k in 1..=t {
                acc = acc + S::from_int(k as i64) * self.coeffs[k].clone() * e[t - k].clone();
            }
            e[t] = acc / S::from_int(t as i64);
        }
        Self { coeffs: e }
    }

    /// Evaluates `Σ_j c_j X^j` for a nilpotent `X` (zero constant term).
    pub fn compose_into(outer: &[S], inner: &Self) -> Self {
        let h = inner.horizon();
        let mut out = Self::zeros(h);
        let mut power = Self::identity(h);
        for (j, c) in outer.iter().enumerate() {
            if j > h {
                break;
            }
            if j > 0 {
                power = power.convolve(inner).expect("same horizon");
            }
            for t in 0..=h {
                out.coeffs[t] = out.coeffs[t].clone() + c.clone() * power.coeffs[t].clone();
            }
        }
        out
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&S) -> U) -> Series<U> {
        Series { coeffs: self.coeffs.iter().map(f).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a.clone() - b.clone()).abs().to_f64_lossy())
            .fold(0.0, f64::max)
    }
}

impl Series<f64> {
    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least c_0");
        Self { coeffs }
    }

    pub fn to_exact(&self) -> Series<crate::scalar::Rational> {
        self.map(|c| crate::scalar::rat(*c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Series {
        Series::from_vec(v.to_vec())
    }

    #[test]
    fn impulse_is_identity() {
        let b = s(&[0.3, -1.0, 2.0, 5.0]);
        assert_eq!(Series::identity(3).convolve(&b).unwrap(), b);
    }

    #[test]
    fn binomial_square() {
        let a = s(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(a.convolve(&a).unwrap(), s(&[1.0, 2.0, 1.0, 0.0]));
    }

    #[test]
    fn shift_by_one() {
        assert_eq!(s(&[1.0, 2.0, 3.0]).shift(1), s(&[0.0, 1.0, 2.0]));
    }

    #[test]
    fn negative_and_overflow_reads_are_zero() {
        let a = s(&[1.0, 2.0]);
        assert_eq!(a.at(-1), 0.0);
        assert_eq!(a.at(5), 0.0);
    }

    #[test]
    fn horizon_mismatch_is_an_error() {
        let e = s(&[1.0, 2.0]).convolve(&s(&[1.0])).unwrap_err();
        assert_eq!(e, SeriesError::HorizonMismatch(1, 0));
    }

    #[test]
    fn exp_of_linear_term() {
        let e = s(&[0.0, 2.0, 0.0, 0.0, 0.0]).exp_nilpotent();
        let want = [1.0, 2.0, 2.0, 4.0 / 3.0, 2.0 / 3.0];
        for (a, b) in e.coeffs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn divide_inverts_convolve() {
        let a = s(&[1.0, -0.5, 0.25, 3.0]);
        let b = s(&[2.0, 1.0, 0.0, -1.0]);
        let c = a.convolve(&b).unwrap();
        let back = Series::divide(&c, &b).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-14);
    }

    fn series(h: usize) -> impl Strategy<Value = Series> {
        prop::collection::vec(-3.0..3.0f64, h + 1).prop_map(Series::from_vec)
    }

    proptest! {
        #[test]
        fn convolution_commutes(a in series(8), b in series(8)) {
            let ab = a.convolve(&b).unwrap();
            let ba = b.convolve(&a).unwrap();
            prop_assert!(ab.max_abs_diff(&ba) < 1e-12);
        }

        #[test]
        fn convolution_associates(a in series(8), b in series(8), c in series(8)) {
            let l = a.convolve(&b).unwrap().convolve(&c).unwrap();
            let r = a.convolve(&b.convolve(&c).unwrap()).unwrap();
            prop_assert!(l.max_abs_diff(&r) < 1e-10);
        }
    }
}

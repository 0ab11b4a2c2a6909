//! Asymptotic spectrum of `AᵀA` for the supported sensing ensembles.
//!
//! Each model exposes its eigenvalue moments (floating and exact), the
//! η-transform with its inverse, and the R-transform. The R-transform of a
//! general ensemble is obtained by solving `s η(s) = -x` and using
//! `R(x) = (1/η(s) - 1)/s`.

use crate::roots::bisect;
use crate::scalar::{rat, Rational, Scalar};
use num::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("invalid spectral parameter: {0}")]
    InvalidParameter(String),
    #[error("argument {u} outside the η range ({lo}, {hi}]")]
    OutOfRange { u: f64, lo: f64, hi: f64 },
    #[error("R-transform root not bracketed for x = {x}: searched s in [{lo}, {hi}]")]
    RootNotBracketed { x: f64, lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ensemble {
    /// Entries with mean `sqrt(γ/M)` and variance `(1-γ)/M`. The rank-one
    /// mean does not move the limiting spectrum; `mean_weight` is kept for
    /// instance generation only.
    IidGaussian { mean_weight: f64 },
    /// `M` identical singular values `δ^{-1/2}`.
    RowOrthogonal,
    /// Geometric singular-value ladder with condition number `kappa`.
    Geometric { kappa: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralModel {
    pub delta: f64,
    pub kind: Ensemble,
}

/// Below this |x| the R-transform is summed from free cumulants instead of
/// the implicit relation, which cancels catastrophically near zero.
const R_SERIES_RADIUS: f64 = 1e-4;
const R_SERIES_TERMS: usize = 12;
const ROOT_TOL: f64 = 1e-12;

impl SpectralModel {
    pub fn new(delta: f64, kind: Ensemble) -> Result<Self, SpectraError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(SpectraError::InvalidParameter(format!("delta = {delta} not in (0, 1]")));
        }
        match kind {
            Ensemble::IidGaussian { mean_weight } if !(0.0..1.0).contains(&mean_weight) => {
                return Err(SpectraError::InvalidParameter(format!(
                    "mean weight {mean_weight} not in [0, 1)"
                )))
            }
            Ensemble::Geometric { kappa } if !(kappa > 1.0) || !kappa.is_finite() => {
                return Err(SpectraError::InvalidParameter(format!(
                    "condition number {kappa} must exceed 1; use the row-orthogonal ensemble for kappa = 1"
                )))
            }
            _ => {}
        }
        Ok(Self { delta, kind })
    }

    pub fn iid_gaussian(delta: f64) -> Result<Self, SpectraError> {
        Self::new(delta, Ensemble::IidGaussian { mean_weight: 0.0 })
    }

    pub fn row_orthogonal(delta: f64) -> Result<Self, SpectraError> {
        Self::new(delta, Ensemble::RowOrthogonal)
    }

    pub fn geometric(kappa: f64, delta: f64) -> Result<Self, SpectraError> {
        Self::new(delta, Ensemble::Geometric { kappa })
    }

    /// Geometric for `kappa > 1`, row-orthogonal at `kappa == 1`.
    pub fn from_condition_number(kappa: f64, delta: f64) -> Result<Self, SpectraError> {
        if kappa == 1.0 {
            Self::row_orthogonal(delta)
        } else {
            Self::geometric(kappa, delta)
        }
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            Ensemble::IidGaussian { .. } => "iid_gaussian",
            Ensemble::RowOrthogonal => "row_orthogonal",
            Ensemble::Geometric { .. } => "geometric",
        }
    }

    pub fn condition_number(&self) -> f64 {
        match self.kind {
            Ensemble::Geometric { kappa } => kappa,
            Ensemble::RowOrthogonal => 1.0,
            Ensemble::IidGaussian { .. } => {
                let r = self.delta.sqrt();
                if self.delta == 1.0 {
                    f64::INFINITY
                } else {
                    (1.0 + r) / (1.0 - r)
                }
            }
        }
    }

    /// `C = 2 ln κ / δ` of the geometric law.
    fn geometric_c(&self, kappa: f64) -> f64 {
        2.0 * kappa.ln() / self.delta
    }

    pub fn lambda_max(&self) -> f64 {
        match self.kind {
            Ensemble::IidGaussian { .. } => (1.0 + 1.0 / self.delta.sqrt()).powi(2),
            Ensemble::RowOrthogonal => 1.0 / self.delta,
            Ensemble::Geometric { kappa } => {
                let c = self.geometric_c(kappa);
                c / (1.0 - kappa.powi(-2))
            }
        }
    }

    /// Moments `μ_0..=μ_order` in double precision.
    pub fn moments(&self, order: usize) -> Vec<f64> {
        match self.kind {
            Ensemble::IidGaussian { .. } => {
                let kappas: Vec<f64> =
                    (0..=order).map(|s| if s == 0 { 0.0 } else { self.delta.powi(1 - s as i32) }).collect();
                moments_from_cumulants(&kappas)
            }
            Ensemble::RowOrthogonal => {
                (0..=order).map(|j| if j == 0 { 1.0 } else { self.delta.powi(1 - j as i32) }).collect()
            }
            Ensemble::Geometric { kappa } => {
                let c = self.geometric_c(kappa);
                let base = c / (1.0 - kappa.powi(-2));
                (0..=order)
                    .map(|j| {
                        if j == 0 {
                            1.0
                        } else {
                            let jf = j as f64;
                            base.powi(j as i32) * (1.0 - kappa.powi(-2 * j as i32)) / (c * jf)
                        }
                    })
                    .collect()
            }
        }
    }

    /// Moments in exact rational arithmetic. The real parameters (`δ`, and
    /// `C`, `κ^{-2}` for the geometric law) are taken at their exact binary
    /// values, after which every operation is exact.
    pub fn moments_exact(&self, order: usize) -> Vec<Rational> {
        let delta = rat(self.delta);
        match self.kind {
            Ensemble::IidGaussian { .. } => {
                let inv = Rational::one() / delta;
                let mut kappas = vec![Rational::zero(); order + 1];
                let mut pow = Rational::one();
                for s in kappas.iter_mut().skip(1) {
                    *s = pow.clone();
                    pow = pow * inv.clone();
                }
                moments_from_cumulants(&kappas)
            }
            Ensemble::RowOrthogonal => {
                let inv = Rational::one() / delta;
                let mut out = vec![Rational::one()];
                let mut pow = Rational::one();
                for _ in 1..=order {
                    out.push(pow.clone());
                    pow = pow * inv.clone();
                }
                out
            }
            Ensemble::Geometric { .. } => {
                let (c, kappa2) = self.geometric_exact_params().expect("geometric");
                let k2 = Rational::one() / kappa2;
                let base = c.clone() / (Rational::one() - k2.clone());
                let mut out = vec![Rational::one()];
                let mut bj = Rational::one();
                let mut kj = Rational::one();
                for j in 1..=order {
                    bj = bj * base.clone();
                    kj = kj * k2.clone();
                    let jr = Rational::from_int(j as i64);
                    out.push(bj.clone() * (Rational::one() - kj.clone()) / (c.clone() * jr));
                }
                out
            }
        }
    }

    /// `(C, κ²)` as exact rationals. Moments and closed-form taps built from
    /// these share one exact parameterization, so identities between them
    /// hold without rounding.
    pub fn geometric_exact_params(&self) -> Option<(Rational, Rational)> {
        match self.kind {
            Ensemble::Geometric { kappa } => Some((rat(self.geometric_c(kappa)), rat(kappa * kappa))),
            _ => None,
        }
    }

    /// Free cumulants `κ_1..=κ_order` (index 0 unused and zero).
    pub fn free_cumulants(&self, order: usize) -> Vec<f64> {
        cumulants_from_moments(&self.moments(order))
    }

    /// `η(x) = E[1/(1 + xλ)]` for `x ≥ 0`.
    pub fn eta(&self, x: f64) -> f64 {
        let d = self.delta;
        match self.kind {
            Ensemble::IidGaussian { .. } => {
                let b = d + x * (d - 1.0);
                2.0 * d / (b + (b * b + 4.0 * x * d).sqrt())
            }
            Ensemble::RowOrthogonal => 1.0 - d + d * d / (d + x),
            Ensemble::Geometric { kappa } => {
                let c = self.geometric_c(kappa);
                let k2 = kappa * kappa;
                // ln((k2-1+k2 C x)/(k2-1+C x)) = ln1p(k2 C x/(k2-1)) - ln1p(C x/(k2-1))
                let a = c * x / (k2 - 1.0);
                1.0 - ((k2 * a).ln_1p() - a.ln_1p()) / c
            }
        }
    }

    /// Infimum of `η` over `x ≥ 0`: the mass of the zero eigenvalue, `1 - δ`.
    /// The infimum is not attained, so the range is `(1 - δ, 1]`.
    pub fn eta_range_min(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn eta_inverse(&self, u: f64) -> Result<f64, SpectraError> {
        let lo = self.eta_range_min();
        if !(u > lo && u <= 1.0) {
            return Err(SpectraError::OutOfRange { u, lo, hi: 1.0 });
        }
        let d = self.delta;
        match self.kind {
            Ensemble::RowOrthogonal => Ok(d * d / (u - 1.0 + d) - d),
            Ensemble::Geometric { kappa } => {
                let c = self.geometric_c(kappa);
                let k2 = kappa * kappa;
                let e = (c * (1.0 - u)).exp();
                let den = c * (k2 - e);
                if den <= 0.0 {
                    return Err(SpectraError::OutOfRange { u, lo, hi: 1.0 });
                }
                Ok((k2 - 1.0) * (c * (1.0 - u)).exp_m1() / den)
            }
            Ensemble::IidGaussian { .. } => {
                // η is strictly decreasing; grow the bracket until it straddles u.
                let mut hi = 1.0;
                while self.eta(hi) > u {
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return Err(SpectraError::OutOfRange { u, lo, hi: 1.0 });
                    }
                }
                bisect(|x| self.eta(x) - u, 0.0, hi, 1e-15)
                    .ok_or(SpectraError::OutOfRange { u, lo, hi: 1.0 })
            }
        }
    }

    /// R-transform. Closed form for the Gaussian ensemble, implicit solve otherwise.
    pub fn r_transform(&self, x: f64) -> Result<f64, SpectraError> {
        match self.kind {
            Ensemble::IidGaussian { .. } => {
                if x >= self.delta {
                    return Err(SpectraError::InvalidParameter(format!(
                        "R-transform pole: x = {x} >= delta"
                    )));
                }
                Ok(self.delta / (self.delta - x))
            }
            _ => self.r_transform_implicit(x),
        }
    }

    /// R-transform through `η(s) = 1/(1 + s R(-s η(s)))`, valid for every ensemble.
    pub fn r_transform_implicit(&self, x: f64) -> Result<f64, SpectraError> {
        if x.abs() < R_SERIES_RADIUS {
            let k = self.free_cumulants(R_SERIES_TERMS + 1);
            let mut acc = 0.0;
            for j in (0..=R_SERIES_TERMS).rev() {
                acc = acc * x + k[j + 1];
            }
            return Ok(acc);
        }
        let target = |s: f64| s * self.eta_signed(s) + x;
        let s = if x < 0.0 {
            let mut hi = -x;
            let mut tries = 0;
            while target(hi) < 0.0 {
                hi *= 2.0;
                tries += 1;
                if tries > 1100 || !hi.is_finite() {
                    return Err(SpectraError::RootNotBracketed { x, lo: 0.0, hi });
                }
            }
            bisect(target, 0.0, hi, ROOT_TOL * 1e-3)
                .ok_or(SpectraError::RootNotBracketed { x, lo: 0.0, hi })?
        } else {
            let edge = -1.0 / self.lambda_max();
            let lo = edge * (1.0 - 1e-14);
            if target(lo) > 0.0 {
                return Err(SpectraError::RootNotBracketed { x, lo, hi: 0.0 });
            }
            bisect(target, lo, 0.0, ROOT_TOL * 1e-3)
                .ok_or(SpectraError::RootNotBracketed { x, lo, hi: 0.0 })?
        };
        Ok((1.0 / self.eta_signed(s) - 1.0) / s)
    }

    /// η continued to `x ∈ (-1/λ_max, 0)` where the closed forms stay real.
    fn eta_signed(&self, x: f64) -> f64 {
        if x >= 0.0 {
            return self.eta(x);
        }
        let d = self.delta;
        match self.kind {
            Ensemble::IidGaussian { .. } => {
                // Branch continuous with η(0) = 1.
                let b = d + x * (d - 1.0);
                let disc = (b * b + 4.0 * x * d).max(0.0);
                2.0 * d / (b + disc.sqrt())
            }
            Ensemble::RowOrthogonal => 1.0 - d + d * d / (d + x),
            Ensemble::Geometric { kappa } => {
                let c = self.geometric_c(kappa);
                let k2 = kappa * kappa;
                let a = c * x / (k2 - 1.0);
                1.0 - ((k2 * a).ln_1p() - a.ln_1p()) / c
            }
        }
    }

    /// `γ̄^{-1} = N^{-1} Σ_m σ_m² / (σ² + v σ_m²)` in the large-system limit,
    /// written through η as `(1 - η(v/σ²))/v`.
    pub fn lmmse_gamma_inv(&self, v: f64, sigma2: f64) -> f64 {
        if v <= 0.0 {
            return 1.0 / sigma2;
        }
        let x = v / sigma2;
        if x < 1e-6 {
            // 1 - η(x) = μ_1 x - μ_2 x² + ...
            let m = self.moments(3);
            return (m[1] - m[2] * x + m[3] * x * x) / sigma2;
        }
        (1.0 - self.eta(x)) / v
    }
}

/// Moments from free cumulants via `M(x) = 1 + Σ_s κ_s x^s M(x)^s`.
/// `kappas[0]` is ignored.
pub fn moments_from_cumulants<S: Scalar>(kappas: &[S]) -> Vec<S> {
    let n_max = kappas.len() - 1;
    let mut m = vec![S::one()];
    for n in 1..=n_max {
        let mut total = S::zero();
        // power = M^s truncated at degree n-1, with M known up to degree n-1
        let mut power = vec![S::zero(); n];
        power[0] = S::one();
        for s in 1..=n {
            power = truncated_mul(&power, &m, n);
            total = total + kappas[s].clone() * power[n - s].clone();
        }
        m.push(total);
    }
    m
}

/// Inverse of [`moments_from_cumulants`].
pub fn cumulants_from_moments<S: Scalar>(moments: &[S]) -> Vec<S> {
    let n_max = moments.len() - 1;
    let mut k = vec![S::zero(); n_max + 1];
    for n in 1..=n_max {
        let m = &moments[..n];
        let mut rest = S::zero();
        let mut power = vec![S::zero(); n];
        power[0] = S::one();
        for s in 1..n {
            power = truncated_mul(&power, m, n);
            rest = rest + k[s].clone() * power[n - s].clone();
        }
        k[n] = moments[n].clone() - rest;
    }
    k
}

fn truncated_mul<S: Scalar>(a: &[S], b: &[S], len: usize) -> Vec<S> {
    let mut out = vec![S::zero(); len];
    for (i, x) in a.iter().enumerate().take(len) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(len - i) {
            out[i + j] = out[i + j].clone() + x.clone() * y.clone();
        }
    }
    out
}

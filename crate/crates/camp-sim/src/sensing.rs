//! Sensing operators `A = diag(σ_0, …, σ_{M-1}, 0) Vᵀ` with `Vᵀ` a
//! row-permuted Hadamard matrix, plus a dense i.i.d. Gaussian fallback.

use crate::fwht::fwht_in_place;
use camp_core::{Ensemble, SpectralModel};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("N = {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid dimensions M = {m}, N = {n}")]
    InvalidDimensions { m: usize, n: usize },
    #[error("condition number {0} must exceed 1 for the geometric ladder")]
    InvalidKappa(f64),
    #[error("invalid mean weight {0}")]
    InvalidMeanWeight(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SensingKind {
    RowOrthogonal,
    Geometric { kappa: f64 },
    /// Dense entries with mean `sqrt(γ/M)` and variance `(1-γ)/M`.
    IidGaussian { mean_weight: f64 },
}

impl SensingKind {
    /// Row-orthogonal at `kappa == 1`, geometric above.
    pub fn from_condition_number(kappa: f64) -> Result<Self, SensingError> {
        if kappa == 1.0 {
            Ok(Self::RowOrthogonal)
        } else if kappa > 1.0 && kappa.is_finite() {
            Ok(Self::Geometric { kappa })
        } else {
            Err(SensingError::InvalidKappa(kappa))
        }
    }

    pub fn spectral_model(&self, delta: f64) -> Result<SpectralModel, camp_core::spectra::SpectraError> {
        match *self {
            Self::RowOrthogonal => SpectralModel::row_orthogonal(delta),
            Self::Geometric { kappa } => SpectralModel::geometric(kappa, delta),
            Self::IidGaussian { mean_weight } => SpectralModel::new(delta, Ensemble::IidGaussian { mean_weight }),
        }
    }
}

#[derive(Debug)]
enum Factor {
    /// `(Vᵀ v)_m = (H v)_{π(m)}`.
    Hadamard,
    Dense { a: DMatrix<f64>, eigen: OnceLock<SymmetricEigen<f64, nalgebra::Dyn>> },
}

/// Immutable once built; shared read-only across trial workers.
#[derive(Debug)]
pub struct SensingInstance {
    m: usize,
    n: usize,
    kind: SensingKind,
    singular_values: Vec<f64>,
    row_permutation: Vec<usize>,
    factor: Factor,
}

/// `σ_m = σ_0 κ^{-m/(M-1)}` with `N^{-1} Σ σ_m² = 1`.
pub fn geometric_singular_values(kappa: f64, m: usize, n: usize) -> Vec<f64> {
    let r2 = kappa.powf(-2.0 / (m as f64 - 1.0));
    let s0_sq = n as f64 * (1.0 - r2) / (1.0 - kappa.powf(-2.0 * m as f64 / (m as f64 - 1.0)));
    let ratio = r2.sqrt();
    let mut out = Vec::with_capacity(m);
    let mut s = s0_sq.sqrt();
    for _ in 0..m {
        out.push(s);
        s *= ratio;
    }
    // the last rung exactly σ_0/κ
    out[m - 1] = out[0] / kappa;
    out
}

impl SensingInstance {
    pub fn build(kind: SensingKind, m: usize, n: usize, seed: [u8; 32]) -> Result<Self, SensingError> {
        if m == 0 || m > n {
            return Err(SensingError::InvalidDimensions { m, n });
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        match kind {
            SensingKind::RowOrthogonal | SensingKind::Geometric { .. } => {
                if !n.is_power_of_two() {
                    return Err(SensingError::NotPowerOfTwo(n));
                }
                let singular_values = match kind {
                    SensingKind::Geometric { kappa } => {
                        if !(kappa > 1.0 && kappa.is_finite()) {
                            return Err(SensingError::InvalidKappa(kappa));
                        }
                        if m < 2 {
                            return Err(SensingError::InvalidDimensions { m, n });
                        }
                        geometric_singular_values(kappa, m, n)
                    }
                    _ => vec![(n as f64 / m as f64).sqrt(); m],
                };
                let mut row_permutation: Vec<usize> = (0..n).collect();
                row_permutation.shuffle(&mut rng);
                Ok(Self { m, n, kind, singular_values, row_permutation, factor: Factor::Hadamard })
            }
            SensingKind::IidGaussian { mean_weight } => {
                if !(0.0..1.0).contains(&mean_weight) {
                    return Err(SensingError::InvalidMeanWeight(mean_weight));
                }
                let mean = (mean_weight / m as f64).sqrt();
                let sd = ((1.0 - mean_weight) / m as f64).sqrt();
                let a = DMatrix::from_fn(m, n, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + sd * z
                });
                Self::from_dense(a, kind)
            }
        }
    }

    /// Dense fallback for an arbitrary matrix; `kind` only labels it.
    pub fn from_dense(a: DMatrix<f64>, kind: SensingKind) -> Result<Self, SensingError> {
        let (m, n) = a.shape();
        if m == 0 || m > n {
            return Err(SensingError::InvalidDimensions { m, n });
        }
        Ok(Self {
            m,
            n,
            kind,
            singular_values: Vec::new(),
            row_permutation: Vec::new(),
            factor: Factor::Dense { a, eigen: OnceLock::new() },
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn kind(&self) -> SensingKind {
        self.kind
    }

    /// Singular values in decreasing order. Dense instances compute them
    /// on first use.
    pub fn singular_values(&self) -> Vec<f64> {
        match &self.factor {
            Factor::Hadamard => self.singular_values.clone(),
            Factor::Dense { .. } => {
                let mut s: Vec<f64> = self.dense_eigen().eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
                s.sort_by(|a, b| b.total_cmp(a));
                s
            }
        }
    }

    pub fn row_permutation(&self) -> &[usize] {
        &self.row_permutation
    }

    fn dense_eigen(&self) -> &SymmetricEigen<f64, nalgebra::Dyn> {
        match &self.factor {
            Factor::Dense { a, eigen } => eigen.get_or_init(|| SymmetricEigen::new(a * a.transpose())),
            Factor::Hadamard => unreachable!("structured instances carry their spectrum"),
        }
    }

    /// `out = A v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n);
        assert_eq!(out.len(), self.m);
        match &self.factor {
            Factor::Hadamard => {
                let mut buf = v.to_vec();
                fwht_in_place(&mut buf).expect("length checked at build");
                for (m, o) in out.iter_mut().enumerate() {
                    *o = self.singular_values[m] * buf[self.row_permutation[m]];
                }
            }
            Factor::Dense { a, .. } => {
                let r = a * DVector::from_column_slice(v);
                out.copy_from_slice(r.as_slice());
            }
        }
    }

    /// `out = Aᵀ w`.
    pub fn adjoint(&self, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.m);
        assert_eq!(out.len(), self.n);
        match &self.factor {
            Factor::Hadamard => {
                out.iter_mut().for_each(|x| *x = 0.0);
                for (m, &wm) in w.iter().enumerate() {
                    out[self.row_permutation[m]] = self.singular_values[m] * wm;
                }
                fwht_in_place(out).expect("length checked at build");
            }
            Factor::Dense { a, .. } => {
                let r = a.tr_mul(&DVector::from_column_slice(w));
                out.copy_from_slice(r.as_slice());
            }
        }
    }

    /// `out = A Aᵀ z`; diagonal for the structured factor.
    pub fn gram(&self, z: &[f64], out: &mut [f64]) {
        match &self.factor {
            Factor::Hadamard => {
                for ((o, &zm), s) in out.iter_mut().zip(z).zip(&self.singular_values) {
                    *o = s * s * zm;
                }
            }
            Factor::Dense { .. } => {
                let mut tmp = vec![0.0; self.n];
                self.adjoint(z, &mut tmp);
                self.apply(&tmp, out);
            }
        }
    }

    /// LMMSE step for `W = σ² I + v A Aᵀ`: returns `Aᵀ W^{-1} r` and
    /// `N^{-1} Tr(W^{-1} A Aᵀ)`.
    pub fn lmmse(&self, v: f64, sigma2: f64, r: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n as f64;
        let mut filtered = vec![0.0; self.m];
        let trace = match &self.factor {
            Factor::Hadamard => {
                let mut tr = 0.0;
                for (m, s) in self.singular_values.iter().enumerate() {
                    let l = s * s;
                    let w = sigma2 + v * l;
                    filtered[m] = r[m] / w;
                    tr += l / w;
                }
                tr / n
            }
            Factor::Dense { .. } => {
                let eig = self.dense_eigen();
                let u = &eig.eigenvectors;
                let mut c = u.tr_mul(&DVector::from_column_slice(r));
                let mut tr = 0.0;
                for (k, l) in eig.eigenvalues.iter().enumerate() {
                    let l = l.max(0.0);
                    let w = sigma2 + v * l;
                    c[k] /= w;
                    tr += l / w;
                }
                filtered.copy_from_slice((u * c).as_slice());
                tr / n
            }
        };
        let mut out = vec![0.0; self.n];
        self.adjoint(&filtered, &mut out);
        (out, trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    fn kinds() -> Vec<SensingKind> {
        vec![
            SensingKind::RowOrthogonal,
            SensingKind::Geometric { kappa: 5.0 },
            SensingKind::IidGaussian { mean_weight: 0.0 },
            SensingKind::IidGaussian { mean_weight: 0.3 },
        ]
    }

    #[test]
    fn adjoint_consistency() {
        for kind in kinds() {
            let a = SensingInstance::build(kind, 64, 128, [3; 32]).unwrap();
            let v = random(128, 1);
            let w = random(64, 2);
            let (mut av, mut atw) = (vec![0.0; 64], vec![0.0; 128]);
            a.apply(&v, &mut av);
            a.adjoint(&w, &mut atw);
            let gap = (dot(&av, &w) - dot(&v, &atw)).abs();
            assert!(gap <= 1e-10 * norm(&v) * norm(&w), "{kind:?}: {gap}");
        }
    }

    #[test]
    fn unit_first_moment_and_condition_number() {
        let (m, n) = (1 << 12, 1 << 13);
        let s = geometric_singular_values(5.0, m, n);
        let mean: f64 = s.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-12, "{mean}");
        assert!((s[0] / s[m - 1] - 5.0).abs() < 1e-10);
        for w in s.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn row_orthogonal_gram_is_scaled_identity() {
        let a = SensingInstance::build(SensingKind::RowOrthogonal, 32, 64, [9; 32]).unwrap();
        let z = random(32, 5);
        let mut out = vec![0.0; 32];
        let mut tmp = vec![0.0; 64];
        a.adjoint(&z, &mut tmp);
        a.apply(&tmp, &mut out);
        for (o, zi) in out.iter().zip(&z) {
            assert!((o - 2.0 * zi).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matches_composition() {
        for kind in kinds() {
            let a = SensingInstance::build(kind, 32, 64, [4; 32]).unwrap();
            let z = random(32, 8);
            let (mut g, mut direct, mut tmp) = (vec![0.0; 32], vec![0.0; 32], vec![0.0; 64]);
            a.gram(&z, &mut g);
            a.adjoint(&z, &mut tmp);
            a.apply(&tmp, &mut direct);
            for (x, y) in g.iter().zip(&direct) {
                assert!((x - y).abs() < 1e-11, "{kind:?}");
            }
        }
    }

    #[test]
    fn lmmse_dense_matches_structured_formula() {
        // Same filter through the eigen route and through a direct solve.
        let a = SensingInstance::build(SensingKind::IidGaussian { mean_weight: 0.0 }, 24, 48, [1; 32]).unwrap();
        let r = random(24, 3);
        let (v, s2) = (0.4, 0.05);
        let (out, tr) = a.lmmse(v, s2, &r);
        let Factor::Dense { a: mat, .. } = &a.factor else { unreachable!() };
        let w = DMatrix::identity(24, 24) * s2 + mat * mat.transpose() * v;
        let w_inv = w.clone().try_inverse().unwrap();
        let direct = mat.transpose() * (&w_inv * DVector::from_column_slice(&r));
        for (x, y) in out.iter().zip(direct.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        let tr_direct = (w_inv * mat * mat.transpose()).trace() / 48.0;
        assert!((tr - tr_direct).abs() < 1e-10);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = SensingInstance::build(SensingKind::Geometric { kappa: 3.0 }, 16, 32, [7; 32]).unwrap();
        let b = SensingInstance::build(SensingKind::Geometric { kappa: 3.0 }, 16, 32, [7; 32]).unwrap();
        assert_eq!(a.row_permutation(), b.row_permutation());
        let c = SensingInstance::build(SensingKind::Geometric { kappa: 3.0 }, 16, 32, [8; 32]).unwrap();
        assert_ne!(a.row_permutation(), c.row_permutation());
    }

    #[test]
    fn invalid_builds() {
        assert_eq!(
            SensingInstance::build(SensingKind::RowOrthogonal, 10, 24, [0; 32]).unwrap_err(),
            SensingError::NotPowerOfTwo(24)
        );
        assert!(SensingInstance::build(SensingKind::Geometric { kappa: 1.0 }, 8, 16, [0; 32]).is_err());
        assert!(SensingInstance::build(SensingKind::RowOrthogonal, 32, 16, [0; 32]).is_err());
        assert!(SensingKind::from_condition_number(0.5).is_err());
    }
}

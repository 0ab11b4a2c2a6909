//! Bernoulli-Gaussian prior and its posterior-mean denoiser.
//!
//! The signal is `0` with probability `1-ρ` and `N(0, 1/ρ)` otherwise, so
//! `E[x²] = 1`. Expectations over `Y = X + N(0, a)` split over the two
//! mixture branches. The two-observation correlation uses the sufficient
//! statistic `Y_c`, whose noise is independent of `Y_1 - Y_2`; this turns
//! the joint expectation into a nested pair of one-dimensional integrals.

use crate::quadrature::{integrate, GaussHermite, QuadError, Tolerance};
use std::fmt::Debug;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiserError {
    #[error("noise variance must be positive and finite, got {0}")]
    InvalidVariance(f64),
    #[error("covariance not positive semidefinite: a11 = {a11}, a22 = {a22}, a12 = {a12}")]
    NotPositiveDefinite { a11: f64, a22: f64, a12: f64 },
    #[error("signal density must be in (0, 1], got {0}")]
    InvalidDensity(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// A separable prior together with its Bayes-optimal scalar denoiser.
pub trait ScalarPrior: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Posterior mean `E[X | X + N(0,a) = y]`.
    fn denoise(&self, y: f64, a: f64) -> f64;

    fn denoise_deriv(&self, y: f64, a: f64) -> f64;

    /// Draw from the prior given one uniform and one standard normal variate.
    fn sample_with(&self, uniform: f64, normal: f64) -> f64;

    fn mse(&self, a: f64) -> Result<f64, DenoiserError>;

    /// `E[f'(X + N(0,a))]`.
    fn xi_bar(&self, a: f64) -> Result<f64, DenoiserError>;

    /// `E[(f(Y_1; a11) - X)(f(Y_2; a22) - X)]` for jointly Gaussian noises.
    fn correlation(&self, a11: f64, a22: f64, a12: f64) -> Result<f64, DenoiserError>;

    /// `-E[X (f(X + N(0,a)) - X)]`, which equals the MSE for a posterior mean.
    fn boundary_correlation(&self, a: f64) -> Result<f64, DenoiserError> {
        self.mse(a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QuadratureRule {
    /// Adaptive Gauss-Kronrod with breakpoints at both mixture scales and
    /// at the posterior switch points. For the correlation, the outer
    /// integral over the observation gap uses `outer_nodes` Gauss-Hermite
    /// nodes, or is adaptive too when `outer_nodes == 0`.
    Adaptive { rel_tol: f64, outer_nodes: usize },
    /// Per-branch Gauss-Hermite; tensor rule for the correlation.
    GaussHermite { order: usize, order_2d: usize },
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::Adaptive { rel_tol: 1e-9, outer_nodes: 48 }
    }
}

#[derive(Clone, Debug)]
pub struct BernoulliGaussian {
    rho: f64,
    rule: QuadratureRule,
    gh: Option<(Arc<GaussHermite>, Arc<GaussHermite>)>,
}

/// Integration range in standard deviations of the widest branch.
const SPAN: f64 = 10.0;
/// Relative size of `a11 + a22 - 2 a12` below which the two observations
/// are treated as one.
const DEGENERATE: f64 = 1e-12;
/// Relative determinant deficit tolerated, and clamped, as rounding of a
/// rank-one covariance.
const PSD_SLACK: f64 = 1e-9;

impl BernoulliGaussian {
    pub fn new(rho: f64) -> Result<Self, DenoiserError> {
        Self::with_rule(rho, QuadratureRule::default())
    }

    pub fn with_rule(rho: f64, rule: QuadratureRule) -> Result<Self, DenoiserError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(DenoiserError::InvalidDensity(rho));
        }
        let gh = match rule {
            QuadratureRule::GaussHermite { order, order_2d } => {
                Some((Arc::new(GaussHermite::new(order)), Arc::new(GaussHermite::new(order_2d))))
            }
            QuadratureRule::Adaptive { outer_nodes, .. } if outer_nodes > 0 => {
                let gh = Arc::new(GaussHermite::new(outer_nodes));
                Some((gh.clone(), gh))
            }
            QuadratureRule::Adaptive { .. } => None,
        };
        Ok(Self { rho, rule, gh })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Log-odds of the Gaussian branch given `y` at noise variance `a`.
    #[inline]
    fn log_odds(&self, y: f64, a: f64) -> f64 {
        let rho = self.rho;
        let s = 1.0 / (1.0 + rho * a);
        (rho / (1.0 - rho)).ln() + 0.5 * (rho * a * s).ln() + 0.5 * y * y * s / a
    }

    /// Posterior probability `π(y, a)` of the Gaussian branch.
    #[inline]
    pub fn branch_probability(&self, y: f64, a: f64) -> f64 {
        if self.rho == 1.0 {
            return 1.0;
        }
        logistic(self.log_odds(y, a))
    }

    /// `|y|` at which both branches are equally likely, if it exists.
    pub fn switch_point(&self, a: f64) -> Option<f64> {
        if self.rho == 1.0 {
            return None;
        }
        let s = 1.0 / (1.0 + self.rho * a);
        let l0 = (self.rho / (1.0 - self.rho)).ln() + 0.5 * (self.rho * a * s).ln();
        (l0 < 0.0).then(|| (-2.0 * a * l0 / s).sqrt())
    }

    /// Posterior variance at `y`. Its prior average is the MSE.
    #[inline]
    pub fn posterior_variance(&self, y: f64, a: f64) -> f64 {
        let s = 1.0 / (1.0 + self.rho * a);
        if self.rho == 1.0 {
            return a * s;
        }
        let (p, pq) = logistic_pair(self.log_odds(y, a));
        p * a * s + y * y * s * s * pq
    }

    /// `E[h(Y)]` for `Y ~ (1-ρ) N(0, a) + ρ N(0, a + 1/ρ)` with `h` even.
    fn expect_even(&self, a: f64, mut h: impl FnMut(f64) -> f64) -> Result<f64, DenoiserError> {
        let comps = self.components(a);
        match &self.rule {
            QuadratureRule::GaussHermite { .. } => {
                let gh = &self.gh.as_ref().expect("rule tables").0;
                Ok(comps.iter().map(|&(w, var)| if w == 0.0 { 0.0 } else { w * gh.expect(|z| h(var.sqrt() * z)) }).sum())
            }
            QuadratureRule::Adaptive { rel_tol, .. } => {
                let mut pts = vec![0.0];
                let hi = SPAN * comps[1].1.sqrt();
                push_scales(&mut pts, &comps, hi);
                if let Some(y) = self.switch_point(a) {
                    pts.push(y);
                }
                pts.push(hi);
                let pts: Vec<f64> = pts.into_iter().filter(|p| *p >= 0.0 && *p <= hi).collect();
                let est = integrate(|y| 2.0 * h(y) * mixture_pdf(y, &comps), &pts, Tolerance::new(1e-300, *rel_tol))?;
                Ok(est.value)
            }
        }
    }

    /// `(weight, variance)` of the two branches of the observation law.
    fn components(&self, a: f64) -> [(f64, f64); 2] {
        [(1.0 - self.rho, a), (self.rho, a + 1.0 / self.rho)]
    }

    fn check(a: f64) -> Result<(), DenoiserError> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(DenoiserError::InvalidVariance(a));
        }
        Ok(())
    }

}

/// `E[(f1 - X)(f2 - X) | Y_1, Y_2]`, written through `Y_c` at variance `v`.
#[inline]
fn pair_integrand(yc: f64, y1: f64, y2: f64, b1: &Branch, b2: &Branch, bc: &Branch, v: f64) -> f64 {
    let f1 = b1.denoise(y1);
    let f2 = b2.denoise(y2);
    let pc = bc.prob(yc);
    let m = yc * bc.s;
    f1 * f2 + pc * (m * m + v * bc.s - m * (f1 + f2))
}

impl BernoulliGaussian {
    fn pair_branches(&self, a11: f64, a22: f64, v: f64) -> (Branch, Branch, Branch) {
        (Branch::new(self.rho, a11), Branch::new(self.rho, a22), Branch::new(self.rho, v))
    }
}

/// Constants of the denoiser at a fixed noise variance:
/// `f(y) = y s π`, `π = logistic(l0 + k y²)`.
#[derive(Clone, Copy, Debug)]
struct Branch {
    s: f64,
    l0: f64,
    k: f64,
    gaussian: bool,
}

impl Branch {
    #[inline]
    fn new(rho: f64, a: f64) -> Self {
        let s = 1.0 / (1.0 + rho * a);
        if rho == 1.0 {
            return Self { s, l0: 0.0, k: 0.0, gaussian: true };
        }
        let l0 = (rho / (1.0 - rho)).ln() + 0.5 * (rho * a * s).ln();
        Self { s, l0, k: 0.5 * s / a, gaussian: false }
    }

    #[inline]
    fn prob(&self, y: f64) -> f64 {
        if self.gaussian { 1.0 } else { logistic(self.l0 + self.k * y * y) }
    }

    #[inline]
    fn denoise(&self, y: f64) -> f64 {
        y * self.s * self.prob(y)
    }
}

#[inline]
fn logistic(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// `(π, π(1-π))` for log-odds `l`, without cancellation in the tails.
#[inline]
fn logistic_pair(l: f64) -> (f64, f64) {
    let e = (-l.abs()).exp();
    let d = 1.0 + e;
    let p = if l >= 0.0 { 1.0 / d } else { e / d };
    (p, e / (d * d))
}

#[inline]
fn mixture_pdf(y: f64, comps: &[(f64, f64); 2]) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    comps
        .iter()
        .map(|&(w, var)| if w == 0.0 { 0.0 } else { w * INV_SQRT_2PI / var.sqrt() * (-0.5 * y * y / var).exp() })
        .sum()
}

fn push_scales(pts: &mut Vec<f64>, comps: &[(f64, f64); 2], hi: f64) {
    for &(w, var) in comps {
        if w == 0.0 {
            continue;
        }
        let s = var.sqrt();
        for c in [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
            if c * s < hi {
                pts.push(c * s);
            }
        }
    }
}

impl ScalarPrior for BernoulliGaussian {
    fn name(&self) -> &'static str {
        "bernoulli_gaussian"
    }

    #[inline]
    fn denoise(&self, y: f64, a: f64) -> f64 {
        let s = 1.0 / (1.0 + self.rho * a);
        y * s * self.branch_probability(y, a)
    }

    #[inline]
    fn denoise_deriv(&self, y: f64, a: f64) -> f64 {
        let s = 1.0 / (1.0 + self.rho * a);
        if self.rho == 1.0 {
            return s;
        }
        let (p, pq) = logistic_pair(self.log_odds(y, a));
        s * p + s * s * y * y * pq / a
    }

    fn sample_with(&self, uniform: f64, normal: f64) -> f64 {
        if uniform < self.rho {
            normal / self.rho.sqrt()
        } else {
            0.0
        }
    }

    fn mse(&self, a: f64) -> Result<f64, DenoiserError> {
        Self::check(a)?;
        if self.rho == 1.0 {
            return Ok(a / (1.0 + a));
        }
        self.expect_even(a, |y| self.posterior_variance(y, a))
    }

    fn xi_bar(&self, a: f64) -> Result<f64, DenoiserError> {
        Self::check(a)?;
        if self.rho == 1.0 {
            return Ok(1.0 / (1.0 + a));
        }
        self.expect_even(a, |y| self.denoise_deriv(y, a))
    }

    fn correlation(&self, a11: f64, a22: f64, a12: f64) -> Result<f64, DenoiserError> {
        Self::check(a11)?;
        Self::check(a22)?;
        // differences are exact for nearby values; det = a12 (e1 + e2) + e1 e2
        // avoids the cancellation in a11 a22 - a12² near rank one
        let (e1, e2) = (a11 - a12, a22 - a12);
        let spread = e1 + e2;
        let det = a12 * spread + e1 * e2;
        // near-identical iterates are numerically rank one; small deficits are noise
        if det < -PSD_SLACK * a11 * a22 || !a12.is_finite() {
            return Err(DenoiserError::NotPositiveDefinite { a11, a22, a12 });
        }
        if self.rho == 1.0 {
            // (f1 - X)(f2 - X) with f_i = Y_i/(1 + a_ii)
            return Ok((a11 * a22 + a12) / ((1.0 + a11) * (1.0 + a22)));
        }
        let (v, b1, b2) = if spread <= DEGENERATE * a11.max(a22) || det <= 0.0 {
            (0.5 * (a11 + a22), 0.0, 0.0)
        } else {
            let root = spread.sqrt();
            (a12 + e1 * e2 / spread, e1 / root, e2 / root)
        };
        let v = v.max(DEGENERATE * a11.max(a22));
        let comps = self.components(v);
        let (br1, br2, brc) = self.pair_branches(a11, a22, v);

        match &self.rule {
            QuadratureRule::GaussHermite { .. } => {
                let gh = &self.gh.as_ref().expect("rule tables").1;
                let mut total = 0.0;
                for &(w, var) in &comps {
                    let sd = var.sqrt();
                    let inner = |z: f64| {
                        gh.expect(|u| {
                            let yc = sd * u;
                            pair_integrand(yc, yc + b1 * z, yc - b2 * z, &br1, &br2, &brc, v)
                        })
                    };
                    total += w * gh.expect(inner);
                }
                Ok(total)
            }
            QuadratureRule::Adaptive { rel_tol, outer_nodes } => {
                let rel = *rel_tol;
                let hi = SPAN * comps[1].1.sqrt();
                let sw = [self.switch_point(a11), self.switch_point(a22), self.switch_point(v)];
                let inner = |z: f64| -> f64 {
                    let mut pts = vec![-hi, 0.0, hi];
                    for &(_, var) in &comps {
                        let sd = var.sqrt();
                        pts.extend([sd, -sd, 3.0 * sd, -3.0 * sd]);
                    }
                    if let Some(s) = sw[0] {
                        pts.extend([s - b1 * z, -s - b1 * z]);
                    }
                    if let Some(s) = sw[1] {
                        pts.extend([s + b2 * z, -s + b2 * z]);
                    }
                    if let Some(s) = sw[2] {
                        pts.extend([s, -s]);
                    }
                    pts.retain(|p| p.abs() <= hi);
                    let f = |yc: f64| pair_integrand(yc, yc + b1 * z, yc - b2 * z, &br1, &br2, &brc, v) * mixture_pdf(yc, &comps);
                    match integrate(f, &pts, Tolerance::new(1e-300, 0.1 * rel)) {
                        Ok(e) => e.value,
                        Err(e) => e.estimate,
                    }
                };
                if b1 == 0.0 && b2 == 0.0 {
                    return Ok(inner(0.0));
                }
                // symmetric under (y_c, z) -> (-y_c, -z): integrate z >= 0 twice
                if *outer_nodes > 0 {
                    let gh = &self.gh.as_ref().expect("rule tables").1;
                    let half = gh.nodes.iter().zip(&gh.weights).filter(|(z, _)| **z > 0.0);
                    let mut total: f64 = half.map(|(&z, &w)| 2.0 * w * inner(z)).sum();
                    if outer_nodes % 2 == 1 {
                        total += gh.weights[outer_nodes / 2] * inner(0.0);
                    }
                    return Ok(total);
                }
                let phi = |z: f64| 0.398_942_280_401_432_7 * (-0.5 * z * z).exp();
                let pts = [0.0, 1.5, 3.5, 8.5];
                Ok(integrate(|z| 2.0 * phi(z) * inner(z), &pts, Tolerance::new(1e-300, rel))?.value)
            }
        }
    }

    fn boundary_correlation(&self, a: f64) -> Result<f64, DenoiserError> {
        self.mse(a)
    }
}

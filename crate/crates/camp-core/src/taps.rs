//! Tap coefficients of the convolutional Onsager term.
//!
//! Closed forms exist for the Gaussian, row-orthogonal and geometric
//! ensembles; every construction returns the rational form `G = P/Q` with
//! `r = q * θ`. The moment-driven dynamical system is kept as an oracle: it
//! is unstable in floating point and is meant to run over [`Rational`].

use crate::scalar::{Rational, Scalar};
use crate::series::{Series, SeriesError};
use crate::spectra::{Ensemble, SpectralModel};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TapError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("theta_0 must equal 1")]
    ThetaNotMonic,
    #[error("theta_0 - theta_1 = 0 makes the q-bar recursion singular")]
    SingularRecursion,
    #[error("need moments up to order {need}, got {got}")]
    MissingMoments { need: usize, got: usize },
    #[error("dynamical system unstable at tau = {tau}, j = {j}: |value| = {value:e}")]
    Unstable { tau: usize, j: usize, value: f64 },
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapSchedule<S = f64> {
    pub theta: Series<S>,
    pub g: Series<S>,
    pub p: Series<S>,
    pub q: Series<S>,
    pub r: Series<S>,
}

impl<S: Scalar> TapSchedule<S> {
    /// Builds `g` from `q * g = p` and `r = q * θ`.
    pub fn from_pq(theta: Series<S>, p: Series<S>, q: Series<S>) -> Result<Self, TapError> {
        let g = Series::divide(&p, &q)?;
        let r = q.convolve(&theta)?;
        Ok(Self { theta, g, p, q, r })
    }

    /// Direct form `P = G`, `Q = 1`.
    pub fn from_g(theta: Series<S>, g: Series<S>) -> Result<Self, TapError> {
        let q = Series::identity(g.horizon());
        Self::from_pq(theta, g.clone(), q)
    }

    pub fn horizon(&self) -> usize {
        self.g.horizon()
    }

    /// Max coefficient of `q * g - p`.
    pub fn pq_residual(&self) -> f64 {
        let qg = self.q.convolve(&self.g).expect("same horizon");
        qg.max_abs_diff(&self.p)
    }
}

impl TapSchedule<f64> {
    pub fn to_exact(&self) -> TapSchedule<Rational> {
        TapSchedule {
            theta: self.theta.to_exact(),
            g: self.g.to_exact(),
            p: self.p.to_exact(),
            q: self.q.to_exact(),
            r: self.r.to_exact(),
        }
    }

    /// Generating-function identity residual of this schedule, per order,
    /// evaluated exactly against the model's exact moments.
    pub fn identity_residuals(&self, model: &SpectralModel, order: usize) -> Vec<f64> {
        let exact = self.to_exact();
        let m = model.moments_exact(order + 1);
        generating_identity_residuals(&exact.g, &exact.theta, &m, order)
    }
}

/// `θ_0 = 1`, `θ_1 = -knob·d_s/a_s`, `θ_2 = knob`, zero beyond. This makes
/// `Σ_τ θ_τ (d_s/a_s)^τ = 1`.
pub fn theta_schedule(knob: f64, a_s: f64, d_s: f64, horizon: usize) -> Result<Series, TapError> {
    if !(a_s > 0.0 && d_s > 0.0) {
        return Err(TapError::InvalidParameter(format!("a_s = {a_s}, d_s = {d_s} must be positive")));
    }
    let mut c = vec![1.0, 0.0 - knob * d_s / a_s, knob];
    c.truncate(horizon + 1);
    Ok(Series::from_slice(&c, horizon))
}

fn check_theta<S: Scalar>(theta: &Series<S>) -> Result<(), TapError> {
    if !theta.coeffs()[0].is_one() {
        return Err(TapError::ThetaNotMonic);
    }
    Ok(())
}

/// Gaussian ensemble: `g_t = (1-1/δ)θ_t + (1/δ) Σ_τ (θ_τ - θ_{τ-1}) θ_{t-τ}`.
pub fn taps_iid_gaussian<S: Scalar>(theta: &Series<S>, delta: S) -> Result<TapSchedule<S>, TapError> {
    check_theta(theta)?;
    let inv = S::one() / delta;
    let lead = theta.scale(&(S::one() - inv.clone()));
    let conv = theta.difference().convolve(theta)?.scale(&inv);
    let g = lead.add(&conv)?;
    TapSchedule::from_g(theta.clone(), g)
}

/// Row-orthogonal ensemble: `G(z) = Θ(z)/δ + (1 - 1/δ)/(1 - z^{-1})`, so
/// `g_t = θ_t/δ + 1 - 1/δ`. With `θ` the identity this is `1 - 1/δ` for `t ≥ 1`.
pub fn taps_row_orthogonal<S: Scalar>(theta: &Series<S>, delta: S) -> Result<TapSchedule<S>, TapError> {
    check_theta(theta)?;
    let inv = S::one() / delta;
    let tail = S::one() - inv.clone();
    let mut g = theta.scale(&inv);
    for t in 0..=g.horizon() {
        g.set(t, g.coeffs()[t].clone() + tail.clone());
    }
    TapSchedule::from_g(theta.clone(), g)
}

/// How `q̄` is computed for the geometric ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QbarMethod {
    /// Forward recursion dividing by `θ̄_1`; chosen when it is stable.
    Auto,
    Recursion,
    /// `Q̄ = Σ_n (CΘ̄)^n/(n+1)!`, which never divides.
    Expansion,
}

/// `θ̄_t = θ_{t-1} - θ_t` at horizon `h`.
fn theta_bar<S: Scalar>(theta: &Series<S>, h: usize) -> Series<S> {
    let mut out = Series::zeros(h);
    for t in 1..=h {
        out.set(t, theta.at(t as isize - 1) - theta.at(t as isize));
    }
    out
}

fn support<S: Scalar>(theta: &Series<S>) -> usize {
    theta.coeffs().iter().rposition(|c| !c.is_zero()).unwrap_or(0)
}

/// `(p, q)` of the geometric ensemble for `C = 2 ln κ / δ`.
///
/// `β` is the product of `α^{(j)}` over `j = 1..=t_1+1`: with `θ` supported
/// on `0..=t_1`, `θ̄` is supported on `1..=t_1+1`, and dropping the last
/// factor would lose the `θ̄_{t_1+1} = θ_{t_1}` term of `exp(CΘ̄)`.
pub fn geometric_pq<S: Scalar>(
    theta: &Series<S>,
    c: &S,
    kappa2: &S,
    method: QbarMethod,
) -> Result<(Series<S>, Series<S>), TapError> {
    check_theta(theta)?;
    let h = theta.horizon();
    let t1 = support(theta);
    let tb = theta_bar(theta, h + 1);
    if tb.coeffs()[1].is_zero() {
        return Err(TapError::SingularRecursion);
    }

    let mut beta = Series::identity(h + 1);
    for j in 1..=(t1 + 1).min(h + 1) {
        let tbj = tb.coeffs()[j].clone();
        let mut alpha = Series::zeros(h + 1);
        let mut term = S::one();
        let mut k = 0usize;
        while k * j <= h + 1 {
            alpha.set(k * j, term.clone());
            k += 1;
            term = term * c.clone() * tbj.clone() / S::from_int(k as i64);
        }
        beta = beta.convolve(&alpha)?;
    }

    let mut p = Series::zeros(h);
    p.set(0, S::one());
    let km1 = kappa2.clone() - S::one();
    for t in 1..=h {
        p.set(t, -beta.coeffs()[t].clone() / km1.clone());
    }

    let use_recursion = match method {
        QbarMethod::Recursion => true,
        QbarMethod::Expansion => false,
        QbarMethod::Auto => recurrence_is_stable(&tb.coeffs()[1..=t1 + 1].iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()),
    };
    let qbar = if use_recursion {
        let mut qb = Series::zeros(h);
        qb.set(0, S::one());
        for t in 1..=h {
            let mut acc = beta.coeffs()[t + 1].clone() / c.clone();
            for tau in 1..=t1 {
                acc = acc - tb.at(tau as isize + 1) * qb.at(t as isize - tau as isize);
            }
            qb.set(t, acc / tb.coeffs()[1].clone());
        }
        qb
    } else {
        let tbh = tb.with_horizon(h);
        let mut qb: Series<S> = Series::zeros(h);
        let mut power = Series::identity(h);
        let mut coef = S::one();
        for n in 0..=h {
            if n > 0 {
                power = power.convolve(&tbh)?;
                coef = coef * c.clone() / S::from_int(n as i64 + 1);
            }
            for t in 0..=h {
                qb.set(t, qb.coeffs()[t].clone() + coef.clone() * power.coeffs()[t].clone());
            }
        }
        qb
    };
    Ok((p, qbar.difference()))
}

/// True when every root of `a_0 λ^n + a_1 λ^{n-1} + ... + a_n` lies strictly
/// inside the unit circle (Schur-Cohn step-down). `a_0` leads.
fn recurrence_is_stable(a: &[f64]) -> bool {
    let mut poly: Vec<f64> = a.to_vec();
    while poly.len() > 1 {
        let n = poly.len() - 1;
        let k = poly[n] / poly[0];
        if !(k.abs() < 1.0) {
            return false;
        }
        let den = 1.0 - k * k;
        poly = (0..n).map(|i| (poly[i] - k * poly[n - i]) / den).collect();
    }
    true
}

pub fn taps_geometric(theta: &Series, kappa: f64, delta: f64) -> Result<TapSchedule, TapError> {
    if !(kappa > 1.0) {
        return Err(TapError::InvalidParameter(format!("condition number {kappa} must exceed 1")));
    }
    let c = 2.0 * kappa.ln() / delta;
    let (p, q) = geometric_pq(theta, &c, &(kappa * kappa), QbarMethod::Auto)?;
    TapSchedule::from_pq(theta.clone(), p, q)
}

/// Closed-form taps for any supported ensemble.
pub fn taps_for_model(model: &SpectralModel, theta: &Series) -> Result<TapSchedule, TapError> {
    match model.kind {
        Ensemble::IidGaussian { .. } => taps_iid_gaussian(theta, model.delta),
        Ensemble::RowOrthogonal => taps_row_orthogonal(theta, model.delta),
        Ensemble::Geometric { kappa } => taps_geometric(theta, kappa, model.delta),
    }
}

/// Closed-form taps evaluated in exact arithmetic, sharing the exact
/// parameterization used by [`SpectralModel::moments_exact`].
pub fn taps_for_model_exact(model: &SpectralModel, theta: &Series<Rational>) -> Result<TapSchedule<Rational>, TapError> {
    let delta = crate::scalar::rat(model.delta);
    match model.kind {
        Ensemble::IidGaussian { .. } => taps_iid_gaussian(theta, delta),
        Ensemble::RowOrthogonal => taps_row_orthogonal(theta, delta),
        Ensemble::Geometric { .. } => {
            let (c, k2) = model.geometric_exact_params().expect("geometric");
            let (p, q) = geometric_pq(theta, &c, &k2, QbarMethod::Recursion)?;
            TapSchedule::from_pq(theta.clone(), p, q)
        }
    }
}

/// Taps from the moment-driven dynamical system, `g_0..=g_horizon`.
///
/// At each `τ` the tap `g_τ` is computed first from rows `< τ`, then the
/// whole row `g_τ^{(j)}`; the construction forces `g_τ^{(0)} = 0`, which is
/// checked. `bound` trips the instability report.
pub fn taps_oracle_dynamical<S: Scalar>(
    moments: &[S],
    theta: &Series<S>,
    horizon: usize,
    bound: f64,
) -> Result<Series<S>, TapError> {
    check_theta(theta)?;
    let need = horizon + 2;
    if moments.len() <= need {
        return Err(TapError::MissingMoments { need, got: moments.len().saturating_sub(1) });
    }
    let th = |t: usize| theta.at(t as isize);
    let mu = |j: usize| moments[j].clone();

    // rows[τ][j] for j = 0..=horizon+1-τ
    let mut rows: Vec<Vec<S>> = Vec::with_capacity(horizon + 1);
    rows.push((0..=horizon + 1).map(|j| mu(j + 1) - mu(j)).collect());
    let mut g: Vec<S> = vec![S::one()];

    for tau in 1..=horizon {
        let row1 = |r: &Vec<Vec<S>>, t: usize| r[t][1].clone();
        let mut gt = th(tau) - row1(&rows, tau - 1);
        for tp in 0..tau {
            gt = gt + th(tau - tp) * row1(&rows, tp);
        }
        for tp in 1..tau {
            gt = gt - th(tau - tp) * row1(&rows, tp - 1);
        }
        g.push(gt);

        let jmax = horizon + 1 - tau;
        let mut row = Vec::with_capacity(jmax + 1);
        for j in 0..=jmax {
            let prev = &rows[tau - 1];
            let mut v = prev[j].clone() - prev[j + 1].clone() - g[tau].clone() * mu(j) + th(tau) * mu(j + 1);
            for tp in 0..tau {
                v = v + th(tau - tp) * rows[tp][j + 1].clone() - g[tau - tp].clone() * rows[tp][j].clone();
            }
            for tp in 1..tau {
                v = v - (th(tau - tp) * rows[tp - 1][j + 1].clone() - g[tau - tp].clone() * rows[tp - 1][j].clone());
            }
            let mag = v.abs().to_f64_lossy();
            if !(mag <= bound) {
                return Err(TapError::Unstable { tau, j, value: mag });
            }
            row.push(v);
        }
        debug_assert!(row[0].abs().to_f64_lossy() <= 1e-9 * bound.max(1.0));
        rows.push(row);
    }
    Ok(Series::from_slice(&g, horizon))
}

/// Per-order residuals of `η(Θ̄/((1-z^{-1})G)) = (1-z^{-1})Θ` with
/// `η = Σ_j μ_j (-x)^j`, for orders `0..=order`.
pub fn generating_identity_residuals<S: Scalar>(
    g: &Series<S>,
    theta: &Series<S>,
    moments: &[S],
    order: usize,
) -> Vec<f64> {
    let g = g.with_horizon(order);
    let theta = theta.with_horizon(order);
    let tb = theta_bar(&theta, order);
    let den = g.difference();
    let x = Series::divide(&tb, &den).expect("g_0 = 1");
    let neg: Vec<S> = moments
        .iter()
        .enumerate()
        .take(order + 1)
        .map(|(j, m)| if j % 2 == 0 { m.clone() } else { -m.clone() })
        .collect();
    let lhs = Series::compose_into(&neg, &x);
    let rhs = theta.difference();
    lhs.coeffs()
        .iter()
        .zip(rhs.coeffs())
        .map(|(a, b)| (a.clone() - b.clone()).abs().to_f64_lossy())
        .collect()
}

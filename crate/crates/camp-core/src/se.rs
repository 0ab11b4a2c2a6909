//! State evolution.
//!
//! The CAMP recursion tracks two-index arrays: `a_{t',t}`, the covariance of
//! the effective noise before denoising, and `d_{t',t}`, the error
//! correlation after it. AMP and OAMP/VAMP are scalar recursions kept as
//! baselines, and [`solve_fixed_point`] gives the limit the CAMP recursion
//! should reach when it converges.

use crate::denoiser::{DenoiserError, ScalarPrior};
use crate::series::Series;
use crate::spectra::{SpectraError, SpectralModel};
use crate::taps::{taps_for_model, theta_schedule, TapError, TapSchedule};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeError {
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Taps(#[from] TapError),
    #[error("tap schedule horizon {got} too short, need {need}")]
    HorizonTooShort { need: usize, got: usize },
    #[error("kernel pivot D_00 = {0:e} is singular")]
    SingularPivot(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fixed-point iteration did not settle: residual {residual:e} after {iterations} iterations")]
    NoFixedPoint { residual: f64, iterations: usize, trajectory: Vec<f64> },
}

/// Square symmetric array; every write lands in both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Coefficient tables of the time-domain recursion, indexed `[τ'][τ]`:
/// `d` multiplies `a`, `dk` multiplies `d`, `sk` multiplies `σ²`.
#[derive(Clone, Debug)]
pub struct ConvolutionKernel {
    n: usize,
    d: Vec<f64>,
    dk: Vec<f64>,
    sk: Vec<f64>,
}

impl ConvolutionKernel {
    /// Largest index `τ` covered, inclusive.
    pub fn size(&self) -> usize {
        self.n - 1
    }

    #[inline]
    pub fn d(&self, tp: usize, t: usize) -> f64 {
        self.d[tp * self.n + t]
    }

    #[inline]
    pub fn dk(&self, tp: usize, t: usize) -> f64 {
        self.dk[tp * self.n + t]
    }

    #[inline]
    pub fn sk(&self, tp: usize, t: usize) -> f64 {
        self.sk[tp * self.n + t]
    }
}

#[inline]
fn at(s: &[f64], i: isize) -> f64 {
    if i < 0 { 0.0 } else { s.get(i as usize).copied().unwrap_or(0.0) }
}

/// Builds the tables for `0 ≤ τ', τ ≤ size`. Entries reach index
/// `τ' + τ + 1`, so the schedule must cover `2 size + 1`.
///
/// Convolutions run over the second index:
/// `x_τ * y_{τ'+τ+c} = Σ_{s≤τ} x_s y_{τ'+τ-s+c}`.
pub fn build_convolution_kernel(schedule: &TapSchedule, size: usize) -> Result<ConvolutionKernel, SeError> {
    let need = 2 * size + 1;
    if schedule.horizon() < need {
        return Err(SeError::HorizonTooShort { need, got: schedule.horizon() });
    }
    let (p, q, r, th) = (schedule.p.coeffs(), schedule.q.coeffs(), schedule.r.coeffs(), schedule.theta.coeffs());
    let n = size + 1;
    let mut d = vec![0.0; n * n];
    let mut dk = vec![0.0; n * n];
    for tp in 0..n {
        let k0 = (tp == 0) as i32 as f64;
        for t in 0..n {
            let (tp_i, t_i) = (tp as isize, t as isize);
            let mut acc = 0.0;
            let mut acc_dk = 0.0;
            for s in 0..=t_i {
                let hi = tp_i + t_i - s + 1;
                acc += (at(p, tp_i + s) - at(p, tp_i + s + 1)) * at(q, t_i - s);
                acc += (at(p, s) - at(p, s - 1)) * at(q, hi);
                acc += (at(p, s - 1) - at(p, s)) * at(r, hi);
                acc += (at(r, s) - at(r, s - 1)) * at(p, hi);
                acc += at(p, s) * (at(r, hi - 1) - k0 * at(r, t_i - s));
                acc -= at(r, s) * (at(p, hi - 1) - k0 * at(p, t_i - s));
                acc_dk += at(p, s) * at(r, hi) - at(r, s) * at(p, hi);
            }
            d[tp * n + t] = acc;
            dk[tp * n + t] = acc_dk;
        }
    }
    // (q_{τ'} q_τ) * c_{τ'+τ} with c_k = θ_k - θ_{k+1}, split into two 1-D passes
    let c: Vec<f64> = (0..=2 * n).map(|k| at(th, k as isize) - at(th, k as isize + 1)).collect();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for t in 0..n {
            h[i * n + t] = (0..=t).map(|s| at(q, s as isize) * c[i + t - s]).sum();
        }
    }
    let mut sk = vec![0.0; n * n];
    for tp in 0..n {
        for t in 0..n {
            sk[tp * n + t] = (0..=tp).map(|s| at(q, s as isize) * h[(tp - s) * n + t]).sum();
        }
    }
    Ok(ConvolutionKernel { n, d, dk, sk })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    /// First iteration whose entries could not be filled.
    pub iteration: usize,
    pub reason: String,
}

/// Output of [`solve_camp_se`]. `a` covers `0..=T`, `d` and `xi_bar`
/// cover `0..=T+1` and `0..=T`; on divergence only the first
/// `completed` iterations are meaningful.
#[derive(Clone, Debug)]
pub struct SeState {
    pub a: SymMatrix,
    pub d: SymMatrix,
    pub xi_bar: Vec<f64>,
    pub sigma2: f64,
    pub zeta: f64,
    pub completed: usize,
    pub divergence: Option<Divergence>,
}

impl SeState {
    /// `a_{t,t}` for completed iterations.
    pub fn pre_variance(&self) -> Vec<f64> {
        (0..self.completed).map(|t| self.a.get(t, t)).collect()
    }

    /// `d_{t+1,t+1}`: the error of the estimate produced by iteration `t`.
    pub fn mse(&self) -> Vec<f64> {
        (0..self.completed).map(|t| self.d.get(t + 1, t + 1)).collect()
    }

    pub fn converged(&self) -> bool {
        self.divergence.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeOptions {
    /// Last iteration index `T`; the solver fills `a_{t',t}` for `t ≤ T`.
    pub iterations: usize,
    pub zeta: f64,
}

/// Values beyond this multiple of the initial variance count as divergence.
const BLOWUP: f64 = 1e8;

/// Solves the CAMP recursion for the Bayes-optimal denoiser of `prior`.
pub fn solve_camp_se(schedule: &TapSchedule, prior: &dyn ScalarPrior, sigma2: f64, opts: SeOptions) -> Result<SeState, SeError> {
    let kernel = build_convolution_kernel(schedule, opts.iterations)?;
    solve_camp_se_with_kernel(&kernel, prior, sigma2, opts)
}

pub fn solve_camp_se_with_kernel(kernel: &ConvolutionKernel, prior: &dyn ScalarPrior, sigma2: f64, opts: SeOptions) -> Result<SeState, SeError> {
    let SeOptions { iterations: big_t, zeta } = opts;
    if !(sigma2 > 0.0) {
        return Err(SeError::InvalidParameter(format!("sigma2 = {sigma2}")));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(SeError::InvalidParameter(format!("zeta = {zeta} outside (0, 1]")));
    }
    if kernel.size() < big_t {
        return Err(SeError::HorizonTooShort { need: big_t, got: kernel.size() });
    }
    let pivot = kernel.d(0, 0);
    if pivot.abs() < 1e-14 {
        return Err(SeError::SingularPivot(pivot));
    }

    let mut st = SeState {
        a: SymMatrix::new(big_t + 1),
        d: SymMatrix::new(big_t + 2),
        xi_bar: Vec::with_capacity(big_t + 1),
        sigma2,
        zeta,
        completed: 0,
        divergence: None,
    };
    st.d.set(0, 0, 1.0);
    // log|ξ̄_0^{(t-1)}| and its sign, cumulative in t
    let mut log_cum = vec![0.0f64];
    let mut sign_cum = vec![1.0f64];
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(big_t + 1);
    let mut scale = f64::NAN;

    for t in 0..=big_t {
        // u_t(τ) = ξ̄_{t-τ}^{(t-1)}
        let w: Vec<f64> = (0..=t)
            .map(|tau| sign_cum[t] * sign_cum[t - tau] * (log_cum[t] - log_cum[t - tau]).exp())
            .collect();
        if w.iter().any(|v| !v.is_finite()) {
            st.divergence = Some(Divergence { iteration: t, reason: "overflow in xi-bar products".into() });
            return Ok(st);
        }
        weights.push(w);

        // a_{τ,t} in order τ = 0..=t
        for tp in 0..=t {
            let (wp, wt) = (&weights[tp], &weights[t]);
            let mut rhs = 0.0;
            for (i, &ui) in wp.iter().enumerate() {
                let (ra, rd) = (st.a.row(tp - i), st.d.row(tp - i));
                for (j, &uj) in wt.iter().enumerate() {
                    let u = ui * uj;
                    let mut term = kernel.dk(i, j) * rd[t - j] + sigma2 * kernel.sk(i, j);
                    if i + j > 0 {
                        term -= kernel.d(i, j) * ra[t - j];
                    }
                    rhs += u * term;
                }
            }
            st.a.set(tp, t, rhs / pivot);
        }

        let att = st.a.get(t, t);
        if t == 0 {
            scale = att.abs().max(sigma2);
        }
        if !att.is_finite() || att <= 0.0 || att > BLOWUP * scale {
            st.divergence = Some(Divergence { iteration: t, reason: format!("a_tt = {att:e}") });
            return Ok(st);
        }

        // d_{τ,t+1} and ξ̄_t
        let mse = prior.mse(att)?;
        let xi = prior.xi_bar(att)?;
        let xi = if t == 0 { xi } else { zeta * xi + (1.0 - zeta) * st.xi_bar[t - 1] };
        st.xi_bar.push(xi);
        st.d.set(0, t + 1, zeta * prior.boundary_correlation(att)? + (1.0 - zeta) * st.d.get(0, t));
        for tau in 1..=t + 1 {
            let raw = if tau == t + 1 {
                mse
            } else {
                let (a1, a12) = (st.a.get(tau - 1, tau - 1), st.a.get(tau - 1, t));
                match prior.correlation(a1, att, a12) {
                    Ok(v) => v,
                    Err(DenoiserError::NotPositiveDefinite { .. }) => {
                        st.divergence = Some(Divergence {
                            iteration: t,
                            reason: format!("covariance of iterations {} and {t} not positive semidefinite", tau - 1),
                        });
                        return Ok(st);
                    }
                    Err(e) => return Err(e.into()),
                }
            };
            st.d.set(tau, t + 1, zeta * raw + (1.0 - zeta) * st.d.get(tau - 1, t));
        }
        log_cum.push(log_cum[t] + xi.abs().ln());
        sign_cum.push(sign_cum[t] * xi.signum());
        st.completed = t + 1;
    }
    Ok(st)
}

/// Residual of the recursion at `(t', t)` for the filled state; the solver
/// zeroes it for `t' ≤ t`, and the transposed equations test consistency.
pub fn camp_se_residual(kernel: &ConvolutionKernel, st: &SeState, tp: usize, t: usize) -> f64 {
    let w = |t: usize, tau: usize| st.xi_bar[t - tau..t].iter().product::<f64>();
    let mut acc = 0.0;
    for i in 0..=tp {
        for j in 0..=t {
            let u = w(tp, i) * w(t, j);
            acc += u
                * (kernel.d(i, j) * st.a.get(tp - i, t - j)
                    - kernel.dk(i, j) * st.d.get(tp - i, t - j)
                    - st.sigma2 * kernel.sk(i, j));
        }
    }
    acc
}

/// AMP baseline, `v_t = σ² + MMSE(v_{t-1})/δ` with `MMSE(v_{-1}) = 1`.
#[derive(Clone, Debug)]
pub struct ScalarSe {
    /// Noise variance entering the denoiser at iteration `t`.
    pub v: Vec<f64>,
    /// MSE after denoising at iteration `t`.
    pub mse: Vec<f64>,
}

pub fn solve_amp_se(prior: &dyn ScalarPrior, sigma2: f64, delta: f64, iterations: usize) -> Result<ScalarSe, SeError> {
    if !(sigma2 >= 0.0 && delta > 0.0) {
        return Err(SeError::InvalidParameter(format!("sigma2 = {sigma2}, delta = {delta}")));
    }
    let mut out = ScalarSe { v: Vec::with_capacity(iterations), mse: Vec::with_capacity(iterations) };
    let mut prev = 1.0;
    for _ in 0..iterations {
        let v = sigma2 + prev / delta;
        if v <= 0.0 {
            // noiseless and already exact
            out.v.push(0.0);
            out.mse.push(0.0);
            prev = 0.0;
            continue;
        }
        prev = prior.mse(v)?;
        out.v.push(v);
        out.mse.push(prev);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct OampSe {
    pub v_ab: Vec<f64>,
    pub v_ba: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mse: Vec<f64>,
    pub divergence: Option<Divergence>,
}

/// OAMP/VAMP baseline starting from `v_{B→A,0} = 1`.
pub fn solve_oamp_se(model: &SpectralModel, prior: &dyn ScalarPrior, sigma2: f64, iterations: usize) -> Result<OampSe, SeError> {
    if !(sigma2 > 0.0) {
        return Err(SeError::InvalidParameter(format!("sigma2 = {sigma2}")));
    }
    let mut out = OampSe { v_ab: vec![], v_ba: vec![], gamma: vec![], mse: vec![], divergence: None };
    let mut v_ba = 1.0;
    for t in 0..iterations {
        let gamma = 1.0 / model.lmmse_gamma_inv(v_ba, sigma2);
        let v_ab = gamma - v_ba;
        if !(v_ab > 0.0) || !v_ab.is_finite() {
            out.divergence = Some(Divergence { iteration: t, reason: format!("v_AB = {v_ab:e}") });
            return Ok(out);
        }
        let mse = prior.mse(v_ab)?;
        out.v_ba.push(v_ba);
        out.gamma.push(gamma);
        out.v_ab.push(v_ab);
        out.mse.push(mse);
        let next = 1.0 / (1.0 / mse - 1.0 / v_ab);
        if !(next > 0.0) || !next.is_finite() {
            // mse has reached v_ab to rounding: the extrinsic variance is unbounded
            out.divergence = Some(Divergence { iteration: t + 1, reason: format!("v_BA = {next:e}") });
            return Ok(out);
        }
        v_ba = next;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPoint {
    pub a_s: f64,
    pub d_s: f64,
    pub xi_s: f64,
    /// `|d_s - mse(a_s)|`.
    pub residual_mse: f64,
    /// `|a_s R(-d_s/σ²) - σ²|`.
    pub residual_r: f64,
    pub iterations: usize,
}

/// Fixed points reached from an uninformative and an informative start.
/// `alternate` is set when they differ.
#[derive(Clone, Debug)]
pub struct FixedPointReport {
    pub solution: FixedPoint,
    pub alternate: Option<FixedPoint>,
}

const FP_DAMPING: f64 = 0.5;
const FP_MAX_ITER: usize = 10_000;
const FP_TOL: f64 = 1e-10;

/// Solves `a_s = σ²/R(-d_s/σ²)`, `d_s = mse(a_s)` by damped iteration on `d`.
pub fn solve_fixed_point(model: &SpectralModel, prior: &dyn ScalarPrior, sigma2: f64) -> Result<FixedPointReport, SeError> {
    if !(sigma2 > 0.0) {
        return Err(SeError::InvalidParameter(format!("sigma2 = {sigma2}")));
    }
    let solution = fixed_point_from(model, prior, sigma2, 1.0)?;
    let alternate = fixed_point_from(model, prior, sigma2, 1e-6)?;
    let distinct = (alternate.d_s - solution.d_s).abs() > 1e-6 * solution.d_s.max(alternate.d_s);
    Ok(FixedPointReport { solution, alternate: distinct.then_some(alternate) })
}

fn fixed_point_from(model: &SpectralModel, prior: &dyn ScalarPrior, sigma2: f64, d0: f64) -> Result<FixedPoint, SeError> {
    let a_of = |d: f64| -> Result<f64, SeError> { Ok(sigma2 / model.r_transform(-d / sigma2)?) };
    let mut d = d0;
    let mut trajectory = vec![d];
    let mut residual = f64::INFINITY;
    for it in 1..=FP_MAX_ITER {
        let a = a_of(d)?;
        let m = prior.mse(a)?;
        residual = (m - d).abs();
        if residual <= 1e-3 * FP_TOL {
            return finish_fixed_point(model, prior, sigma2, d, it);
        }
        d = (1.0 - FP_DAMPING) * d + FP_DAMPING * m;
        if trajectory.len() < 64 || it % 100 == 0 {
            trajectory.push(d);
        }
    }
    if residual <= FP_TOL {
        return finish_fixed_point(model, prior, sigma2, d, FP_MAX_ITER);
    }
    Err(SeError::NoFixedPoint { residual, iterations: FP_MAX_ITER, trajectory })
}

fn finish_fixed_point(model: &SpectralModel, prior: &dyn ScalarPrior, sigma2: f64, d: f64, iterations: usize) -> Result<FixedPoint, SeError> {
    let r = model.r_transform(-d / sigma2)?;
    let a_s = sigma2 / r;
    let residual_mse = (d - prior.mse(a_s)?).abs();
    let residual_r = (a_s * r - sigma2).abs();
    Ok(FixedPoint { a_s, d_s: d, xi_s: d / a_s, residual_mse, residual_r, iterations })
}

/// The two conditions on `Θ` under which a converged CAMP recursion lands
/// on the fixed point: `Θ(ξ_s^{-1}) = 1` and a nonzero derivative term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaConditions {
    /// `Θ` evaluated at `z^{-1} = ξ_s`.
    pub value: f64,
    /// `1 + (ξ_s - 1) dΘ/dz^{-1}` at the same point.
    pub derivative_term: f64,
}

impl ThetaConditions {
    pub fn hold(&self, tol: f64) -> bool {
        (self.value - 1.0).abs() <= tol && self.derivative_term.abs() > tol
    }
}

pub fn theta_conditions(theta: &Series, xi_s: f64) -> ThetaConditions {
    let c = theta.coeffs();
    let value = c.iter().rev().fold(0.0, |acc, &v| acc * xi_s + v);
    let slope = c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &v)| acc * xi_s + k as f64 * v);
    ThetaConditions { value, derivative_term: 1.0 + (xi_s - 1.0) * slope }
}

/// Taps for a `T`-iteration recursion: `θ` from the knob and the fixed
/// point, at the horizon the kernel needs.
pub fn design_schedule(model: &SpectralModel, knob: f64, fp: &FixedPoint, iterations: usize) -> Result<TapSchedule, SeError> {
    let theta = theta_schedule(knob, fp.a_s, fp.d_s, 2 * iterations + 1)?;
    Ok(taps_for_model(model, &theta)?)
}

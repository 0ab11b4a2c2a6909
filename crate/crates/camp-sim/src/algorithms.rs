//! Recovery algorithms behind a trait-object registry: CAMP, AMP and
//! OAMP/VAMP, each parameterized by the state evolution that designs its
//! denoiser sequence.

use crate::sensing::SensingInstance;
use camp_core::se::{
    design_schedule, solve_amp_se, solve_camp_se, solve_oamp_se, Divergence, FixedPoint, SeError, SeOptions,
};
use camp_core::{ScalarPrior, SpectralModel, TapSchedule};
use std::fmt::Debug;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error(transparent)]
    Se(#[from] SeError),
    #[error("unknown algorithm {0:?}; known: camp, amp, oamp")]
    UnknownAlgorithm(String),
    #[error("parameter schedule covers {got} iterations, {need} requested")]
    ScheduleTooShort { need: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub iterations: usize,
    pub zeta: f64,
    pub keep_estimates: bool,
    /// Keep `h_t`, the error entering the denoiser.
    pub keep_errors: bool,
}

impl RunOptions {
    pub fn new(iterations: usize, zeta: f64) -> Self {
        Self { iterations, zeta, keep_estimates: false, keep_errors: false }
    }
}

/// Per-run record. `mse[t]` is the error of `x_t`, so `mse[0] = ‖x‖²/N`;
/// `xi[t]` and `errors[t]` belong to iteration `t`.
#[derive(Clone, Debug, Default)]
pub struct RunTrace {
    pub algorithm: String,
    pub mse: Vec<f64>,
    pub xi: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
    pub errors: Vec<Vec<f64>>,
    pub seconds: Vec<f64>,
    pub divergence: Option<Divergence>,
}

impl RunTrace {
    fn new(name: &str, x0: &[f64], truth: Option<&[f64]>, opts: &RunOptions) -> Self {
        let mut tr = RunTrace { algorithm: name.to_string(), ..Default::default() };
        tr.record_estimate(x0, truth, opts);
        tr
    }

    fn record_estimate(&mut self, x: &[f64], truth: Option<&[f64]>, opts: &RunOptions) {
        if let Some(t) = truth {
            self.mse.push(mse(x, t));
        }
        if opts.keep_estimates {
            self.estimates.push(x.to_vec());
        }
    }

    fn record_error(&mut self, r: &[f64], truth: Option<&[f64]>, opts: &RunOptions) {
        if let (true, Some(t)) = (opts.keep_errors, truth) {
            self.errors.push(r.iter().zip(t).map(|(a, b)| a - b).collect());
        }
    }

    /// Iterations that produced a finite estimate.
    pub fn completed(&self) -> usize {
        self.xi.len()
    }
}

pub fn mse(x: &[f64], truth: &[f64]) -> f64 {
    x.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub trait RecoveryAlgorithm: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    /// Length of the designed denoiser sequence.
    fn schedule_len(&self) -> usize;
    fn run(&self, a: &SensingInstance, y: &[f64], truth: Option<&[f64]>, opts: &RunOptions) -> Result<RunTrace, RecoveryError>;
}

fn check_len(need: usize, got: usize) -> Result<(), RecoveryError> {
    if need > got {
        Err(RecoveryError::ScheduleTooShort { need, got })
    } else {
        Ok(())
    }
}

fn check_zeta(zeta: f64) -> Result<(), RecoveryError> {
    if zeta > 0.0 && zeta <= 1.0 {
        Ok(())
    } else {
        Err(RecoveryError::InvalidParameter(format!("zeta = {zeta} outside (0, 1]")))
    }
}

/// CAMP with memory taps `θ`, `g`; the denoiser at iteration `t` is the
/// Bayes-optimal one for noise variance `noise[t]`.
#[derive(Clone, Debug)]
pub struct Camp {
    pub schedule: TapSchedule,
    pub noise: Vec<f64>,
    pub prior: Arc<dyn ScalarPrior>,
}

impl RecoveryAlgorithm for Camp {
    fn name(&self) -> &'static str {
        "camp"
    }

    fn schedule_len(&self) -> usize {
        self.noise.len()
    }

    fn run(&self, a: &SensingInstance, y: &[f64], truth: Option<&[f64]>, opts: &RunOptions) -> Result<RunTrace, RecoveryError> {
        check_len(opts.iterations, self.noise.len())?;
        check_len(opts.iterations, self.schedule.horizon() + 1)?;
        check_zeta(opts.zeta)?;
        let (m, n) = (a.rows(), a.cols());
        let zeta = opts.zeta;
        let (theta, g) = (self.schedule.theta.coeffs(), self.schedule.g.coeffs());

        let mut x = vec![0.0; n];
        let mut tr = RunTrace::new(self.name(), &x, truth, opts);
        let mut z_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.iterations);
        let mut gz_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.iterations);
        // prod[τ] = ξ_τ ξ_{τ+1} ⋯ ξ_{t-1}
        let mut prod: Vec<f64> = Vec::with_capacity(opts.iterations);
        let (mut ax, mut r) = (vec![0.0; m], vec![0.0; n]);

        for t in 0..opts.iterations {
            let start = Instant::now();
            a.apply(&x, &mut ax);
            let mut z: Vec<f64> = y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
            for (tau, c) in prod.iter().enumerate() {
                let (th, gk) = (theta[t - tau], g[t - tau]);
                if th == 0.0 && gk == 0.0 {
                    continue;
                }
                for ((zi, gzi), zti) in z.iter_mut().zip(&gz_hist[tau]).zip(&z_hist[tau]) {
                    *zi += c * (th * gzi - gk * zti);
                }
            }
            a.adjoint(&z, &mut r);
            r.iter_mut().zip(&x).for_each(|(ri, xi)| *ri += xi);
            if !all_finite(&r) {
                tr.divergence = Some(Divergence { iteration: t, reason: "non-finite residual".into() });
                break;
            }
            tr.record_error(&r, truth, opts);

            let v = self.noise[t];
            let raw = mean(&r.iter().map(|&ri| self.prior.denoise_deriv(ri, v)).collect::<Vec<_>>());
            let xi = if t == 0 { raw } else { zeta * raw + (1.0 - zeta) * tr.xi[t - 1] };
            for (xi_n, &ri) in x.iter_mut().zip(&r) {
                *xi_n = zeta * self.prior.denoise(ri, v) + (1.0 - zeta) * *xi_n;
            }
            tr.xi.push(xi);
            tr.record_estimate(&x, truth, opts);

            let mut gz = vec![0.0; m];
            a.gram(&z, &mut gz);
            z_hist.push(z);
            gz_hist.push(gz);
            prod.iter_mut().for_each(|p| *p *= xi);
            prod.push(xi);
            tr.seconds.push(start.elapsed().as_secs_f64());
        }
        Ok(tr)
    }
}

/// Source of `ξ_{t-1}` in the AMP Onsager term.
#[derive(Clone, Debug, PartialEq)]
pub enum Onsager {
    /// `⟨f_{t-1}'⟩` over the current iterate.
    Empirical,
    /// `MMSE(v_t)/v_t` from the scalar recursion.
    StateEvolution(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Amp {
    pub noise: Vec<f64>,
    pub onsager: Onsager,
    pub prior: Arc<dyn ScalarPrior>,
}

impl RecoveryAlgorithm for Amp {
    fn name(&self) -> &'static str {
        "amp"
    }

    fn schedule_len(&self) -> usize {
        match &self.onsager {
            Onsager::Empirical => self.noise.len(),
            Onsager::StateEvolution(xi) => self.noise.len().min(xi.len()),
        }
    }

    fn run(&self, a: &SensingInstance, y: &[f64], truth: Option<&[f64]>, opts: &RunOptions) -> Result<RunTrace, RecoveryError> {
        check_len(opts.iterations, self.schedule_len())?;
        check_zeta(opts.zeta)?;
        let (m, n) = (a.rows(), a.cols());
        let (zeta, delta) = (opts.zeta, a.delta());
        let mut x = vec![0.0; n];
        let mut tr = RunTrace::new(self.name(), &x, truth, opts);
        let mut z_prev: Vec<f64> = Vec::new();
        let (mut ax, mut r) = (vec![0.0; m], vec![0.0; n]);

        for t in 0..opts.iterations {
            let start = Instant::now();
            a.apply(&x, &mut ax);
            let mut z: Vec<f64> = y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
            if t > 0 {
                let xi = match &self.onsager {
                    Onsager::Empirical => tr.xi[t - 1],
                    Onsager::StateEvolution(s) => s[t - 1],
                };
                let c = xi / delta;
                z.iter_mut().zip(&z_prev).for_each(|(zi, zp)| *zi += c * zp);
            }
            a.adjoint(&z, &mut r);
            r.iter_mut().zip(&x).for_each(|(ri, xi)| *ri += xi);
            if !all_finite(&r) {
                tr.divergence = Some(Divergence { iteration: t, reason: "non-finite residual".into() });
                break;
            }
            tr.record_error(&r, truth, opts);
            let v = self.noise[t];
            tr.xi.push(mean(&r.iter().map(|&ri| self.prior.denoise_deriv(ri, v)).collect::<Vec<_>>()));
            for (xi_n, &ri) in x.iter_mut().zip(&r) {
                *xi_n = zeta * self.prior.denoise(ri, v) + (1.0 - zeta) * *xi_n;
            }
            tr.record_estimate(&x, truth, opts);
            z_prev = z;
            tr.seconds.push(start.elapsed().as_secs_f64());
        }
        Ok(tr)
    }
}

/// OAMP/VAMP with the LMMSE filter applied through the stored spectrum;
/// the estimate of iteration `t` is the denoiser output.
#[derive(Clone, Debug)]
pub struct Oamp {
    pub noise: Vec<f64>,
    pub sigma2: f64,
    pub prior: Arc<dyn ScalarPrior>,
}

impl RecoveryAlgorithm for Oamp {
    fn name(&self) -> &'static str {
        "oamp"
    }

    fn schedule_len(&self) -> usize {
        self.noise.len()
    }

    fn run(&self, a: &SensingInstance, y: &[f64], truth: Option<&[f64]>, opts: &RunOptions) -> Result<RunTrace, RecoveryError> {
        check_len(opts.iterations, self.noise.len())?;
        check_zeta(opts.zeta)?;
        let (m, n) = (a.rows(), a.cols());
        let zeta = opts.zeta;
        let mut x_ba = vec![0.0; n];
        let mut v_ba = 1.0;
        let mut tr = RunTrace::new(self.name(), &x_ba, truth, opts);
        let mut ax = vec![0.0; m];

        for t in 0..opts.iterations {
            let start = Instant::now();
            a.apply(&x_ba, &mut ax);
            let resid: Vec<f64> = y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
            let (filtered, gamma_inv) = a.lmmse(v_ba, self.sigma2, &resid);
            let gamma = 1.0 / gamma_inv;
            let x_ab: Vec<f64> = x_ba.iter().zip(&filtered).map(|(xb, f)| xb + gamma * f).collect();
            let v_ab = gamma - v_ba;
            if !(v_ab > 0.0 && v_ab.is_finite()) || !all_finite(&x_ab) {
                tr.divergence = Some(Divergence { iteration: t, reason: format!("v_AB = {v_ab:e}") });
                break;
            }
            tr.record_error(&x_ab, truth, opts);

            let v = self.noise[t];
            let f: Vec<f64> = x_ab.iter().map(|&r| self.prior.denoise(r, v)).collect();
            let xi = mean(&x_ab.iter().map(|&r| self.prior.denoise_deriv(r, v)).collect::<Vec<_>>());
            tr.xi.push(xi);
            tr.record_estimate(&f, truth, opts);
            tr.seconds.push(start.elapsed().as_secs_f64());

            let v_next = 1.0 / (1.0 / (xi * v_ab) - 1.0 / v_ab);
            if !(v_next > 0.0 && v_next.is_finite()) {
                tr.divergence = Some(Divergence { iteration: t + 1, reason: format!("v_BA = {v_next:e}") });
                break;
            }
            for ((xb, fi), xa) in x_ba.iter_mut().zip(&f).zip(&x_ab) {
                let next = v_next * (fi / (xi * v_ab) - xa / v_ab);
                *xb = zeta * next + (1.0 - zeta) * *xb;
            }
            v_ba = zeta * v_next + (1.0 - zeta) * v_ba;
        }
        Ok(tr)
    }
}

/// Inputs shared by every algorithm builder.
#[derive(Clone, Debug)]
pub struct AlgorithmContext<'a> {
    pub model: &'a SpectralModel,
    pub prior: Arc<dyn ScalarPrior>,
    pub sigma2: f64,
    pub fixed_point: &'a FixedPoint,
    pub theta_knob: f64,
    pub zeta: f64,
    pub iterations: usize,
}

/// A built algorithm with its state-evolution curve. `se_prediction[t]`
/// predicts the error of `x_{t+1}`.
#[derive(Debug)]
pub struct Prepared {
    pub algorithm: Box<dyn RecoveryAlgorithm>,
    pub se_prediction: Vec<f64>,
    /// False when damping or the ensemble puts the run outside what the
    /// recursion describes.
    pub se_exact: bool,
    pub se_divergence: Option<Divergence>,
}

pub type Builder = fn(&AlgorithmContext) -> Result<Prepared, RecoveryError>;

pub fn registry() -> &'static [(&'static str, Builder)] {
    &[("camp", build_camp), ("amp", build_amp), ("oamp", build_oamp)]
}

pub fn prepare(name: &str, ctx: &AlgorithmContext) -> Result<Prepared, RecoveryError> {
    let (_, build) = registry()
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| RecoveryError::UnknownAlgorithm(name.to_string()))?;
    build(ctx)
}

fn build_camp(ctx: &AlgorithmContext) -> Result<Prepared, RecoveryError> {
    if ctx.iterations == 0 {
        return Err(RecoveryError::InvalidParameter("zero iterations".into()));
    }
    let last = ctx.iterations - 1;
    let schedule = design_schedule(ctx.model, ctx.theta_knob, ctx.fixed_point, last)?;
    let se = solve_camp_se(&schedule, ctx.prior.as_ref(), ctx.sigma2, SeOptions { iterations: last, zeta: ctx.zeta })?;
    Ok(Prepared {
        se_prediction: se.mse(),
        se_exact: ctx.zeta == 1.0,
        se_divergence: se.divergence.clone(),
        algorithm: Box::new(Camp { schedule, noise: se.pre_variance(), prior: ctx.prior.clone() }),
    })
}

fn build_amp(ctx: &AlgorithmContext) -> Result<Prepared, RecoveryError> {
    let se = solve_amp_se(ctx.prior.as_ref(), ctx.sigma2, ctx.model.delta, ctx.iterations)?;
    let xi: Vec<f64> = se.v.iter().zip(&se.mse).map(|(v, m)| if *v > 0.0 { m / v } else { 0.0 }).collect();
    let iid = matches!(ctx.model.kind, camp_core::Ensemble::IidGaussian { .. });
    Ok(Prepared {
        se_prediction: se.mse.clone(),
        se_exact: ctx.zeta == 1.0 && iid,
        se_divergence: None,
        algorithm: Box::new(Amp { noise: se.v, onsager: Onsager::StateEvolution(xi), prior: ctx.prior.clone() }),
    })
}

fn build_oamp(ctx: &AlgorithmContext) -> Result<Prepared, RecoveryError> {
    let se = solve_oamp_se(ctx.model, ctx.prior.as_ref(), ctx.sigma2, ctx.iterations)?;
    Ok(Prepared {
        se_prediction: se.mse.clone(),
        se_exact: ctx.zeta == 1.0,
        se_divergence: se.divergence.clone(),
        algorithm: Box::new(Oamp { noise: se.v_ab, sigma2: ctx.sigma2, prior: ctx.prior.clone() }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{derive_seed, generate_instance};
    use crate::sensing::SensingKind;
    use camp_core::se::solve_fixed_point;
    use camp_core::taps::taps_iid_gaussian;
    use camp_core::{BernoulliGaussian, Series};

    fn prior() -> Arc<dyn ScalarPrior> {
        Arc::new(BernoulliGaussian::new(0.1).unwrap())
    }

    #[test]
    fn first_iteration_uses_measurement() {
        // z_0 = y, so r_0 = Aᵀy for every algorithm that starts from x_0 = 0
        let a = SensingInstance::build(SensingKind::RowOrthogonal, 64, 128, derive_seed(0, 0, "A")).unwrap();
        let p = prior();
        let inst = generate_instance(p.as_ref(), 1e-3, &a, derive_seed(0, 0, "x"));
        let sched = taps_iid_gaussian(&Series::identity(4), 0.5).unwrap();
        let camp = Camp { schedule: sched, noise: vec![0.5; 3], prior: p.clone() };
        let opts = RunOptions { keep_errors: true, ..RunOptions::new(1, 1.0) };
        let tr = camp.run(&a, &inst.y, Some(&inst.x), &opts).unwrap();
        let mut aty = vec![0.0; 128];
        a.adjoint(&inst.y, &mut aty);
        for ((h, at), x) in tr.errors[0].iter().zip(&aty).zip(&inst.x) {
            assert!((h - (at - x)).abs() < 1e-14);
        }
        let p0 = inst.x.iter().map(|v| v * v).sum::<f64>() / 128.0;
        assert_eq!(tr.mse[0], p0);
    }

    #[test]
    fn camp_reduces_to_amp() {
        let (m, n) = (256, 512);
        let a = SensingInstance::build(SensingKind::IidGaussian { mean_weight: 0.0 }, m, n, derive_seed(3, 0, "A")).unwrap();
        let p = prior();
        let inst = generate_instance(p.as_ref(), 1e-2, &a, derive_seed(3, 0, "x"));
        let se = solve_amp_se(p.as_ref(), 1e-2, 0.5, 10).unwrap();
        let sched = taps_iid_gaussian(&Series::identity(12), 0.5).unwrap();
        let camp = Camp { schedule: sched, noise: se.v.clone(), prior: p.clone() };
        let amp = Amp { noise: se.v, onsager: Onsager::Empirical, prior: p };
        let opts = RunOptions { keep_estimates: true, ..RunOptions::new(10, 1.0) };
        let tc = camp.run(&a, &inst.y, Some(&inst.x), &opts).unwrap();
        let ta = amp.run(&a, &inst.y, Some(&inst.x), &opts).unwrap();
        for (xc, xa) in tc.estimates.iter().zip(&ta.estimates) {
            let gap = xc.iter().zip(xa).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-10, "{gap}");
        }
    }

    #[test]
    fn oamp_tracks_state_evolution() {
        let (m, n) = (1024, 2048);
        let model = SpectralModel::geometric(5.0, 0.5).unwrap();
        let p = prior();
        let sigma2 = 1e-3;
        let fp = solve_fixed_point(&model, p.as_ref(), sigma2).unwrap().solution;
        let ctx = AlgorithmContext {
            model: &model,
            prior: p.clone(),
            sigma2,
            fixed_point: &fp,
            theta_knob: 0.0,
            zeta: 1.0,
            iterations: 8,
        };
        let prep = prepare("oamp", &ctx).unwrap();
        let a = SensingInstance::build(SensingKind::Geometric { kappa: 5.0 }, m, n, derive_seed(1, 0, "A")).unwrap();
        let trials = 8;
        let mut avg = vec![0.0; 9];
        for k in 0..trials {
            let inst = generate_instance(p.as_ref(), sigma2, &a, derive_seed(1, k, "x"));
            let tr = prep.algorithm.run(&a, &inst.y, Some(&inst.x), &RunOptions::new(8, 1.0)).unwrap();
            avg.iter_mut().zip(&tr.mse).for_each(|(s, v)| *s += v / trials as f64);
        }
        for t in 0..4 {
            let rel = (avg[t + 1] - prep.se_prediction[t]).abs() / prep.se_prediction[t];
            assert!(rel < 0.15, "t = {t}: {} vs {}", avg[t + 1], prep.se_prediction[t]);
        }
        assert!(avg[8] < 2.0 * fp.d_s);
    }

    #[test]
    fn registry_lookup() {
        let names: Vec<_> = registry().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, ["camp", "amp", "oamp"]);
        let model = SpectralModel::row_orthogonal(0.5).unwrap();
        let fp = FixedPoint { a_s: 1.0, d_s: 0.1, xi_s: 0.1, residual_mse: 0.0, residual_r: 0.0, iterations: 0 };
        let ctx = AlgorithmContext {
            model: &model,
            prior: prior(),
            sigma2: 1e-3,
            fixed_point: &fp,
            theta_knob: 0.0,
            zeta: 1.0,
            iterations: 3,
        };
        assert!(matches!(prepare("ista", &ctx), Err(RecoveryError::UnknownAlgorithm(_))));
    }

    #[test]
    fn schedule_length_enforced() {
        let a = SensingInstance::build(SensingKind::RowOrthogonal, 8, 16, [0; 32]).unwrap();
        let amp = Amp { noise: vec![1.0; 2], onsager: Onsager::Empirical, prior: prior() };
        let err = amp.run(&a, &[0.0; 8], None, &RunOptions::new(3, 1.0)).unwrap_err();
        assert!(matches!(err, RecoveryError::ScheduleTooShort { need: 3, got: 2 }));
    }
}

//! Experiment orchestration: strict configs, seeded parallel trials,
//! aggregation, SE comparison, κ sweeps and CSV/JSON output.

use crate::algorithms::{prepare, registry, AlgorithmContext, Camp, Prepared, RecoveryAlgorithm, RecoveryError, RunOptions};
use crate::gaussianity::{pooled_report, GaussianityError, Moments};
use crate::instance::{derive_seed, generate_instance};
use crate::reference::ReferenceTable;
use crate::sensing::{SensingError, SensingInstance, SensingKind};
use camp_core::se::{design_schedule, solve_camp_se, solve_fixed_point, FixedPoint, SeError, SeOptions};
use camp_core::{BernoulliGaussian, DenoiserError, ScalarPrior, SpectralModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

/// Overrides the trial worker count.
pub const WORKERS_ENV: &str = "CAMP_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Se(#[from] SeError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Spectra(#[from] camp_core::spectra::SpectraError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Gaussianity(#[from] GaussianityError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Hadamard factor; row-orthogonal at `kappa = 1`, geometric above.
    Structured,
    IidGaussian,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub delta: f64,
    pub rho: f64,
    pub snr_db: f64,
    pub kappa: f64,
    #[serde(default = "default_kind")]
    pub kind: MatrixKind,
    pub theta_knob: f64,
    pub zeta: f64,
    pub iterations: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<String>,
    #[serde(default)]
    pub output_csv: Option<PathBuf>,
    #[serde(default)]
    pub output_json: Option<PathBuf>,
}

fn default_kind() -> MatrixKind {
    MatrixKind::Structured
}

impl ExperimentConfig {
    /// Desk-scale CAMP run at κ = 5 (N = 2^12, 100 trials).
    pub fn desk_default() -> Self {
        Self {
            m: 1 << 11,
            n: 1 << 12,
            delta: 0.5,
            rho: 0.1,
            snr_db: 30.0,
            kappa: 5.0,
            kind: MatrixKind::Structured,
            theta_knob: 0.0,
            zeta: 1.0,
            iterations: 150,
            trials: 100,
            base_seed: 2020,
            algorithms: vec!["camp".into()],
            output_csv: None,
            output_json: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Keys in `text` replace those of `self`; unknown keys are still
    /// rejected. Not validated, so callers can apply further overrides.
    pub fn overlay_toml(&self, text: &str) -> Result<Self, HarnessError> {
        let mut table = toml::Table::try_from(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        for (k, v) in text.parse::<toml::Table>()? {
            table.insert(k, v);
        }
        Ok(table.try_into()?)
    }

    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: String| Err(HarnessError::Config(s));
        if self.m == 0 || self.m > self.n {
            return bad(format!("M = {}, N = {}", self.m, self.n));
        }
        let ratio = self.m as f64 / self.n as f64;
        if (self.delta - ratio).abs() > 1e-12 {
            return bad(format!("delta = {} but M/N = {ratio}", self.delta));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta = {} outside (0, 1]", self.zeta));
        }
        if !self.snr_db.is_finite() {
            return bad(format!("snr_db = {}", self.snr_db));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho = {} outside (0, 1]", self.rho));
        }
        if self.kind == MatrixKind::Structured && !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be at least 1", self.kappa));
        }
        if !self.theta_knob.is_finite() {
            return bad(format!("theta_knob = {}", self.theta_knob));
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        for a in &self.algorithms {
            if !registry().iter().any(|(n, _)| n == a) {
                return Err(RecoveryError::UnknownAlgorithm(a.clone()).into());
            }
        }
        Ok(())
    }

    pub fn sensing_kind(&self) -> Result<SensingKind, HarnessError> {
        match self.kind {
            MatrixKind::Structured => Ok(SensingKind::from_condition_number(self.kappa)?),
            MatrixKind::IidGaussian => Ok(SensingKind::IidGaussian { mean_weight: 0.0 }),
        }
    }

    pub fn spectral_model(&self) -> Result<SpectralModel, HarnessError> {
        Ok(self.sensing_kind()?.spectral_model(self.delta)?)
    }
}

/// Sum by recursive halving, so the result depends only on the order of
/// `v`, not on how trials were scheduled.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = pairwise_sum(v) / k;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (k - 1.0) / k).sqrt())
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct FixedPointSummary {
    pub a_s: f64,
    pub d_s: f64,
    pub xi_s: f64,
    pub alternate_d_s: Option<f64>,
}

/// Value-only record returned by a trial worker.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    /// One MSE series per configured algorithm, `mse[0] = ‖x‖²/N`.
    pub mse: Vec<Vec<f64>>,
    pub diverged: Vec<bool>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Curve {
    pub algorithm: String,
    pub zeta: f64,
    /// Index `t` is the error of `x_t`.
    pub mean_mse: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Trials that reached iteration `t`.
    pub counts: Vec<usize>,
    /// Index `t` predicts the error of `x_t`; entry 0 is the prior power.
    pub se_prediction: Vec<f64>,
    pub se_exact: bool,
    pub se_divergence: Option<String>,
    pub diverged_trials: usize,
}

impl Curve {
    pub fn final_mse(&self) -> f64 {
        *self.mean_mse.last().expect("at least x_0")
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Metadata {
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AggregateResult {
    pub config: ExperimentConfig,
    pub sigma2: f64,
    pub fixed_point: FixedPointSummary,
    pub curves: Vec<Curve>,
    pub metadata: Metadata,
}

impl AggregateResult {
    pub fn curve(&self, algorithm: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.algorithm == algorithm)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Everything trials share: built once, then read-only.
pub struct Setup {
    pub config: ExperimentConfig,
    pub model: SpectralModel,
    pub prior: Arc<dyn ScalarPrior>,
    pub fixed_point: FixedPoint,
    pub alternate: Option<FixedPoint>,
    pub prepared: Vec<Prepared>,
    pub sensing: SensingInstance,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let sigma2 = config.sigma2();
        let model = config.spectral_model()?;
        let prior: Arc<dyn ScalarPrior> = Arc::new(BernoulliGaussian::new(config.rho)?);
        let fp = solve_fixed_point(&model, prior.as_ref(), sigma2)?;
        let ctx = AlgorithmContext {
            model: &model,
            prior: prior.clone(),
            sigma2,
            fixed_point: &fp.solution,
            theta_knob: config.theta_knob,
            zeta: config.zeta,
            iterations: config.iterations,
        };
        let prepared = config.algorithms.iter().map(|a| prepare(a, &ctx)).collect::<Result<Vec<_>, _>>()?;
        let sensing = SensingInstance::build(config.sensing_kind()?, config.m, config.n, derive_seed(config.base_seed, 0, "sensing"))?;
        Ok(Self { config: config.clone(), model, prior, fixed_point: fp.solution, alternate: fp.alternate, prepared, sensing })
    }

    /// Iterations each algorithm can run given its designed schedule.
    pub fn iterations(&self, k: usize) -> usize {
        self.config.iterations.min(self.prepared[k].algorithm.schedule_len())
    }

    pub fn run_trial(&self, trial: usize, opts_for: impl Fn(usize) -> RunOptions) -> Result<Vec<crate::RunTrace>, HarnessError> {
        let inst = generate_instance(self.prior.as_ref(), self.config.sigma2(), &self.sensing, derive_seed(self.config.base_seed, trial as u64, "signal"));
        self.prepared
            .iter()
            .enumerate()
            .map(|(k, p)| Ok(p.algorithm.run(&self.sensing, &inst.y, Some(&inst.x), &opts_for(k))?))
            .collect()
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult, HarnessError> {
    let started = unix_now();
    let setup = Setup::new(config)?;
    let pool = worker_pool()?;
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let traces = setup.run_trial(trial, |k| RunOptions::new(setup.iterations(k), config.zeta))?;
                Ok(TrialRecord {
                    trial,
                    diverged: traces.iter().map(|t| t.divergence.is_some()).collect(),
                    mse: traces.into_iter().map(|t| t.mse).collect(),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    let curves = setup
        .prepared
        .iter()
        .enumerate()
        .map(|(k, p)| aggregate_curve(&config.algorithms[k], config.zeta, p, &records, k))
        .collect();
    Ok(AggregateResult {
        config: config.clone(),
        sigma2: config.sigma2(),
        fixed_point: FixedPointSummary {
            a_s: setup.fixed_point.a_s,
            d_s: setup.fixed_point.d_s,
            xi_s: setup.fixed_point.xi_s,
            alternate_d_s: setup.alternate.map(|f| f.d_s),
        },
        curves,
        metadata: Metadata {
            version: concat!("camp-sim ", env!("CARGO_PKG_VERSION")).to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            workers: pool.current_num_threads(),
        },
    })
}

fn aggregate_curve(name: &str, zeta: f64, prepared: &Prepared, records: &[TrialRecord], k: usize) -> Curve {
    let depth = records.iter().map(|r| r.mse[k].len()).max().unwrap_or(0);
    let (mut mean_mse, mut stderr, mut counts) = (vec![], vec![], vec![]);
    for t in 0..depth {
        let vals: Vec<f64> = records.iter().filter_map(|r| r.mse[k].get(t).copied()).collect();
        let (m, s) = mean_stderr(&vals);
        mean_mse.push(m);
        stderr.push(s);
        counts.push(vals.len());
    }
    let mut se_prediction = vec![1.0];
    se_prediction.extend_from_slice(&prepared.se_prediction);
    Curve {
        algorithm: name.to_string(),
        zeta,
        mean_mse,
        stderr,
        counts,
        se_prediction,
        se_exact: prepared.se_exact,
        se_divergence: prepared.se_divergence.as_ref().map(|d| format!("iteration {}: {}", d.iteration, d.reason)),
        diverged_trials: records.iter().filter(|r| r.diverged[k]).count(),
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    iteration: usize,
    algorithm: &'a str,
    mean_mse: f64,
    stderr: f64,
    se_prediction: Option<f64>,
}

pub fn write_csv<W: std::io::Write>(result: &AggregateResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for c in &result.curves {
        for t in 0..c.mean_mse.len() {
            w.serialize(CsvRow {
                iteration: t,
                algorithm: &c.algorithm,
                mean_mse: c.mean_mse[t],
                stderr: c.stderr[t],
                se_prediction: c.se_prediction.get(t).copied(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV and JSON sidecar to the configured paths, if any.
pub fn write_outputs(result: &AggregateResult) -> Result<(), HarnessError> {
    if let Some(p) = &result.config.output_csv {
        write_csv(result, std::fs::File::create(p)?)?;
    }
    if let Some(p) = &result.config.output_json {
        std::fs::write(p, serde_json::to_string_pretty(result)?)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SeGap {
    pub algorithm: String,
    pub iteration: usize,
    pub mean_mse: f64,
    pub se_prediction: f64,
    pub relative_gap: f64,
    pub flagged: bool,
    pub se_exact: bool,
}

/// `|mean_mse - se|/se` for every iteration `t ≥ 1` that has a prediction.
pub fn compare_se(result: &AggregateResult, tolerance: f64) -> Vec<SeGap> {
    let mut out = vec![];
    for c in &result.curves {
        for t in 1..c.mean_mse.len().min(c.se_prediction.len()) {
            let (m, s) = (c.mean_mse[t], c.se_prediction[t]);
            let gap = (m - s).abs() / s;
            out.push(SeGap {
                algorithm: c.algorithm.clone(),
                iteration: t,
                mean_mse: m,
                se_prediction: s,
                relative_gap: gap,
                flagged: !(gap <= tolerance),
                se_exact: c.se_exact,
            });
        }
    }
    out
}

/// Where per-κ `θ` and `ζ` come from in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    /// `theta_knob` and `zeta` of the base config.
    Config,
    /// Undamped, `θ = -0.7` for `κ ≥ 17` and `0` otherwise.
    SeBaseline,
    /// Bundled per-κ reference values.
    Reference,
}

pub fn sweep_params(source: ParamSource, algorithm: &str, kappa: f64, base: &ExperimentConfig) -> (f64, f64) {
    match source {
        ParamSource::Config => (base.theta_knob, base.zeta),
        ParamSource::SeBaseline => (if kappa >= 17.0 { -0.7 } else { 0.0 }, 1.0),
        ParamSource::Reference => ReferenceTable::bundled()
            .lookup(algorithm, kappa)
            .map(|(r, _)| (r.theta, r.zeta))
            .unwrap_or((base.theta_knob, base.zeta)),
    }
}

/// Relative tolerance for "the recursion reached `d_s`".
pub const ATTAIN_TOL: f64 = 1e-3;
/// Window and relative spread for "the recursion settled".
pub const SETTLE_WINDOW: usize = 20;
pub const SETTLE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    pub algorithm: String,
    pub theta_knob: f64,
    pub zeta: f64,
    pub d_s: f64,
    pub se_final: Option<f64>,
    pub se_divergence: Option<String>,
    /// Spread of the last `SETTLE_WINDOW` SE values below `SETTLE_TOL`.
    pub se_settled: bool,
    pub se_attains_fixed_point: bool,
    pub sim_final: Option<f64>,
    pub sim_stderr: Option<f64>,
}

impl SweepRow {
    /// Non-convergent or far above the fixed point.
    pub fn breakdown(&self) -> bool {
        self.se_divergence.is_some() || !self.se_settled || self.se_final.is_none_or(|m| m > 10.0 * self.d_s)
    }
}

fn settled(curve: &[f64]) -> bool {
    if curve.len() < SETTLE_WINDOW {
        return false;
    }
    let tail = &curve[curve.len() - SETTLE_WINDOW..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    lo.is_finite() && hi.is_finite() && (hi - lo) <= SETTLE_TOL * lo.abs()
}

/// One row per `(κ, algorithm)`. With `simulate` false only the state
/// evolution is solved and `trials` is ignored.
pub fn sweep_kappa(base: &ExperimentConfig, kappas: &[f64], source: ParamSource, simulate: bool) -> Result<Vec<SweepRow>, HarnessError> {
    let mut rows = vec![];
    for &kappa in kappas {
        for alg in &base.algorithms {
            let (theta_knob, zeta) = sweep_params(source, alg, kappa, base);
            let cfg = ExperimentConfig { kappa, theta_knob, zeta, algorithms: vec![alg.clone()], ..base.clone() };
            let (d_s, curve, se_divergence, sim) = if simulate {
                let r = run_experiment(&cfg)?;
                let c = &r.curves[0];
                let sim = (c.final_mse(), *c.stderr.last().unwrap());
                (r.fixed_point.d_s, c.se_prediction.clone(), c.se_divergence.clone(), Some(sim))
            } else {
                cfg.validate()?;
                let model = cfg.spectral_model()?;
                let prior: Arc<dyn ScalarPrior> = Arc::new(BernoulliGaussian::new(cfg.rho)?);
                let fp = solve_fixed_point(&model, prior.as_ref(), cfg.sigma2())?.solution;
                let ctx = AlgorithmContext {
                    model: &model,
                    prior,
                    sigma2: cfg.sigma2(),
                    fixed_point: &fp,
                    theta_knob,
                    zeta,
                    iterations: cfg.iterations,
                };
                let p = prepare(alg, &ctx)?;
                let mut curve = vec![1.0];
                curve.extend_from_slice(&p.se_prediction);
                let div = p.se_divergence.map(|d| format!("iteration {}: {}", d.iteration, d.reason));
                (fp.d_s, curve, div, None)
            };
            let complete = se_divergence.is_none() && curve.len() == cfg.iterations + 1;
            let se_final = complete.then(|| *curve.last().unwrap());
            let se_settled = complete && settled(&curve);
            rows.push(SweepRow {
                kappa,
                algorithm: alg.clone(),
                theta_knob,
                zeta,
                d_s,
                se_final,
                se_divergence,
                se_settled,
                se_attains_fixed_point: se_settled && se_final.is_some_and(|m| (m - d_s).abs() <= ATTAIN_TOL * d_s),
                sim_final: sim.map(|s| s.0),
                sim_stderr: sim.map(|s| s.1),
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GridPoint {
    pub theta_knob: f64,
    pub zeta: f64,
    pub final_mse: f64,
    /// First iteration within `tolerance_db` of the best final MSE.
    pub iterations_to_target: Option<usize>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    pub best_final: f64,
    pub selected: Option<GridPoint>,
}

/// Simulates every `(θ, ζ)` pair for the single algorithm of `base` and
/// picks the fewest iterations to within `tolerance_db` of the best final
/// MSE among candidates whose own final MSE is that close.
pub fn grid_search(base: &ExperimentConfig, thetas: &[f64], zetas: &[f64], tolerance_db: f64) -> Result<GridResult, HarnessError> {
    if base.algorithms.len() != 1 {
        return Err(HarnessError::Config("grid search takes exactly one algorithm".into()));
    }
    let mut curves = vec![];
    for &theta_knob in thetas {
        for &zeta in zetas {
            let cfg = ExperimentConfig { theta_knob, zeta, output_csv: None, output_json: None, ..base.clone() };
            let r = run_experiment(&cfg)?;
            curves.push((theta_knob, zeta, r.curves[0].mean_mse.clone()));
        }
    }
    let finals: Vec<f64> = curves.iter().map(|c| *c.2.last().unwrap()).collect();
    let best_final = finals.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let target = best_final * 10f64.powf(tolerance_db / 10.0);
    let points: Vec<GridPoint> = curves
        .into_iter()
        .zip(&finals)
        .map(|((theta_knob, zeta, c), &f)| GridPoint {
            theta_knob,
            zeta,
            final_mse: f,
            iterations_to_target: if f <= target { c.iter().position(|&v| v <= target) } else { None },
        })
        .collect();
    let selected = points
        .iter()
        .filter(|p| p.iterations_to_target.is_some())
        .min_by_key(|p| p.iterations_to_target.unwrap())
        .cloned();
    Ok(GridResult { points, best_final, selected })
}

/// Pooled moments of `h_t` for CAMP over `config.trials` trials.
/// `g1_offset` shifts the first memory tap as a negative control; the
/// denoiser schedule stays that of the correct taps.
pub fn gaussianity_experiment(config: &ExperimentConfig, g1_offset: f64) -> Result<Vec<Moments>, HarnessError> {
    let cfg = ExperimentConfig { algorithms: vec!["camp".into()], ..config.clone() };
    let setup = Setup::new(&cfg)?;
    let last = cfg.iterations - 1;
    let mut schedule = design_schedule(&setup.model, cfg.theta_knob, &setup.fixed_point, last)?;
    let se = solve_camp_se(&schedule, setup.prior.as_ref(), cfg.sigma2(), SeOptions { iterations: last, zeta: cfg.zeta })?;
    let g1 = schedule.g.coeffs()[1];
    schedule.g.set(1, g1 + g1_offset);
    let camp = Camp { schedule, noise: se.pre_variance(), prior: setup.prior.clone() };
    let opts = RunOptions { keep_errors: true, ..RunOptions::new(cfg.iterations.min(camp.schedule_len()), cfg.zeta) };
    let pool = worker_pool()?;
    let traces = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let inst = generate_instance(setup.prior.as_ref(), cfg.sigma2(), &setup.sensing, derive_seed(cfg.base_seed, trial as u64, "signal"));
                Ok(camp.run(&setup.sensing, &inst.y, Some(&inst.x), &opts)?)
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    Ok(pooled_report(&traces)?)
}

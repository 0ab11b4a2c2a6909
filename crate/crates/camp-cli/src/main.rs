//! `camp`: taps, state evolution, fixed points and Monte-Carlo experiments.
//!
//! Every subcommand starts from the desk defaults, overlays `--config`
//! (TOML, strict keys) and then the individual flags. Failures print
//! `{"error": kind, "message": ...}` on stderr and exit nonzero.

use camp_core::se::{design_schedule, solve_camp_se, solve_fixed_point, theta_conditions, SeOptions};
use camp_core::taps::{taps_for_model, theta_schedule};
use camp_core::{BernoulliGaussian, SpectralModel};
use camp_sim::harness::{
    compare_se, gaussianity_experiment, grid_search, run_experiment, sweep_kappa, write_csv, write_outputs, write_sweep_csv,
    ExperimentConfig, HarnessError, MatrixKind, ParamSource,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Se(#[from] camp_core::se::SeError),
    #[error(transparent)]
    Taps(#[from] camp_core::taps::TapError),
    #[error(transparent)]
    Spectra(#[from] camp_core::spectra::SpectraError),
    #[error(transparent)]
    Denoiser(#[from] camp_core::DenoiserError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Harness(HarnessError::Config(_) | HarnessError::Parse(_)) => "config",
            CliError::Harness(_) => "experiment",
            CliError::Se(_) => "state_evolution",
            CliError::Taps(_) => "taps",
            CliError::Spectra(_) => "spectrum",
            CliError::Denoiser(_) => "denoiser",
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => "io",
            CliError::Usage(_) => "usage",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "camp", version, about = "Convolutional AMP: taps, state evolution and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tap schedule as CSV (tau, theta, g, p, q, r).
    Taps {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Spectrum; overrides the one implied by --kappa/--matrix.
        #[arg(long)]
        kind: Option<Ensemble>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CAMP state evolution: a_{t,t} and d_{t+1,t+1} per iteration.
    Se {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write the full a and d matrices (long format).
        #[arg(long)]
        matrices: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed point (a_s, d_s, xi_s) as JSON.
    FixedPoint {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Monte-Carlo trials; CSV to --output-csv or stdout.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write per-iteration SE gaps, flagged above this relative tolerance.
        #[arg(long, requires = "gaps_out")]
        gap_tolerance: Option<f64>,
        #[arg(long)]
        gaps_out: Option<PathBuf>,
    },
    /// One row per (kappa, algorithm), or a theta/zeta grid search per kappa.
    SweepKappa {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,15,20")]
        kappas: Vec<f64>,
        #[arg(long, value_enum, default_value = "reference")]
        source: Source,
        /// Run trials as well as state evolution.
        #[arg(long)]
        simulate: bool,
        #[arg(long, value_delimiter = ',', requires = "grid_zetas")]
        grid_thetas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', requires = "grid_thetas")]
        grid_zetas: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1)]
        tolerance_db: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pooled skewness, excess kurtosis and KS distance of h_t.
    Gaussianity {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Shift of g_1 (negative control).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        g1_offset: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ensemble {
    Iid,
    RowOrthogonal,
    Geometric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Source {
    Config,
    SeBaseline,
    Reference,
}

impl From<Source> for ParamSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Config => ParamSource::Config,
            Source::SeBaseline => ParamSource::SeBaseline,
            Source::Reference => ParamSource::Reference,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Matrix {
    Structured,
    IidGaussian,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML file with any subset of the experiment keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// M/N; sets M from N unless --m is given.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum)]
    matrix: Option<Matrix>,
    #[arg(long, allow_negative_numbers = true)]
    theta_knob: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long = "T", visible_alias = "iterations")]
    iterations: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    #[arg(long)]
    output_csv: Option<PathBuf>,
    #[arg(long)]
    output_json: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = ExperimentConfig::desk_default();
        if let Some(p) = &self.config {
            c = c.overlay_toml(&std::fs::read_to_string(p)?)?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { c.$f = v.clone(); })* };
        }
        set!(n, rho, snr_db, kappa, theta_knob, zeta, iterations, trials, base_seed, algorithms);
        if let Some(d) = self.delta {
            c.delta = d;
            if self.m.is_none() {
                c.m = (d * c.n as f64).round() as usize;
            }
        } else if self.n.is_some() && self.m.is_none() {
            c.m = (c.delta * c.n as f64).round() as usize;
        }
        if let Some(m) = self.m {
            c.m = m;
        }
        if let Some(k) = self.matrix {
            c.kind = match k {
                Matrix::Structured => MatrixKind::Structured,
                Matrix::IidGaussian => MatrixKind::IidGaussian,
            };
        }
        if self.output_csv.is_some() {
            c.output_csv = self.output_csv.clone();
        }
        if self.output_json.is_some() {
            c.output_json = self.output_json.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>, out: Box<dyn Write>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn warn(message: &str) {
    eprintln!("{}", serde_json::json!({ "warning": message }));
}

#[derive(Serialize)]
struct TapRow {
    tau: usize,
    theta: f64,
    g: f64,
    p: f64,
    q: f64,
    r: f64,
}

fn cmd_taps(cfg: &ExperimentConfig, kind: Option<Ensemble>, out: &Option<PathBuf>) -> Result<(), CliError> {
    let model = match kind {
        None => cfg.spectral_model()?,
        Some(Ensemble::Iid) => SpectralModel::iid_gaussian(cfg.delta)?,
        Some(Ensemble::RowOrthogonal) => SpectralModel::row_orthogonal(cfg.delta)?,
        Some(Ensemble::Geometric) => SpectralModel::geometric(cfg.kappa, cfg.delta)?,
    };
    let prior = BernoulliGaussian::new(cfg.rho)?;
    let fp = solve_fixed_point(&model, &prior, cfg.sigma2())?.solution;
    let theta = theta_schedule(cfg.theta_knob, fp.a_s, fp.d_s, cfg.iterations)?;
    let s = taps_for_model(&model, &theta)?;
    let rows = (0..=cfg.iterations).map(|t| TapRow {
        tau: t,
        theta: s.theta.coeffs()[t],
        g: s.g.coeffs()[t],
        p: s.p.coeffs()[t],
        q: s.q.coeffs()[t],
        r: s.r.coeffs()[t],
    });
    write_rows(rows, sink(out)?)
}

#[derive(Serialize)]
struct SeRow {
    iteration: usize,
    a_tt: f64,
    d_next: f64,
    xi_bar: f64,
}

#[derive(Serialize)]
struct MatrixRow {
    t_prime: usize,
    t: usize,
    a: Option<f64>,
    d: f64,
}

fn cmd_se(cfg: &ExperimentConfig, matrices: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<(), CliError> {
    let model = cfg.spectral_model()?;
    let prior = BernoulliGaussian::new(cfg.rho)?;
    let fp = solve_fixed_point(&model, &prior, cfg.sigma2())?.solution;
    let last = cfg.iterations.saturating_sub(1);
    let sched = design_schedule(&model, cfg.theta_knob, &fp, last)?;
    let st = solve_camp_se(&sched, &prior, cfg.sigma2(), SeOptions { iterations: last, zeta: cfg.zeta })?;
    if let Some(d) = &st.divergence {
        warn(&format!("state evolution diverged at iteration {}: {}", d.iteration, d.reason));
    }
    let rows = (0..st.completed).map(|t| SeRow { iteration: t, a_tt: st.a.get(t, t), d_next: st.d.get(t + 1, t + 1), xi_bar: st.xi_bar[t] });
    write_rows(rows, sink(out)?)?;
    if matrices.is_some() {
        let n = st.completed;
        let rows = (0..=n).flat_map(|tp| (0..=n).map(move |t| (tp, t))).map(|(tp, t)| MatrixRow {
            t_prime: tp,
            t,
            a: (tp < n && t < n).then(|| st.a.get(tp, t)),
            d: st.d.get(tp, t),
        });
        write_rows(rows, sink(matrices)?)?;
    }
    Ok(())
}

fn cmd_fixed_point(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = cfg.spectral_model()?;
    let prior = BernoulliGaussian::new(cfg.rho)?;
    let rep = solve_fixed_point(&model, &prior, cfg.sigma2())?;
    let fp = rep.solution;
    let theta = theta_schedule(cfg.theta_knob, fp.a_s, fp.d_s, 2)?;
    let cond = theta_conditions(&theta, fp.xi_s);
    let body = serde_json::json!({
        "a_s": fp.a_s,
        "d_s": fp.d_s,
        "xi_s": fp.xi_s,
        "residual_mse": fp.residual_mse,
        "residual_r": fp.residual_r,
        "iterations": fp.iterations,
        "alternate": rep.alternate.map(|a| serde_json::json!({ "a_s": a.a_s, "d_s": a.d_s, "xi_s": a.xi_s })),
        "theta_conditions": {
            "value": cond.value,
            "derivative_term": cond.derivative_term,
            "hold": cond.hold(1e-9),
        },
    });
    println!("{}", serde_json::to_string_pretty(&body)?);
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, gap_tolerance: Option<f64>, gaps_out: &Option<PathBuf>) -> Result<(), CliError> {
    let result = run_experiment(cfg)?;
    for c in &result.curves {
        if let Some(d) = &c.se_divergence {
            warn(&format!("{}: state evolution diverged at {d}", c.algorithm));
        }
    }
    write_outputs(&result)?;
    if cfg.output_csv.is_none() {
        write_csv(&result, std::io::stdout().lock())?;
    }
    if let Some(tol) = gap_tolerance {
        write_rows(compare_se(&result, tol), sink(gaps_out)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GridRow {
    kappa: f64,
    theta_knob: f64,
    zeta: f64,
    final_mse: f64,
    iterations_to_target: Option<usize>,
    selected: bool,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cfg: &ExperimentConfig,
    kappas: &[f64],
    source: Source,
    simulate: bool,
    grid: Option<(&[f64], &[f64])>,
    tolerance_db: f64,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some((thetas, zetas)) = grid {
        let mut rows = vec![];
        for &kappa in kappas {
            let r = grid_search(&ExperimentConfig { kappa, ..cfg.clone() }, thetas, zetas, tolerance_db)?;
            for p in r.points {
                let selected = r.selected.as_ref() == Some(&p);
                rows.push(GridRow {
                    kappa,
                    theta_knob: p.theta_knob,
                    zeta: p.zeta,
                    final_mse: p.final_mse,
                    iterations_to_target: p.iterations_to_target,
                    selected,
                });
            }
        }
        return write_rows(rows, sink(out)?);
    }
    let rows = sweep_kappa(cfg, kappas, source.into(), simulate)?;
    write_sweep_csv(&rows, sink(out)?)?;
    Ok(())
}

#[derive(Serialize)]
struct GaussRow {
    iteration: usize,
    samples: usize,
    skewness: f64,
    excess_kurtosis: f64,
    ks_statistic: f64,
    ks_rejects_at_1pct: bool,
}

fn cmd_gaussianity(cfg: &ExperimentConfig, g1_offset: f64, out: &Option<PathBuf>) -> Result<(), CliError> {
    let rep = gaussianity_experiment(cfg, g1_offset)?;
    let rows = rep.iter().map(|m| GaussRow {
        iteration: m.iteration,
        samples: m.samples,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
        ks_statistic: m.ks_statistic,
        ks_rejects_at_1pct: m.ks_rejects(0.01),
    });
    write_rows(rows, sink(out)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Taps { cfg, kind, out } => cmd_taps(&cfg.resolve()?, kind, &out),
        Command::Se { cfg, matrices, out } => cmd_se(&cfg.resolve()?, &matrices, &out),
        Command::FixedPoint { cfg } => cmd_fixed_point(&cfg.resolve()?),
        Command::Simulate { cfg, gap_tolerance, gaps_out } => cmd_simulate(&cfg.resolve()?, gap_tolerance, &gaps_out),
        Command::SweepKappa { cfg, kappas, source, simulate, grid_thetas, grid_zetas, tolerance_db, out } => {
            let cfg = cfg.resolve()?;
            if kappas.is_empty() {
                return Err(CliError::Usage("--kappas is empty".into()));
            }
            let grid = grid_thetas.as_deref().zip(grid_zetas.as_deref());
            cmd_sweep(&cfg, &kappas, source, simulate, grid, tolerance_db, &out)
        }
        Command::Gaussianity { cfg, g1_offset, out } => cmd_gaussianity(&cfg.resolve()?, g1_offset, &out),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}

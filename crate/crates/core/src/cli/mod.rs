//! Command-line front end.
//!
//! ```text
//! sdemath coeffs generate --weights 0,0,0 --jmax 6 --store coeffs.txt
//! sdemath coeffs verify --samples 200 --tolerance 1e-10
//! sdemath simulate --model m.json --order 1.5 --dt 0.001 --T 1 --paths 100 --C 50 --out run
//! sdemath convergence --model gbm.json --order 0.5,1.0 --dt 0.125,0.0625 --ref-dt 0.0009765625 --T 1 --out conv
//! sdemath linear --model solar.json --dt 0.1 --T 50 --paths 10000 --out solar
//! ```
//!
//! Every command writes `report.json` into `--out` along with its CSV tables.
//! Exit codes: `0` success, `1` usage or input errors, `2` numeric failure
//! (diverged paths, failed verification, overflow).

mod model_file;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coeffs::{cbar, quadrature::cbar_numeric, CoeffError, CoeffKey, CoeffStore, SCHEME_WEIGHTS};
use crate::integrals::PathRng;
use crate::linear::{simulate_linear, LinearConfig, LinearError, LinearPrecomp};
use crate::schemes::{
    gbm_solution, run_study, Calculus, Order, Reference, SchemeConfig, SchemeError, Simulator,
    StudySpec, Trajectory,
};

pub use model_file::{LinearFile, ModelFile, NonlinearFile, Rows};
pub use output::{moments_csv, study_csv, trajectory_csv, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::Config(_) | SchemeError::Model(_) => CliError::Usage(e.to_string()),
            SchemeError::Accuracy(crate::accuracy::AccuracyError::Coeff(c)) => c.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<CoeffError> for CliError {
    fn from(e: CoeffError) -> Self {
        match e {
            CoeffError::Io { .. } | CoeffError::Format { .. } => CliError::Io(e.to_string()),
            CoeffError::Missing(_) | CoeffError::UnsupportedWeights(_) | CoeffError::Shape { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<LinearError> for CliError {
    fn from(e: LinearError) -> Self {
        match e {
            LinearError::Dimension(_) | LinearError::Input(_) | LinearError::Config(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sdemath", version, about = "High-order strong schemes for Itô SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or verify Fourier–Legendre coefficients.
    #[command(subcommand)]
    Coeffs(CoeffsCommand),
    /// Simulate a nonlinear model: path 0 and ensemble moments.
    Simulate(SimulateArgs),
    /// Strong error study against a fine-grid or exact reference.
    Convergence(ConvergenceArgs),
    /// Exact-distribution simulation of a linear model.
    Linear(LinearArgs),
}

#[derive(Debug, Subcommand)]
pub enum CoeffsCommand {
    /// Fill the index box `0..=jmax` of one weight tuple.
    Generate(GenerateArgs),
    /// Compare exact coefficients with numerical quadrature on random keys.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StoreArgs {
    /// Coefficient cache file; kept in memory when omitted.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Fail instead of computing coefficients missing from the cache.
    #[arg(long)]
    pub no_generate: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Weight tuple, innermost first.
    #[arg(long, value_delimiter = ',', required = true)]
    pub weights: Vec<u8>,
    /// Largest degree per position (one value applies to all).
    #[arg(long, value_delimiter = ',', required = true)]
    pub jmax: Vec<usize>,
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Largest Legendre degree drawn per position.
    #[arg(long, default_value_t = 6)]
    pub max_index: u16,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub order: Order,
    #[arg(long, default_value = "ito")]
    pub calculus: Calculus,
    #[arg(long)]
    pub dt: f64,
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Orders to study.
    #[arg(long, value_delimiter = ',', required = true)]
    pub order: Vec<Order>,
    #[arg(long, default_value = "ito")]
    pub calculus: Calculus,
    /// Coarse step sizes; each must be a multiple of the reference step.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dt: Vec<f64>,
    #[arg(long)]
    pub ref_dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 100)]
    pub paths: usize,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `gbm:MU,SIGMA` for the exact scalar solution, or the order of the
    /// Itô scheme run on the reference grid (default: highest studied order).
    #[arg(long)]
    pub reference: Option<String>,
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LinearArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dt: f64,
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Outcome of `coeffs verify`.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub tolerance: f64,
    pub max_index: u16,
    pub seed: u64,
    pub max_error: f64,
    pub failures: Vec<VerifyFailure>,
    pub passed: bool,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyFailure {
    pub weights: Vec<u8>,
    pub indices: Vec<u16>,
    pub exact: f64,
    pub numeric: f64,
}

fn open_store(args: &StoreArgs) -> Result<CoeffStore, CliError> {
    let store = match &args.store {
        Some(p) => CoeffStore::open(p)?,
        None => CoeffStore::in_memory(),
    };
    store.set_generation(!args.no_generate);
    store.set_progress(true);
    Ok(store)
}

fn load_nonlinear(path: &Path) -> Result<crate::operators::SdeModel, CliError> {
    match ModelFile::load(path)? {
        ModelFile::Nonlinear(f) => f.build(),
        other => Err(CliError::Usage(format!(
            "{}: expected a nonlinear model, found kind \"{}\"",
            path.display(),
            other.kind()
        ))),
    }
}

fn finish(out: &Path, mut report: RunReport, started: Instant) -> Result<RunReport, CliError> {
    report.wall_time_s = started.elapsed().as_secs_f64();
    let path = out.join("report.json");
    report.outputs.push(path.clone());
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    output::write_file(&path, &text)?;
    Ok(report)
}

fn write_output(out: &Path, name: &str, text: &str, report: &mut RunReport) -> Result<(), CliError> {
    let path = out.join(name);
    output::write_file(&path, text)?;
    report.outputs.push(path);
    Ok(())
}

/// Fills one coefficient box and returns its size.
pub fn cmd_coeffs_generate(args: &GenerateArgs) -> Result<usize, CliError> {
    let jmax: Vec<usize> = match args.jmax.as_slice() {
        [j] => vec![*j; args.weights.len()],
        js if js.len() == args.weights.len() => js.to_vec(),
        _ => {
            return Err(CliError::Usage(
                "--jmax needs one value or one per weight".into(),
            ))
        }
    };
    let store = CoeffStore::open(&args.store)?;
    store.set_progress(true);
    Ok(store.generate_range(&args.weights, &jmax)?)
}

/// Draws random supported keys and compares exact and numerical coefficients.
pub fn cmd_coeffs_verify(args: &VerifyArgs) -> Result<VerifyReport, CliError> {
    let started = Instant::now();
    let mut rng = PathRng::new(args.seed);
    let mut pick = |n: usize| ((rng.uniform() * n as f64) as usize).min(n - 1);
    let pool: Vec<&[u8]> = std::iter::once(&[0u8, 0][..]).chain(SCHEME_WEIGHTS).collect();
    let keys: Vec<CoeffKey> = (0..args.samples)
        .map(|_| {
            let w = pool[pick(pool.len())];
            let idx: Vec<u16> = w
                .iter()
                .map(|_| pick(args.max_index as usize + 1) as u16)
                .collect();
            CoeffKey::new(w, &idx)
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<(CoeffKey, f64, f64), CoeffError>> = keys
        .into_par_iter()
        .map(|key| {
            let exact = cbar(&key)?.to_f64().unwrap_or(f64::NAN);
            let numeric = cbar_numeric(&key.weights, &key.indices)?;
            Ok((key, exact, numeric))
        })
        .collect();
    let mut max_error = 0.0f64;
    let mut failures = Vec::new();
    for r in results {
        let (key, exact, numeric) = r?;
        let err = (exact - numeric).abs();
        max_error = max_error.max(err);
        if !(err <= args.tolerance) {
            failures.push(VerifyFailure {
                weights: key.weights,
                indices: key.indices,
                exact,
                numeric,
            });
        }
    }
    let report = VerifyReport {
        samples: args.samples,
        tolerance: args.tolerance,
        max_index: args.max_index,
        seed: args.seed,
        max_error,
        passed: failures.is_empty(),
        failures,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    if let Some(out) = &args.out {
        output::ensure_dir(out)?;
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        output::write_file(&out.join("report.json"), &text)?;
    }
    Ok(report)
}

/// Path 0 as `trajectory.csv` and ensemble moments as `moments.csv`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let model = load_nonlinear(&args.model)?;
    let store = open_store(&args.store)?;
    let config = SchemeConfig {
        order: args.order,
        calculus: args.calculus,
        delta: args.dt,
        horizon: args.horizon,
        c: args.c,
        seed: args.seed,
        paths: args.paths,
    };
    if args.paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    let sim = Simulator::new(&model, config, &store)?;
    store.flush()?;
    output::ensure_dir(&args.out)?;
    let mut report = RunReport {
        command: "simulate".into(),
        seed: args.seed,
        model: Some(args.model.display().to_string()),
        order: Some(args.order.to_string()),
        calculus: Some(args.calculus.to_string()),
        dt: Some(args.dt),
        horizon: Some(args.horizon),
        paths: Some(args.paths),
        c: Some(args.c),
        qset: Some(serde_json::json!({ "q": sim.qset().q, "extra": sim.qset().extra })),
        residuals: sim.qset().residuals.clone(),
        ..RunReport::default()
    };
    let times = sim.times();
    let mut states = Vec::new();
    let first = sim.run(0, |_, y| states.push(y.to_vec()));
    let traj = Trajectory {
        times: times[..states.len()].to_vec(),
        states,
    };
    write_output(&args.out, "trajectory.csv", &trajectory_csv(&traj), &mut report)?;
    if let Err(e) = first {
        if !matches!(e, SchemeError::Divergence { .. }) {
            return Err(e.into());
        }
    }
    let ens = sim.ensemble(false)?;
    write_output(&args.out, "moments.csv", &moments_csv(&ens.moments, "x"), &mut report)?;
    report.diverged = ens.diverged.len();
    report.details = serde_json::json!({ "diverged_paths": ens.diverged });
    finish(&args.out, report, started)
}

fn parse_reference(text: Option<&str>, orders: &[Order]) -> Result<Reference, CliError> {
    let highest = orders.iter().copied().max().unwrap_or(Order::One);
    let Some(text) = text else {
        return Ok(Reference::Fine(highest));
    };
    if let Some(rest) = text.strip_prefix("gbm:") {
        let v: Vec<f64> = rest
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("invalid reference `{text}`")))?;
        let [mu, sigma] = v[..] else {
            return Err(CliError::Usage("gbm reference needs MU,SIGMA".into()));
        };
        return Ok(Reference::Exact(gbm_solution(mu, sigma)));
    }
    text.parse::<Order>()
        .map(Reference::Fine)
        .map_err(CliError::Usage)
}

/// Error table `convergence.csv` and fitted slopes in the report.
pub fn cmd_convergence(args: &ConvergenceArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let model = load_nonlinear(&args.model)?;
    let reference = parse_reference(args.reference.as_deref(), &args.order)?;
    if matches!(reference, Reference::Exact(_)) && model.n != 1 {
        return Err(CliError::Usage("the gbm reference needs a scalar model".into()));
    }
    let store = open_store(&args.store)?;
    let spec = StudySpec {
        schemes: args.order.iter().map(|&o| (o, args.calculus)).collect(),
        deltas: args.dt.clone(),
        ref_delta: args.ref_dt,
        horizon: args.horizon,
        paths: args.paths,
        c: args.c,
        seed: args.seed,
        reference,
    };
    let study = run_study(&model, &spec, &store)?;
    store.flush()?;
    output::ensure_dir(&args.out)?;
    let mut report = RunReport {
        command: "convergence".into(),
        seed: args.seed,
        model: Some(args.model.display().to_string()),
        order: Some(
            args.order
                .iter()
                .map(Order::to_string)
                .collect::<Vec<_>>()
                .join(","),
        ),
        calculus: Some(args.calculus.to_string()),
        horizon: Some(args.horizon),
        paths: Some(args.paths),
        c: Some(args.c),
        diverged: study.reference_diverged + study.rows.iter().map(|r| r.diverged).sum::<usize>(),
        details: serde_json::json!({
            "ref_dt": args.ref_dt,
            "dt": args.dt,
            "slopes": study.slopes,
            "rows": study.rows,
            "reference_diverged": study.reference_diverged,
        }),
        ..RunReport::default()
    };
    write_output(&args.out, "convergence.csv", &study_csv(&study.rows), &mut report)?;
    finish(&args.out, report, started)
}

/// State moments, output moments and path 0 of a linear model.
pub fn cmd_linear(args: &LinearArgs) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let model = match ModelFile::load(&args.model)? {
        ModelFile::Linear(f) => f.build()?,
        other => {
            return Err(CliError::Usage(format!(
                "{}: expected a linear model, found kind \"{}\"",
                args.model.display(),
                other.kind()
            )))
        }
    };
    if args.paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    let config = LinearConfig {
        delta: args.dt,
        horizon: args.horizon,
        paths: args.paths,
        seed: args.seed,
    };
    let pre = LinearPrecomp::new(&model, args.dt)?;
    let run = simulate_linear(&model, &config, false)?;
    let first = simulate_linear(&model, &LinearConfig { paths: 1, ..config }, true)?;
    output::ensure_dir(&args.out)?;
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    let mut report = RunReport {
        command: "linear".into(),
        seed: args.seed,
        model: Some(args.model.display().to_string()),
        dt: Some(args.dt),
        horizon: Some(args.horizon),
        paths: Some(args.paths),
        details: serde_json::json!({
            "factor_defect": run.factor_defect,
            "covariance_residual": run.covariance_residual,
            "transition": rows(&pre.phi),
            "input_map": rows(&pre.gamma),
            "step_covariance": rows(&pre.df),
            "noise_factor": rows(&pre.factor),
        }),
        ..RunReport::default()
    };
    let traj = &first.trajectories.as_ref().expect("kept")[0];
    write_output(&args.out, "trajectory.csv", &trajectory_csv(traj), &mut report)?;
    write_output(&args.out, "moments.csv", &moments_csv(&run.state, "x"), &mut report)?;
    if let Some(out) = &run.output {
        write_output(&args.out, "output_moments.csv", &moments_csv(out, "y"), &mut report)?;
    }
    finish(&args.out, report, started)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result: Result<(), CliError> = match &cli.command {
        Command::Coeffs(CoeffsCommand::Generate(a)) => cmd_coeffs_generate(a).map(|count| {
            println!("{count} coefficients in {}", a.store.display());
        }),
        Command::Coeffs(CoeffsCommand::Verify(a)) => cmd_coeffs_verify(a).and_then(|r| {
            println!(
                "{} of {} samples within {:e} (largest error {:e})",
                r.samples - r.failures.len(),
                r.samples,
                r.tolerance,
                r.max_error
            );
            if r.passed {
                Ok(())
            } else {
                Err(CliError::Numeric("coefficient verification failed".into()))
            }
        }),
        Command::Simulate(a) => cmd_simulate(a).and_then(report_outcome),
        Command::Convergence(a) => cmd_convergence(a).and_then(|r| {
            if let Some(slopes) = r.details.get("slopes").and_then(|s| s.as_array()) {
                for s in slopes {
                    println!(
                        "order {} {}: slope {}",
                        s["order"].as_str().unwrap_or("?"),
                        s["calculus"].as_str().unwrap_or("?"),
                        s["slope"]
                    );
                }
            }
            report_outcome(r)
        }),
        Command::Linear(a) => cmd_linear(a).and_then(report_outcome),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn report_outcome(report: RunReport) -> Result<(), CliError> {
    for p in &report.outputs {
        println!("wrote {}", p.display());
    }
    if report.diverged > 0 {
        Err(CliError::Numeric(format!(
            "{} path(s) diverged; see the report",
            report.diverged
        )))
    } else {
        Ok(())
    }
}

/// Parses `std::env::args` and runs; clap usage errors exit with code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

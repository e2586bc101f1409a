//! Command-line front door for the spectral laboratory: forward spectrum
//! computation, m-function evaluation and real-axis plot data, spectral
//! completion, potential reconstruction, hypothesis checking, and the
//! free-potential self-test.
//!
//! Numeric tables are CSV, structured results are JSON. Identical inputs and
//! seeds produce byte-identical outputs. Exit codes: 0 success, 1 failed
//! self-test, 2 configuration error, 3 computation failure, 4 hypothesis
//! refusal, 5 non-convergence.

mod inputs;
mod selftest;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use inputs::{CompleteInput, CompletionModeInput, PotentialInput, ReconstructInput};
use spectralmix::reconstruct::{self, ReconstructOptions, ReconstructionProblem};
use spectralmix::{completion, sturm, weyl};
use spectralmix::{CompletionOptions, Error, NonMatchingMode};

#[derive(Parser)]
#[command(
    name = "spectralmix",
    version,
    about = "Forward and inverse spectral computations for −u″ + qu = zu on (0, π)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a spectrum and its spectral measure, with asymptotics residuals.
    Forward(ForwardArgs),
    /// Evaluate the m-function on a grid; real grids also emit marker files.
    Mfunc(MfuncArgs),
    /// Recover missing second-spectrum eigenvalues from mixed spectral data.
    Complete(CompleteArgs),
    /// Fit a potential family to one or two spectra.
    Reconstruct(ReconstructArgs),
    /// Run the summability checks behind the non-matching completion modes.
    CheckHypotheses(CheckHypothesesArgs),
    /// Run the free-potential golden suite and print a pass/fail table.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct ForwardArgs {
    /// Potential and boundary-condition JSON.
    #[arg(long)]
    input: PathBuf,
    /// Main CSV path; the asymptotics CSV derives from it.
    #[arg(long)]
    output: PathBuf,
    /// Number of eigenvalues to compute.
    #[arg(long, default_value_t = 20)]
    n_max: usize,
}

#[derive(Args)]
struct MfuncArgs {
    /// Potential and boundary-condition JSON.
    #[arg(long)]
    input: PathBuf,
    /// Main CSV path; marker CSVs derive from it on real grids.
    #[arg(long)]
    output: PathBuf,
    /// Grid: "start:stop:count" (real axis), "start:stop:count:imag"
    /// (horizontal line in ℂ), or "random:re0:re1:im0:im1:count".
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// Number of marker entries per spectrum on real grids.
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    /// Exclusion radius around poles on real grids.
    #[arg(long, default_value_t = 0.05)]
    exclusion: f64,
    /// Seed for random grids.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompleteArgs {
    /// Mixed spectral data JSON.
    #[arg(long)]
    input: PathBuf,
    /// Result JSON path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Residual tolerance on the residue equations.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Reconstruction problem JSON.
    #[arg(long)]
    input: PathBuf,
    /// Fit report JSON path (the residual-trace CSV derives from it);
    /// stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckHypothesesArgs {
    /// Mixed spectral data JSON (index maps optional).
    #[arg(long)]
    input: PathBuf,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Product truncation for the m-function agreement items.
    #[arg(long, default_value_t = 400)]
    truncation: usize,
    /// Overrides every item tolerance when set.
    #[arg(long)]
    tol: Option<f64>,
}

enum CliError {
    Config(String),
    Io(PathBuf, std::io::Error),
    Run(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Io(path, err) => write!(f, "{}: {err}", path.display()),
            CliError::Run(err) => write!(f, "{err}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(..) => 3,
            CliError::Run(err) => match err {
                Error::Parameter(_) => 2,
                Error::Domain(_)
                | Error::Degenerate(_)
                | Error::Conditioning(_)
                | Error::PoleProximity(_)
                | Error::Solver(_) => 3,
                Error::Hypothesis(..) => 4,
                Error::NonConvergence { .. } => 5,
            },
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Run(err)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() {
    spectralmix::configure_threads_from_env();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Forward(args) => cmd_forward(&args),
        Command::Mfunc(args) => cmd_mfunc(&args),
        Command::Complete(args) => cmd_complete(&args),
        Command::Reconstruct(args) => cmd_reconstruct(&args),
        Command::CheckHypotheses(args) => cmd_check_hypotheses(&args),
        Command::Selftest(args) => selftest::run(&args.into()),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if let CliError::Run(Error::NonConvergence { trace, .. }) = &err {
                let rendered: Vec<String> = trace.iter().map(|r| format!("{r:.6e}")).collect();
                eprintln!("residual trace: [{}]", rendered.join(", "));
            }
            err.exit_code()
        }
    };
    std::process::exit(code);
}

impl From<SelftestArgs> for selftest::Config {
    fn from(args: SelftestArgs) -> Self {
        selftest::Config { truncation: args.truncation, tol: args.tol }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    match output {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `out.csv` + "zeros" → `out_zeros.csv`.
fn derived_path(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

/// Like [`derived_path`] but always a CSV, for tables attached to JSON
/// reports.
fn derived_csv(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    base.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn positive(name: &str, value: f64) -> CliResult<f64> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(CliError::Config(format!("--{name} must be positive, got {value}")));
    }
    Ok(value)
}

fn cmd_forward(args: &ForwardArgs) -> CliResult<i32> {
    if args.n_max == 0 {
        return Err(CliError::Config("--n-max must be at least 1".into()));
    }
    let input: PotentialInput = read_json(&args.input)?;
    let bc = input.bc.to_pair()?;
    let measure = sturm::spectral_measure(&input.potential, &bc, args.n_max)?;

    let mut main = String::from("index,eigenvalue,norming_constant,mass\n");
    for (n, (a, gamma)) in measure.entries.iter().enumerate() {
        main.push_str(&format!("{},{},{},{}\n", n + 1, a, 1.0 / gamma, gamma));
    }
    write_text(&args.output, &main)?;

    let model = measure.fitted_tail_model();
    let mut asym = String::from("index,eigenvalue,model,residual\n");
    for (n, (a, _)) in measure.entries.iter().enumerate() {
        let predicted = model.value((n + 1) as f64);
        asym.push_str(&format!("{},{},{},{}\n", n + 1, a, predicted, a - predicted));
    }
    write_text(&derived_path(&args.output, "asymptotics"), &asym)?;
    Ok(0)
}

enum GridSpec {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

fn linspace(start: f64, stop: f64, count: usize) -> CliResult<Vec<f64>> {
    if count == 0 {
        return Err(CliError::Config("grid count must be at least 1".into()));
    }
    if !start.is_finite() || !stop.is_finite() {
        return Err(CliError::Config(format!("nonfinite grid endpoints {start}, {stop}")));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn parse_grid(text: &str, seed: u64) -> CliResult<GridSpec> {
    let bad = |msg: &str| CliError::Config(format!("grid {text:?}: {msg}"));
    if let Some(rest) = text.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 5 {
            return Err(bad("random grids take re0:re1:im0:im1:count"));
        }
        let nums: Vec<f64> = parts[..4]
            .iter()
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("endpoints must be numbers"))?;
        let count: usize = parts[4].parse().map_err(|_| bad("count must be an integer"))?;
        if count == 0 {
            return Err(bad("count must be at least 1"));
        }
        let (re0, re1, im0, im1) = (nums[0], nums[1], nums[2], nums[3]);
        if !(re0 <= re1) || !(im0 <= im1) {
            return Err(bad("need re0 ≤ re1 and im0 ≤ im1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count)
            .map(|_| Complex64::new(rng.random_range(re0..=re1), rng.random_range(im0..=im1)))
            .collect();
        return Ok(GridSpec::Complex(points));
    }
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(bad("expected start:stop:count, start:stop:count:imag, or random:…"));
    }
    let start: f64 = parts[0].parse().map_err(|_| bad("start must be a number"))?;
    let stop: f64 = parts[1].parse().map_err(|_| bad("stop must be a number"))?;
    let count: usize = parts[2].parse().map_err(|_| bad("count must be an integer"))?;
    let xs = linspace(start, stop, count)?;
    if parts.len() == 4 {
        let imag: f64 = parts[3].parse().map_err(|_| bad("imag must be a number"))?;
        if imag != 0.0 {
            return Ok(GridSpec::Complex(
                xs.into_iter().map(|x| Complex64::new(x, imag)).collect(),
            ));
        }
    }
    Ok(GridSpec::Real(xs))
}

fn cmd_mfunc(args: &MfuncArgs) -> CliResult<i32> {
    if args.n_max == 0 {
        return Err(CliError::Config("--n-max must be at least 1".into()));
    }
    positive("exclusion", args.exclusion)?;
    let input: PotentialInput = read_json(&args.input)?;
    let bc = input.bc.to_triple()?;
    match parse_grid(&args.grid, args.seed)? {
        GridSpec::Real(xs) => {
            let scan = weyl::real_line_scan(&input.potential, &bc, &xs, args.exclusion)?;
            let mut main = String::from("x,m\n");
            for (x, m) in &scan.samples {
                main.push_str(&format!("{x},{m}\n"));
            }
            write_text(&args.output, &main)?;

            let zeros = sturm::eigenvalues(&input.potential, &bc.zeros_bc(), args.n_max)?;
            let poles = sturm::eigenvalues(&input.potential, &bc.poles_bc(), args.n_max)?;
            for (suffix, values) in [("zeros", &zeros.values), ("poles", &poles.values)] {
                let mut table = String::from("index,value\n");
                for (n, v) in values.iter().enumerate() {
                    table.push_str(&format!("{},{}\n", n + 1, v));
                }
                write_text(&derived_path(&args.output, suffix), &table)?;
            }
        }
        GridSpec::Complex(zs) => {
            let mut main = String::from("re_z,im_z,re_m,im_m\n");
            for z in zs {
                let m = weyl::m_direct(&input.potential, &bc, z)?;
                main.push_str(&format!("{},{},{},{}\n", z.re, z.im, m.re, m.im));
            }
            write_text(&args.output, &main)?;
        }
    }
    Ok(0)
}

fn cmd_complete(args: &CompleteArgs) -> CliResult<i32> {
    let input: CompleteInput = read_json(&args.input)?;
    let data = input.to_data()?;
    let mut options = CompletionOptions::default();
    if let Some(tol) = args.tol {
        options.residual_tol = positive("tol", tol)?;
    }
    if let Some(pin) = input.pin_mode {
        options.pin_mode = pin.into();
    }
    let result = match input.mode {
        CompletionModeInput::Matching => completion::complete_matching(&data, &options)?,
        CompletionModeInput::Anchored => {
            completion::complete_nonmatching(&data, NonMatchingMode::Anchored, &options)?
        }
        CompletionModeInput::AbsolutelyConvergent => completion::complete_nonmatching(
            &data,
            NonMatchingMode::AbsolutelyConvergent,
            &options,
        )?,
    };
    emit_json(&result, args.output.as_deref())?;
    Ok(0)
}

fn cmd_reconstruct(args: &ReconstructArgs) -> CliResult<i32> {
    let input: ReconstructInput = read_json(&args.input)?;
    let problem = ReconstructionProblem {
        spectrum1: input.spectrum1.clone(),
        spectrum2: input.spectrum2.clone(),
        bc: input.bc.to_triple()?,
        family: input.family.build()?,
        regularization: input.regularization.unwrap_or(1e-6),
    };
    let options = ReconstructOptions {
        max_iterations: input.max_iterations.unwrap_or(100),
        balanced_weights: input.balanced_weights.unwrap_or(true),
        initial: input.initial.clone(),
    };
    let fit = reconstruct::reconstruct(&problem, &options)?;
    if let Some(output) = &args.output {
        let mut trace = String::from("iteration,rms\n");
        for (i, r) in fit.trace.iter().enumerate() {
            trace.push_str(&format!("{i},{r}\n"));
        }
        write_text(&derived_csv(output, "trace"), &trace)?;
    }
    emit_json(&fit, args.output.as_deref())?;
    Ok(0)
}

fn cmd_check_hypotheses(args: &CheckHypothesesArgs) -> CliResult<i32> {
    let input: CompleteInput = read_json(&args.input)?;
    let data = input.to_data()?;
    let maps = match &data.index_maps {
        Some(maps) => maps.clone(),
        None => {
            if data.index_set.is_empty() {
                return Err(CliError::Config(
                    "check-hypotheses needs index_maps or a nonempty index_set".into(),
                ));
            }
            let mut sorted = data.index_set.clone();
            sorted.sort_unstable();
            spectralmix::CompletionMaps {
                k: spectralmix::cebotarev::IndexMap::new(sorted.clone(), None)?,
                l: spectralmix::cebotarev::IndexMap::new(sorted, None)?,
                equal_through: usize::MAX,
            }
        }
    };
    let report = completion::hypothesis_gate(&data, &maps)?;
    emit_json(&report, args.output.as_deref())?;
    Ok(0)
}

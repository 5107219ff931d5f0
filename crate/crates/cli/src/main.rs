//! `geoshape`: design, evaluate and sweep geometrically shaped QAM.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable giving the default worker-thread count.
pub const THREADS_ENV: &str = "GEOSHAPE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "geoshape", version, about = "Geometric shaping of square QAM for nonlinear fibre links")]
struct Cli {
    /// Worker threads (default: $GEOSHAPE_THREADS, else all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize PAM levels for GMI and write the result, levels and constellation.
    Optimize(OptimizeArgs),
    /// Moments and GMI of a constellation file, optionally over a link.
    Eval(EvalArgs),
    /// Launch-power sweeps of one or more constellations.
    Sweep(SweepArgs),
    /// Fit link parameters to measured (power, SNR) pairs.
    Fit(FitArgs),
    /// Calibrate the reference links so Gaussian modulation peaks at a target SNR.
    Calibrate(CalibrateArgs),
    /// Uniform, AWGN-tailored and nonlinearity-tailored GMI across design SNRs.
    DesignCurve(DesignCurveArgs),
    /// Back-to-back SNR and η_tot table from fitted links.
    Table1(Table1Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Uniform,
    Awgn,
    Nonlinear,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    /// Bits per real dimension (4 gives 256-QAM).
    #[arg(long)]
    pub bits: u32,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Design SNR in dB; in nonlinear mode, the optimum SNR of Gaussian modulation.
    #[arg(long)]
    pub snr_db: f64,
    /// η₂/η₁ of the NLI model.
    #[arg(long, default_value_t = 0.55)]
    pub c: f64,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.05)]
    pub perturbation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    /// Start levels (level CSV); uniform levels by default.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Constellation CSV.
    #[arg(long)]
    pub constellation: PathBuf,
    /// Channel SNR in dB (with --c, the optimum SNR of Gaussian modulation).
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Couple the SNR to the constellation's kurtosis with this η₂/η₁.
    #[arg(long)]
    pub c: Option<f64>,
    /// Link JSON for a per-power evaluation.
    #[arg(long)]
    pub link: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Estimate GMI by Monte Carlo on the full constellation.
    #[arg(long)]
    pub mc: bool,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub grid_start_dbm: f64,
    #[arg(long, default_value_t = 7.0, allow_negative_numbers = true)]
    pub grid_stop_dbm: f64,
    #[arg(long, default_value_t = 0.25)]
    pub grid_step_db: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Calibrated reference link with uniform, AWGN-tailored and
    /// nonlinearity-tailored constellations optimized on the fly.
    #[arg(long, conflicts_with_all = ["curve", "link"])]
    pub reference: bool,
    /// `NAME=LEVELS_CSV[=LINK_JSON]`; repeatable.
    #[arg(long)]
    pub curve: Vec<String>,
    /// Link JSON for curves that do not name their own.
    #[arg(long)]
    pub link: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Reference preset: bits per dimension.
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    /// Reference preset: η₂/η₁.
    #[arg(long, default_value_t = 0.55)]
    pub c: f64,
    /// Reference preset: optimum SNR of Gaussian modulation, dB.
    #[arg(long, default_value_t = 18.0)]
    pub target_snr_db: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Measured-sweep CSV (`power_dbm,snr_db`).
    #[arg(long)]
    pub measured: PathBuf,
    /// Fix the back-to-back SNR instead of fitting it.
    #[arg(long)]
    pub snr_btb_db: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 0.55)]
    pub c: f64,
    #[arg(long, default_value_t = 18.0)]
    pub target_snr_db: f64,
    /// Bits per dimension of the uniform reference constellation.
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignCurveArgs {
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    #[arg(long, default_value_t = 0.55)]
    pub c: f64,
    #[arg(long, default_value_t = 10.0)]
    pub snr_start_db: f64,
    #[arg(long, default_value_t = 30.0)]
    pub snr_stop_db: f64,
    #[arg(long, default_value_t = 1.0)]
    pub snr_step_db: f64,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Table1Args {
    /// `NAME=LINK_JSON=LEVELS_CSV`; repeatable.
    #[arg(long, required = true)]
    pub entry: Vec<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Why a command failed, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(geoshape::Error),
    NotConverged(String),
    Unidentifiable(String),
}

impl From<geoshape::Error> for CliError {
    fn from(e: geoshape::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_MODEL_DOMAIN: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

impl CliError {
    fn exit_code(&self) -> u8 {
        use geoshape::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::InvalidParameter(_)) => EXIT_USAGE,
            CliError::Core(E::ModelDomain(_)) => EXIT_MODEL_DOMAIN,
            CliError::Core(E::Numeric(_)) | CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Core(_) | CliError::Unidentifiable(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
            CliError::Unidentifiable(m) => write!(f, "unidentifiable fit: {m}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set thread count: {e}")))?;
    }
    match cli.command {
        Command::Optimize(a) => commands::optimize(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::DesignCurve(a) => commands::design_curve_cmd(&a),
        Command::Table1(a) => commands::table1(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geoshape: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

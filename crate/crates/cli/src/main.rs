//! Batch front end for the sensing-pipeline library: one binary with
//! subcommands for optimization, mosaicking, demosaicking, metrics,
//! rendering, synthetic data, baseline tiles, and design comparison.
//!
//! Machine-readable JSON goes to stdout, human summaries to stderr.
//! Usage problems exit with code 2, data or pipeline failures with 1.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failures split by exit code: `Usage` exits 2, `Data` exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<msfa_forge::Error> for CliError {
    fn from(e: msfa_forge::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "msfa-forge",
    version,
    about = "Joint design of multispectral filter arrays and demosaicking operators"
)]
struct Cli {
    /// Worker threads; 1 selects the deterministic reference path.
    /// Falls back to MSFA_FORGE_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly optimize a filter tile and demosaicking operator from
    /// training cubes
    Optimize(OptimizeArgs),
    /// Apply a filter tile to a cube, producing a single-channel mosaic
    Mosaic(MosaicArgs),
    /// Reconstruct a cube from a mosaic with a stored or model-based
    /// operator
    Demosaic(DemosaicArgs),
    /// PSNR between two cubes or two PPM images
    Eval(EvalArgs),
    /// Render a cube to an 8-bit PPM under the built-in daylight model
    Render(RenderArgs),
    /// Generate a synthetic two-dye transmittance cube
    Synth(SynthArgs),
    /// Emit a non-trained baseline filter tile
    Baseline(BaselineArgs),
    /// Optimize, then score trained and baseline designs on test cubes
    Compare(CompareArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the outer iteration count
    #[arg(long)]
    outer_iters: Option<usize>,
    /// Override the inner iteration cap
    #[arg(long)]
    inner_iters: Option<usize>,
    /// Override the inner stopping tolerance
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Override the Wiener ridge
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the number of independent starts
    #[arg(long)]
    restarts: Option<usize>,
    /// Stop outer iterations once progress stalls
    #[arg(long)]
    early_stop: bool,
}

#[derive(Args)]
struct MosaicArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    msfa: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    One,
    Nine,
}

#[derive(Args)]
struct DemosaicArgs {
    #[arg(long)]
    mosaic: PathBuf,
    #[arg(long)]
    msfa: PathBuf,
    /// Stored demosaicking operator (.mat32 with sidecar)
    #[arg(long, conflicts_with = "markov", required_unless_present = "markov")]
    wprime: Option<PathBuf>,
    /// Build the operator from the separable autocorrelation model
    /// instead of a file
    #[arg(long)]
    markov: bool,
    /// Neighborhood mode for --markov
    #[arg(long, value_enum, default_value_t = ModeArg::Nine)]
    mode: ModeArg,
    /// Spatial correlation per pixel of distance (for --markov)
    #[arg(long, default_value_t = 0.9)]
    rho_spatial: f64,
    /// Spectral correlation per band of separation (for --markov)
    #[arg(long, default_value_t = 0.9)]
    rho_spectral: f64,
    /// Wiener ridge (for --markov; default trace-relative)
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Compare 8-bit PPM images instead of cubes
    #[arg(long)]
    rgb: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Spectral bands, spread evenly over 420..720 nm
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineKind {
    Bandpass,
    Bayer,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    /// Band count for the built-in 420..720 nm grid
    #[arg(long, default_value_t = 16, conflicts_with = "cube")]
    bands: usize,
    /// Take the wavelength grid from this cube instead
    #[arg(long)]
    cube: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Experiment config (JSON); must list test cubes
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let requested = match flag {
        Some(t) => Some(t),
        None => match std::env::var("MSFA_FORGE_THREADS") {
            Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!(
                    "MSFA_FORGE_THREADS = {raw:?} is not a thread count"
                ))
            })?),
            Err(_) => None,
        },
    };
    if requested == Some(0) {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    Ok(requested)
}

#[cfg(feature = "parallel")]
fn install_thread_pool(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Data(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn install_thread_pool(_threads: Option<usize>) -> Result<(), CliError> {
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = resolve_threads(cli.threads)?;
    install_thread_pool(threads)?;
    // timing lines are zeroed whenever runs are reproducible bit for bit
    let deterministic = threads == Some(1) || !cfg!(feature = "parallel");
    match cli.command {
        Command::Optimize(args) => commands::cmd_optimize(args, deterministic),
        Command::Mosaic(args) => commands::cmd_mosaic(args),
        Command::Demosaic(args) => commands::cmd_demosaic(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Render(args) => commands::cmd_render(args),
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Baseline(args) => commands::cmd_baseline(args),
        Command::Compare(args) => commands::cmd_compare(args, deterministic),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

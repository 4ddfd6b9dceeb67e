//! The `cspnet` command line: dataset synthesis, CSP fitting, experiment
//! runs, gradient checks and report regeneration.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for usage or
//! configuration errors.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

pub type CliResult<T> = anyhow::Result<T>;

/// Marks an error as a usage or configuration problem (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "cspnet", version, about = "CSP-initialized convolutional networks for EEG decoding")]
pub struct Cli {
    /// key = value file; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base seed for every random choice [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for independent runs [default: 1].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with class-specific covariances.
    Synth(SynthArgs),
    /// Fit CSP filters on the training split of a dataset.
    Csp(CspArgs),
    /// Run the within- or cross-subject protocol (or sweeps) and write reports.
    Run(Box<RunArgs>),
    /// Finite-difference gradient checks on every layer kind and backbone.
    Gradcheck(GradcheckArgs),
    /// Rebuild summary tables from one or more runs.csv files.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    /// Number of channels [default: 8].
    #[arg(long)]
    pub channels: Option<usize>,
    /// Samples per trial [default: 256].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Number of classes [default: 2].
    #[arg(long)]
    pub classes: Option<usize>,
    /// Trials per subject, split evenly over classes [default: 200].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Number of subjects [default: 1].
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Strength of each class's source pattern [default: 1.0].
    #[arg(long)]
    pub contrast: Option<f64>,
    /// White-noise standard deviation [default: 0.1].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Sampling rate in Hz [default: 128].
    #[arg(long)]
    pub fs: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Optional band-pass filter before fitting, e.g. 4,40.
    #[arg(long, value_name = "LOW,HIGH")]
    pub band: Option<String>,
}

#[derive(Debug, Args)]
pub struct CspArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of CSP filters [default: 8].
    #[arg(long)]
    pub filters: Option<usize>,
    /// Ridge added to the reference covariance [default: scaled to its trace].
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Fraction of trials (per class) used to fit; 1 uses all [default: 0.8].
    #[arg(long)]
    pub train_split: Option<f64>,
    /// Also write the filters as a channels x filters CSV.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub export_weights: Option<bool>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Generate the data in memory from the synth options instead of --data.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub synth: Option<bool>,
    #[command(flatten)]
    pub synth_spec: SynthArgs,
    /// within or cross [default: within].
    #[arg(long)]
    pub scenario: Option<String>,
    /// Comma-separated approaches: csp-lr, standard, cspnet1-fix, cspnet1-upd,
    /// cspnet1-rad, cspnet2-fix, cspnet2-upd [default: standard].
    #[arg(long)]
    pub approach: Option<String>,
    /// eegnet, shallowcnn or deepcnn [default: eegnet].
    #[arg(long)]
    pub backbone: Option<String>,
    /// Number of CSP filters [default: 8].
    #[arg(long)]
    pub filters: Option<usize>,
    /// CSP ridge [default: scaled to the reference covariance trace].
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Training epochs [default: 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 128].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 weight decay [default: 0.0005].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Dropout probability [default: 0.25].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Epoch interval of the learning curves [default: 10].
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Repeats per subject [default: 5].
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Within-subject training fraction [default: 0.8].
    #[arg(long)]
    pub train_split: Option<f64>,
    /// Fraction of the training split actually used [default: 1].
    #[arg(long)]
    pub train_ratio: Option<f64>,
    /// Sweep instead of a single protocol run: ratio=0.1,0.5,1 or f=4,8.
    #[arg(long, value_name = "NAME=V1,V2,..")]
    pub sweep: Vec<String>,
    /// Report class-balanced accuracy.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub balanced_accuracy: Option<bool>,
    /// Train the random CSP-layer weights of the rad variant.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub rad_trainable: Option<bool>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of seeds per check [default: 5].
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Scale the input gradient of one layer kind (self-test of the checker).
    #[arg(long, hide = true, value_name = "KIND")]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// runs.csv files to merge.
    #[arg(long, value_name = "FILE")]
    pub runs: Vec<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { EXIT_USAGE } else { EXIT_RUNTIME };
            let _ = writeln!(err, "error: {e:#}");
            code
        }
    }
}

//! Command-line driver: data generation, training, evaluation, gradient
//! checks and the three grouping experiments.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 runtime failure
//! (such as divergence), 4 verification failure.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod dataset;
pub mod presets;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pointsift", version, about = "Point cloud segmentation with orientation-encoding blocks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset with a manifest.
    GenData(GenDataArgs),
    /// Train a network and write its checkpoint and CSV log.
    Train(TrainArgs),
    /// Score a checkpoint, or a directory of predictions, against labels.
    Eval(EvalArgs),
    /// Finite-difference check of every operation and the tiny network.
    Gradcheck(GradcheckArgs),
    /// Count the input points each SA stage can see.
    Coverage(CoverageArgs),
    /// Match the most active module against the scale of single shapes.
    ScaleExp(ScaleExpArgs),
    /// Train the three grouping variants at a shared parameter budget.
    CompareGrouping(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    /// Floor, sphere and cuboid scenes.
    Toy,
    /// One sphere or cuboid per file with a log-uniform scale.
    Multiscale,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to 0.3 for toy scenes, 0.1 for multiscale shapes.
    #[arg(long)]
    pub scale_min: Option<f64>,
    /// Defaults to 0.6 for toy scenes, 3.2 for multiscale shapes.
    #[arg(long)]
    pub scale_max: Option<f64>,
    #[arg(long, value_enum, default_value_t = DataKind::Toy)]
    pub kind: DataKind,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` file with network and optimizer settings.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides `epochs` from the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Log CSV path; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Held-out scenes scored after every epoch for the log.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub ckpt: Option<PathBuf>,
    /// Network config; defaults to the `<ckpt>.cfg` written by `train`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of XYZL files whose label column holds predictions,
    /// matched to `--data` by file name.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Class count when scoring predictions; the largest label seen sets it otherwise.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Network whose blocks are measured against its block-free twin;
    /// the built-in desk-scale pipelines when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenes to measure; fresh toy scenes when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Norm {
    Raw,
    Standardized,
}

#[derive(Debug, Args)]
pub struct ScaleExpArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Multiscale directory; scales are read from its manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub scale_min: f64,
    #[arg(long, default_value_t = 3.2)]
    pub scale_max: f64,
    #[arg(long, value_enum, default_value_t = Norm::Raw)]
    pub norm: Norm,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out scenes; the last fifth of `--data` when absent.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    /// Reference network; its block kind is replaced per variant.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn check(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CHECK,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<pointsift::Error> for CliError {
    fn from(e: pointsift::Error) -> Self {
        use pointsift::Error as E;
        let code = match e {
            E::Divergence { .. } | E::RejectedInput(_) => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, reports to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Coverage(a) => commands::coverage(&a),
        Command::ScaleExp(a) => commands::scale_exp(&a),
        Command::CompareGrouping(a) => commands::compare_grouping(&a),
    }
}

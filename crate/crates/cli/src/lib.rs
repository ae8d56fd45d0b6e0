//! Subcommands behind the `rganet` binary.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod eval;
mod infer;
mod report;
mod synth;
mod train;

pub use eval::EvalArgs;
pub use report::ReportArgs;
pub use synth::SynthArgs;

pub const THREADS_ENV: &str = "RGANET_THREADS";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<rganet::Error> for Failure {
    fn from(e: rganet::Error) -> Self {
        match e {
            rganet::Error::Numerical(_) => Failure::Numerical(e.to_string()),
            rganet::Error::Shape { .. } => Failure::Data(e.to_string()),
            _ if e.is_data_error() => Failure::Data(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(format!("writing CSV: {e}"))
    }
}

pub(crate) fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

pub type Outcome<T = ()> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "rganet", version, about = "Suction-affordance segmentation: train, infer, evaluate, report")]
#[command(after_help = "Set RGANET_THREADS to cap the worker thread count.\nExit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a `key = value` config file.
    #[command(long_about = "Train from a `key = value` config file.\n\n\
        Writes OUT/model.rgan at the end, OUT/epoch_NNNN.rgan every train.checkpoint_every epochs, \
        and OUT/train_log.csv with columns: epoch, loss, jaccard, precision, recall. \
        The metrics are online training metrics for the positive class.")]
    Train {
        config: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Predict a class mask for one image.
    Infer {
        checkpoint: PathBuf,
        image: PathBuf,
        /// Mask file; `.pgm` selects PGM, anything else PNG.
        out: PathBuf,
        /// Also write one gray probability raster per class next to OUT.
        #[arg(long)]
        probs: bool,
    },
    Eval(EvalArgs),
    Report(ReportArgs),
    Synth(SynthArgs),
}

/// Caps the global worker pool when the environment asks for it.
pub fn configure_threads() -> Outcome {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A pool built earlier in the same process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    match cli.command {
        Command::Train { config, out } => train::run(&config, &out),
        Command::Infer {
            checkpoint,
            image,
            out,
            probs,
        } => infer::run(&checkpoint, &image, &out, probs),
        Command::Eval(args) => eval::run(&args),
        Command::Report(args) => report::run(&args),
        Command::Synth(args) => synth::run(&args),
    }
}

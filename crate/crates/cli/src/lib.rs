//! Pipeline commands and file formats.

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod formats;

pub use config::{ConfigArgs, PipelineConfig};

pub const EX_OK: i32 = 0;
pub const EX_ALARM: i32 = 3;
pub const EX_USAGE: i32 = 64;
pub const EX_DATAERR: i32 = 65;
pub const EX_NOINPUT: i32 = 66;
pub const EX_SOFTWARE: i32 = 70;
pub const EX_CANTCREAT: i32 = 73;
pub const EX_IOERR: i32 = 74;
pub const EX_CONFIG: i32 = 78;

/// Error context carrying a process exit code.
#[derive(Debug, Clone)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    if let Some(e) = err.downcast_ref::<std::io::Error>() {
        return match e.kind() {
            std::io::ErrorKind::NotFound => EX_NOINPUT,
            std::io::ErrorKind::PermissionDenied => EX_CANTCREAT,
            _ => EX_IOERR,
        };
    }
    if let Some(e) = err.downcast_ref::<noisesig_core::Error>() {
        use noisesig_core::Error as E;
        return match e {
            E::InvalidConfig(_) | E::InvalidFilter(_) | E::UnknownMethod(_) => EX_CONFIG,
            _ => EX_DATAERR,
        };
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return EX_DATAERR;
    }
    EX_SOFTWARE
}

#[derive(Debug, Parser)]
#[command(name = "noisesig", version, about = "Noise-residual anomaly detection pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Ablation,
    Shift,
    Latency,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic stream and its labels sidecar.
    Generate {
        /// Scenario JSON; the built-in benchmark when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        onset: Option<usize>,
        /// Drop the anomaly (training data).
        #[arg(long)]
        nominal: bool,
        /// Average two independently generated sources.
        #[arg(long)]
        fused: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Defaults to `<out>.labels.json`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Fit the nominal model.
    Fit {
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Accept streams whose labels mark anomalous frames.
        #[arg(long)]
        force: bool,
    },
    /// Score a stream and run CUSUM; exits 3 when an alarm fires.
    Detect {
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Dump per-frame signature vectors.
    Featurize {
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Dump leaf coefficients and the threshold mask.
    Decompose {
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Only this frame.
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Calibrate the CUSUM threshold to a nominal ARL.
    Calibrate {
        /// Signature dimension; taken from the feature config when omitted.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run evaluation suites over seeded runs.
    Evaluate {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        /// Latency streams per run.
        #[arg(long, default_value_t = 10)]
        streams: usize,
        /// Frames per second, for false alarms per hour.
        #[arg(long, default_value_t = 1.0)]
        frame_rate: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Bispectrum grid averaged over frames, as `omega1,omega2,re,im`.
    Bispectrum {
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 16)]
        tau_max: usize,
        /// Only this frame.
        #[arg(long)]
        frame: Option<usize>,
    },
}

/// Runs one invocation and returns its exit status.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let cfg = cli.config.resolve()?;
    commands::dispatch(&cfg, cli.command)
}

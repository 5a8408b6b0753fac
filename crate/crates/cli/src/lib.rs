//! Command-line pipeline: preprocess, train, eval, ablate, map, params.

pub mod commands;
pub mod config;
pub mod palette;

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use sctnet::data::io::{Interleave, RawDtype};
use sctnet::data::patches::Split;
use sctnet::data::SynthSpec;

pub use config::{Overrides, RunConfig};
pub use palette::ClassPalette;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] sctnet::Error),
}

impl CliError {
    pub fn file(path: &Path, source: io::Error) -> Self {
        Self::File { path: path.to_path_buf(), source }
    }

    /// 1 for invalid configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) | Self::Core(sctnet::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sctnet",
    version,
    about = "Hyperspectral image classification with a CNN-Transformer network",
    args_override_self = true
)]
pub struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DtypeArg {
    F32,
    I16,
    U16,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InterleaveArg {
    Bsq,
    Bil,
    Bip,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce the cube with PCA and split labeled pixels into train/test.
    Preprocess,
    /// Train a model on the preprocessed training split.
    Train,
    /// Evaluate a checkpoint and write metrics and the confusion matrix.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train and evaluate the ablation cases.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        cases: Vec<usize>,
    },
    /// Render a classification map as a binary pixmap.
    Map {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Classify every pixel, not only labeled ones.
        #[arg(long)]
        full: bool,
    },
    /// Print the parameter breakdown and per-encoder totals.
    Params {
        /// Class count when no preprocessed data is present.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Generate a synthetic scene.
    Synth {
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        spectra: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        tile: usize,
        /// Closest class-mean distance in noise standard deviations.
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value = "synth")]
        name: String,
    },
    /// Convert a headerless raw cube and label raster.
    Convert {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        raw_labels: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long = "raw-bands")]
        raw_bands: usize,
        #[arg(long, value_enum, default_value = "f32")]
        dtype: DtypeArg,
        #[arg(long, value_enum, default_value = "bsq")]
        interleave: InterleaveArg,
        /// Labels are little-endian u16 instead of u8.
        #[arg(long)]
        wide_labels: bool,
        #[arg(long, default_value = "scene")]
        name: String,
    },
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Preprocess => commands::preprocess(&cfg).map(drop),
        Command::Train => commands::train(&cfg).map(drop),
        Command::Eval { checkpoint, split } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            commands::eval(&cfg, checkpoint.as_deref(), split).map(drop)
        }
        Command::Ablate { cases } => commands::ablation(&cfg, cases).map(drop),
        Command::Map { checkpoint, full } => commands::map(&cfg, checkpoint.as_deref(), *full).map(drop),
        Command::Params { classes } => commands::params(&cfg, *classes).map(drop),
        Command::Synth { height, width, spectra, classes, tile, separation, noise, name } => {
            let spec = SynthSpec {
                height: *height,
                width: *width,
                bands: *spectra,
                classes: *classes,
                tile: *tile,
                separation: *separation,
                noise_sigma: *noise,
                seed: cfg.seed,
            };
            commands::synth(&cfg, &spec, name).map(drop)
        }
        Command::Convert { raw, raw_labels, height, width, raw_bands, dtype, interleave, wide_labels, name } => {
            let layout = commands::RawLayout {
                height: *height,
                width: *width,
                bands: *raw_bands,
                dtype: match dtype {
                    DtypeArg::F32 => RawDtype::F32,
                    DtypeArg::I16 => RawDtype::I16,
                    DtypeArg::U16 => RawDtype::U16,
                },
                interleave: match interleave {
                    InterleaveArg::Bsq => Interleave::Bsq,
                    InterleaveArg::Bil => Interleave::Bil,
                    InterleaveArg::Bip => Interleave::Bip,
                },
                wide_labels: *wide_labels,
            };
            commands::convert(&cfg, raw, raw_labels, &layout, name).map(drop)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Run configuration: one TOML file, every field overridable by a flag.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use sctnet::model::{Ablation, ModelConfig, TbfeMode};
use sctnet::train::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input `.hsic` cube; labels are read from the companion `.hsil`.
    pub cube: Option<PathBuf>,
    /// Directory receiving every artifact.
    pub out: PathBuf,
    pub seed: u64,
    /// Retained principal components `B`.
    pub bands: usize,
    /// Patch side `P`.
    pub patch: usize,
    /// Twin-branch width `S`.
    pub spectral_width: usize,
    /// Feature width `D`.
    pub dim: usize,
    /// Attention groups `G`.
    pub groups: usize,
    pub heads: usize,
    /// Encoder count `L`.
    pub encoders: usize,
    pub mlp_dim: usize,
    pub dropout: f64,
    /// Per-class share of labeled pixels used for training.
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tbfe: TbfeMode,
    pub hpa: bool,
    pub cff: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1);
        let t = TrainConfig::default();
        Self {
            cube: None,
            out: PathBuf::from("out"),
            seed: 0,
            bands: m.bands,
            patch: m.patch,
            spectral_width: m.spectral_width,
            dim: m.dim,
            groups: m.groups,
            heads: m.heads,
            encoders: m.encoders,
            mlp_dim: m.mlp_dim,
            dropout: m.dropout,
            train_fraction: 0.05,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            tbfe: TbfeMode::On,
            hpa: true,
            cff: true,
        }
    }
}

/// Command-line overrides, one per configuration field.
#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true, value_name = "PATH")]
    pub cube: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub bands: Option<usize>,
    #[arg(long, global = true)]
    pub patch: Option<usize>,
    #[arg(long, global = true)]
    pub spectral_width: Option<usize>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub groups: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long, global = true)]
    pub encoders: Option<usize>,
    #[arg(long, global = true)]
    pub mlp_dim: Option<usize>,
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// `on` or `naive`.
    #[arg(long, global = true, value_parser = parse_tbfe)]
    pub tbfe: Option<TbfeMode>,
    #[arg(long, global = true)]
    pub hpa: Option<bool>,
    #[arg(long, global = true)]
    pub cff: Option<bool>,
}

fn parse_tbfe(s: &str) -> Result<TbfeMode, String> {
    match s {
        "on" => Ok(TbfeMode::On),
        "naive" => Ok(TbfeMode::Naive),
        _ => Err(format!("expected `on` or `naive`, got `{s}`")),
    }
}

macro_rules! apply {
    ($cfg:ident, $o:ident, $($f:ident),*) => {
        $(if let Some(v) = $o.$f.clone() { $cfg.$f = v; })*
    };
}

impl RunConfig {
    /// Reads the file (if any) and applies the overrides on top.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut c = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::file(p, e))?;
                toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        if let Some(cube) = &o.cube {
            c.cube = Some(cube.clone());
        }
        apply!(
            c,
            o,
            out,
            seed,
            bands,
            patch,
            spectral_width,
            dim,
            groups,
            heads,
            encoders,
            mlp_dim,
            dropout,
            train_fraction,
            epochs,
            batch_size,
            lr,
            tbfe,
            hpa,
            cff
        );
        Ok(c)
    }

    pub fn ablation(&self) -> Ablation {
        Ablation { tbfe: self.tbfe, hpa: self.hpa, cff: self.cff }
    }

    pub fn model_config(&self, classes: usize) -> ModelConfig {
        ModelConfig {
            bands: self.bands,
            patch: self.patch,
            spectral_width: self.spectral_width,
            dim: self.dim,
            groups: self.groups,
            heads: self.heads,
            encoders: self.encoders,
            mlp_dim: self.mlp_dim,
            dropout: self.dropout,
            ablation: self.ablation(),
            ..ModelConfig::new(classes)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// Checks every architectural and training field.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: sctnet::Error| CliError::Invalid(e.to_string());
        self.model_config(1).validate().map_err(invalid)?;
        self.train_config().validate().map_err(invalid)?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Invalid(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CliError::Invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn cube_path(&self) -> Result<&Path, CliError> {
        self.cube.as_deref().ok_or_else(|| CliError::Invalid("no input cube; set `cube` or pass --cube".into()))
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

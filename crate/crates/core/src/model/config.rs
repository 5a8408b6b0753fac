use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Front-end feature extractor variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TbfeMode {
    /// Parallel spectral/spatial branches.
    On,
    /// Serial 3-D then 2-D convolution without the pointwise split.
    Naive,
}

/// How the cross-spatial aggregation pairs pooled weights with normalized
/// maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HpaPairing {
    /// avg-branch weights applied to the max-branch map, and vice versa.
    Crossed,
    /// each branch's weights applied to its own map.
    Straight,
}

/// Component switches for ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub tbfe: TbfeMode,
    pub hpa: bool,
    pub cff: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FULL
    }
}

impl Ablation {
    pub const FULL: Self = Self { tbfe: TbfeMode::On, hpa: true, cff: true };

    /// The six component combinations of the ablation study (1-based).
    pub fn case(n: usize) -> Option<Self> {
        use TbfeMode::{Naive, On};
        let (tbfe, hpa, cff) = match n {
            1 => (Naive, false, false),
            2 => (On, false, false),
            3 => (On, false, true),
            4 => (On, true, false),
            5 => (Naive, true, true),
            6 => (On, true, true),
            _ => return None,
        };
        Some(Self { tbfe, hpa, cff })
    }

    pub fn label(&self) -> String {
        let t = match self.tbfe {
            TbfeMode::On => "tbfe",
            TbfeMode::Naive => "3d+2d",
        };
        format!("{t}/{}/{}", if self.hpa { "hpa" } else { "no-hpa" }, if self.cff { "cff" } else { "serial" })
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input channels `B` (retained spectral components).
    pub bands: usize,
    /// Patch side `P` (odd).
    pub patch: usize,
    /// Pointwise width `S` of each twin-branch block.
    pub spectral_width: usize,
    /// Feature / token width `D`.
    pub dim: usize,
    /// Channel groups `G` in hybrid pooling attention.
    pub groups: usize,
    pub heads: usize,
    /// Encoder count `L`.
    pub encoders: usize,
    pub mlp_dim: usize,
    pub classes: usize,
    pub dropout: f64,
    pub eps: f64,
    pub ablation: Ablation,
    pub pairing: HpaPairing,
}

impl ModelConfig {
    /// Defaults for a dataset with `classes` classes: 30 bands, 19×19
    /// patches, S=32, D=64, G=8, 16 heads, 4 encoders, MLP width 4D.
    pub fn new(classes: usize) -> Self {
        Self {
            bands: 30,
            patch: 19,
            spectral_width: 32,
            dim: 64,
            groups: 8,
            heads: 16,
            encoders: 4,
            mlp_dim: 256,
            classes,
            dropout: 0.1,
            eps: 1e-5,
            ablation: Ablation::FULL,
            pairing: HpaPairing::Crossed,
        }
    }

    pub fn tokens(&self) -> usize {
        self.patch * self.patch + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bands", self.bands),
            ("spectral_width", self.spectral_width),
            ("dim", self.dim),
            ("groups", self.groups),
            ("heads", self.heads),
            ("encoders", self.encoders),
            ("mlp_dim", self.mlp_dim),
            ("classes", self.classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.patch < 3 || self.patch % 2 == 0 {
            return Err(Error::Config(format!("patch size must be odd and at least 3, got {}", self.patch)));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!("dim {} is not divisible by {} heads", self.dim, self.heads)));
        }
        if self.ablation.hpa && self.dim % self.groups != 0 {
            return Err(Error::Config(format!(
                "dim {} (HPA channels) is not divisible by {} groups",
                self.dim, self.groups
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

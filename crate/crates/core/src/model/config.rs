use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which dependency branches each layer runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branches {
    Both,
    CbOnly,
    TbOnly,
    /// No dependency layers at all: the class-feature baseline.
    None,
}

impl Branches {
    pub fn uses_cb(self) -> bool {
        matches!(self, Branches::Both | Branches::CbOnly)
    }

    pub fn uses_tb(self) -> bool {
        matches!(self, Branches::Both | Branches::TbOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branches::Both => "both",
            Branches::CbOnly => "cb-only",
            Branches::TbOnly => "tb-only",
            Branches::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    Learned,
    Fixed,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of action classes.
    #[serde(rename = "C")]
    pub classes: usize,
    /// Input feature width.
    #[serde(rename = "F")]
    pub features: usize,
    /// Class-feature width.
    #[serde(rename = "H", default = "default_hidden")]
    pub hidden: usize,
    /// Number of stacked dependency layers.
    #[serde(rename = "L", default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_branches")]
    pub branches: Branches,
    #[serde(default = "default_alpha_mode")]
    pub alpha_mode: AlphaMode,
    #[serde(default = "default_alpha_fixed")]
    pub alpha_fixed: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> usize {
    128
}
fn default_layers() -> usize {
    5
}
fn default_branches() -> Branches {
    Branches::Both
}
fn default_alpha_mode() -> AlphaMode {
    AlphaMode::Learned
}
fn default_alpha_fixed() -> f64 {
    0.5
}

impl ModelConfig {
    /// Config with the default width, depth and merge settings.
    pub fn new(classes: usize, features: usize) -> Self {
        Self {
            classes,
            features,
            hidden: default_hidden(),
            layers: default_layers(),
            branches: default_branches(),
            alpha_mode: default_alpha_mode(),
            alpha_fixed: default_alpha_fixed(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.features == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "C, F and H must be positive (got C={}, F={}, H={})",
                self.classes, self.features, self.hidden
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_fixed) {
            return Err(Error::InvalidArgument(format!(
                "alpha_fixed {} outside [0, 1]",
                self.alpha_fixed
            )));
        }
        Ok(())
    }

    /// Layers actually run; `branches = none` means zero.
    pub fn effective_layers(&self) -> usize {
        if self.branches == Branches::None {
            0
        } else {
            self.layers
        }
    }

    /// Whether each layer carries a learned merge weight.
    pub fn learns_alpha(&self) -> bool {
        self.branches == Branches::Both && self.alpha_mode == AlphaMode::Learned
    }
}

//! Serialized run configuration and named hyperparameter profiles.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::clustering::Backend;
use crate::error::{Error, Result};
use crate::gae::Optimizer;
use crate::io::DataFormat;
use crate::trainer::{KMax, TrainConfig};

fn default_format() -> DataFormat {
    DataFormat::CsvDense
}

fn default_precision() -> String {
    "f64".into()
}

/// Everything a `cluster` run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default = "default_format")]
    pub format: DataFormat,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub clusters: usize,
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub k0: Option<usize>,
    #[serde(default)]
    pub k_max: Option<KMax>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub inner_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub optimizer: Option<Optimizer>,
    #[serde(default)]
    pub layer_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: Option<Backend>,
    #[serde(default)]
    pub freeze_graph: bool,
    #[serde(default)]
    pub freeze_k: bool,
    #[serde(default)]
    pub lambda_zero: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves defaults, then the profile, then explicit fields, then the
    /// ablation flags, in that order of precedence (later wins).
    pub fn train_config(&self) -> Result<TrainConfig> {
        if self.precision != "f64" {
            return Err(Error::Config(format!(
                "unsupported precision '{}'; only f64 is available",
                self.precision
            )));
        }
        let mut cfg = TrainConfig {
            seed: self.seed,
            ..TrainConfig::default()
        };
        if let Some(name) = &self.profile {
            let profile = Profile::named(name)
                .ok_or_else(|| Error::Config(format!("unknown profile '{name}'")))?;
            profile.apply(&mut cfg);
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        take!(k0, k_max, lambda, lr, epochs, inner_iters, tol, optimizer, backend);
        if self.layer_dims.is_some() {
            cfg.layer_dims = self.layer_dims.clone();
        }
        cfg.freeze_graph = self.freeze_graph;
        cfg.freeze_k = self.freeze_k;
        if self.lambda_zero {
            cfg.lambda = 0.0;
        }
        validate(&cfg)?;
        Ok(cfg)
    }
}

fn validate(cfg: &TrainConfig) -> Result<()> {
    if cfg.k0 < 2 {
        return Err(Error::Config(format!("k0 = {} must be at least 2", cfg.k0)));
    }
    if cfg.epochs == 0 || cfg.inner_iters == 0 {
        return Err(Error::Config("epochs and inner_iters must be at least 1".into()));
    }
    if !(cfg.lambda >= 0.0) || !cfg.lambda.is_finite() {
        return Err(Error::Config(format!("lambda = {} must be finite and >= 0", cfg.lambda)));
    }
    if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
        return Err(Error::Config(format!("lr = {} must be finite and > 0", cfg.lr)));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::Config(format!("tol = {} must be >= 0", cfg.tol)));
    }
    if let Some(dims) = &cfg.layer_dims {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Config("layer widths must be nonempty and >= 1".into()));
        }
    }
    Ok(())
}

/// Per-dataset presets. The learning rates were tuned for adaptive-moment
/// updates, so every profile selects that optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub name: &'static str,
    pub lambda: f64,
    pub k0: usize,
    pub lr: f64,
    pub inner_iters: usize,
    pub k_max: KMax,
    pub epochs: usize,
    pub layer_dims: [usize; 2],
}

pub const PROFILES: &[Profile] = &[
    Profile { name: "text", lambda: 1e-2, k0: 30, lr: 5e-3, inner_iters: 150, k_max: KMax::NOverC, epochs: 10, layer_dims: [256, 64] },
    Profile { name: "20news", lambda: 1e-1, k0: 20, lr: 1e-3, inner_iters: 200, k_max: KMax::NOver2C, epochs: 10, layer_dims: [256, 64] },
    Profile { name: "isolet", lambda: 1e-1, k0: 20, lr: 1e-3, inner_iters: 200, k_max: KMax::NOverC, epochs: 5, layer_dims: [256, 64] },
    Profile { name: "palm", lambda: 10.0, k0: 10, lr: 1e-3, inner_iters: 50, k_max: KMax::NOverC, epochs: 10, layer_dims: [256, 64] },
    Profile { name: "umist", lambda: 1.0, k0: 5, lr: 1e-3, inner_iters: 50, k_max: KMax::NOverC, epochs: 10, layer_dims: [256, 64] },
    Profile { name: "coil20", lambda: 1.0, k0: 5, lr: 1e-2, inner_iters: 100, k_max: KMax::NOver2C, epochs: 10, layer_dims: [256, 64] },
    Profile { name: "jaffe", lambda: 1e-3, k0: 5, lr: 1e-2, inner_iters: 20, k_max: KMax::NOverC, epochs: 10, layer_dims: [256, 64] },
    Profile { name: "usps", lambda: 1e-2, k0: 5, lr: 5e-3, inner_iters: 150, k_max: KMax::NOverC, epochs: 10, layer_dims: [128, 64] },
    Profile { name: "mnist", lambda: 1e-2, k0: 5, lr: 1e-3, inner_iters: 200, k_max: KMax::NOver2C, epochs: 10, layer_dims: [256, 64] },
];

impl Profile {
    pub fn named(name: &str) -> Option<&'static Profile> {
        let lower = name.to_ascii_lowercase();
        PROFILES.iter().find(|p| p.name == lower)
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        cfg.lambda = self.lambda;
        cfg.k0 = self.k0;
        cfg.lr = self.lr;
        cfg.inner_iters = self.inner_iters;
        cfg.k_max = self.k_max;
        cfg.epochs = self.epochs;
        cfg.layer_dims = Some(self.layer_dims.to_vec());
        cfg.optimizer = Optimizer::Adam;
    }
}

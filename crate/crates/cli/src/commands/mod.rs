//! One module per subcommand plus the shared training configuration.

pub mod generate;
pub mod grid;
pub mod simulate;
pub mod spectra;
pub mod sweep;
pub mod train;

use std::fs;
use std::path::Path;

use clap::Args;
use ldl_core::data::{load_canonical, Dataset, SplitSet};
use ldl_core::experiments::{OptimizerKind, TrainSpec};
use ldl_core::layers::{ModelConfig, ModelKind};
use ldl_core::numerics::Activation;
use ldl_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Reads a JSON file, reporting schema errors with their JSON path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Core(Error::Parse {
            path: format!("{}: {}", path.display(), e.path()),
            msg: e.inner().to_string(),
        })
    })
}

/// Loads a canonical dataset and its embedded splits, optionally keeping only
/// the first `trials`.
pub fn load_with_splits(path: &Path, trials: Option<usize>) -> Result<(Dataset, SplitSet), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("dataset file {} does not exist", path.display())));
    }
    let (ds, splits) = load_canonical(path)?;
    let mut splits =
        splits.ok_or_else(|| CliError::Usage(format!("{} carries no splits; regenerate it with splits", path.display())))?;
    if let Some(t) = trials {
        if t == 0 || t > splits.len() {
            return Err(CliError::Usage(format!("--trials must lie in 1..={}, got {t}", splits.len())));
        }
        splits.trials.truncate(t);
    }
    Ok((ds, splits))
}

/// Model and optimizer settings for one configuration. Missing keys take the
/// synthetic-protocol defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: Option<ModelKind>,
    pub depth: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub p_input: f64,
    pub p_layer: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let spec = TrainSpec::synthetic(0);
        Self {
            model: None,
            depth: 2,
            hidden: 16,
            activation: Activation::Tanh,
            p_input: 0.0,
            p_layer: 0.0,
            alpha: 0.1,
            lambda: 1.0,
            optimizer: spec.optimizer,
            lr: spec.lr,
            weight_decay: spec.weight_decay,
            max_epochs: spec.max_epochs,
            patience: spec.patience,
        }
    }
}

/// Flags that override individual [`TrainConfig`] keys.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConfigFlags {
    /// JSON file with model and optimizer settings.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub p_input: Option<f64>,
    #[arg(long)]
    pub p_layer: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl ConfigFlags {
    /// File values first, then flags on top.
    pub fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut c: TrainConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { c.$field = v; })*
            };
        }
        take!(depth, hidden, activation, p_input, p_layer, alpha, lambda, optimizer, lr, weight_decay, max_epochs, patience);
        Ok(c)
    }
}

impl TrainConfig {
    pub fn kind(&self, flag: Option<ModelKind>) -> Result<ModelKind, CliError> {
        match (flag, self.model) {
            (Some(f), Some(c)) if f != c => Err(CliError::Usage(format!("--model {f} contradicts config model {c}"))),
            (Some(k), _) | (None, Some(k)) => Ok(k),
            (None, None) => Err(CliError::Usage("no model given; pass --model or set \"model\" in the config".into())),
        }
    }

    pub fn model_config(&self, kind: ModelKind) -> Result<ModelConfig, CliError> {
        let cfg = ModelConfig {
            p_input: self.p_input,
            p_layer: self.p_layer,
            alpha: self.alpha,
            lambda: self.lambda,
            ..ModelConfig::new(kind, self.depth, self.hidden, self.activation)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_spec(&self, seed: u64) -> Result<TrainSpec, CliError> {
        let spec = TrainSpec {
            optimizer: self.optimizer,
            lr: self.lr,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

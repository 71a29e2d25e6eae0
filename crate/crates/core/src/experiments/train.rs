//! Full-batch training with early stopping on validation accuracy.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, AdamConfig, AdamState, OptimizerKind};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::layers::{assemble_model, forward, predict, ForwardOptions, ModelConfig, ModelParams, Propagation};
use crate::numerics::{Matrix, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainSpec {
    /// Adam, lr 0.01, no weight decay, 1000 epochs, patience 200.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            weight_decay: 0.0,
            max_epochs: 1000,
            patience: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one training run, reported at the best validation epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub best: ModelParams,
    /// Weights after the final update.
    pub last: ModelParams,
    /// Number of updates applied to `best`.
    pub best_epoch: usize,
    /// Number of updates performed in total.
    pub epochs: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

/// Fraction of `mask` whose row-wise argmax matches the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let hits = mask.iter().filter(|&&i| logits.argmax_row(i) == labels[i]).count();
    hits as f64 / mask.len() as f64
}

/// Trains `cfg` on `split.train`, keeping the weights of the epoch with the
/// highest validation accuracy (earliest on ties). Test accuracy is recorded
/// at that epoch and never consulted for any decision.
pub fn train_model(
    cfg: &ModelConfig,
    spec: &TrainSpec,
    ds: &Dataset,
    prop: &Propagation,
    split: &Split,
) -> Result<TrainedModel> {
    spec.validate()?;
    split.validate(ds.n_nodes(), false)?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    if prop.n_nodes() != ds.n_nodes() {
        return Err(Error::dim("train_model", (prop.n_nodes(), 0), (ds.n_nodes(), 0)));
    }
    let start = Instant::now();
    let mut init_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut model = assemble_model(cfg, ds.feature_dim(), ds.classes, &mut init_rng)?;
    let mut state = AdamState::new(model.tensors().iter().map(|m| m.shape()));
    let adam = AdamConfig::new(spec.optimizer, spec.lr, spec.weight_decay);
    let features: &Arc<Matrix> = &ds.features;

    let deterministic_forward = cfg.p_input == 0.0 && cfg.p_layer == 0.0;
    let mut best = model.clone();
    let (mut best_epoch, mut best_val) = (0, f64::NEG_INFINITY);
    let (mut best_train, mut best_test) = (0.0, 0.0);
    let mut epochs = 0;
    // Epoch `e` scores the weights after `e` updates, then applies update e+1.
    for epoch in 0..=spec.max_epochs {
        let mut tape = Tape::new();
        let out = forward(&mut tape, &model, prop, features, ForwardOptions::train(), &mut drop_rng)?;
        let logits = if deterministic_forward {
            tape.value(out.logits).clone()
        } else {
            predict(&model, prop, features)?
        };
        if !logits.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let val = accuracy(&logits, &ds.labels, &split.val);
        if val > best_val {
            best_val = val;
            best_epoch = epoch;
            best_train = accuracy(&logits, &ds.labels, &split.train);
            best_test = accuracy(&logits, &ds.labels, &split.test);
            best.clone_from(&model);
        }
        if epoch == spec.max_epochs || epoch - best_epoch >= spec.patience {
            break;
        }

        let loss = tape.masked_cross_entropy(out.logits, &ds.labels, &split.train)?;
        if !tape.value(loss)[(0, 0)].is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        tape.backward(loss)?;
        let grads: Vec<Matrix> = out
            .params
            .iter()
            .map(|&p| {
                let (r, c) = tape.shape(p);
                tape.grad(p).cloned().unwrap_or_else(|| Matrix::zeros(r, c))
            })
            .collect();
        drop(tape);
        adam_step(&mut model.tensors_mut(), &grads, &mut state, &adam)?;
        epochs = epoch + 1;
    }
    Ok(TrainedModel {
        best,
        last: model,
        best_epoch,
        epochs,
        train_acc: best_train,
        val_acc: best_val,
        test_acc: best_test,
        seconds: start.elapsed().as_secs_f64(),
    })
}

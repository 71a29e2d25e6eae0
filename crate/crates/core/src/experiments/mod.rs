//! Training, grid search, depth sweeps, significance tests, and result files.

mod grid;
mod optim;
mod stats;
mod sweep;
mod train;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use grid::{
    cell_seed, grid_search, read_results, run_cells, select, write_results, write_selections, write_summary, GridConfig,
    GridOptions, GridOutcome, GridSpec, GridSummary, Selection, TrialResult,
};
pub use optim::{adam_step, AdamConfig, AdamState, OptimizerKind};
pub use stats::{mean_std, ranks, spearman, welch_t_test, WelchResult};
pub use sweep::{depth_trend, layer_sweep, write_sweep, SweepRow};
pub use train::{accuracy, train_model, TrainSpec, TrainedModel};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{forward, ForwardOptions, ModelParams, Propagation};
use crate::numerics::{Matrix, Tape};

/// Eval-mode representation after `layer` propagation layers (0 is the input
/// projection).
pub fn embeddings(model: &ModelParams, ds: &Dataset, layer: usize) -> Result<Matrix> {
    if layer > model.layers.len() {
        return Err(Error::Config(format!(
            "layer {layer} requested but the model has {} layers",
            model.layers.len()
        )));
    }
    let prop = Propagation::new(&ds.graph);
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = forward(&mut tape, model, &prop, &ds.features, ForwardOptions::eval(), &mut rng)?;
    Ok(tape.value(out.hidden[layer]).clone())
}

/// Writes `node_id,label,h_1..h_d`.
pub fn export_embeddings(model: &ModelParams, ds: &Dataset, layer: usize, path: &Path) -> Result<Matrix> {
    let h = embeddings(model, ds, layer)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node_id".to_string(), "label".to_string()];
    header.extend((1..=h.cols()).map(|j| format!("h_{j}")));
    w.write_record(&header)?;
    for i in 0..h.rows() {
        let mut rec = vec![i.to_string(), ds.labels[i].to_string()];
        rec.extend(h.row(i).iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(h)
}


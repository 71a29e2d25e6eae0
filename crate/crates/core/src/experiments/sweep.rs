//! Accuracy as a function of depth with all other hyperparameters fixed.

use serde::Serialize;

use super::grid::{run_cells, GridConfig, GridOptions};
use super::stats::{mean_std, spearman};
use super::train::TrainSpec;
use crate::data::{Dataset, SplitSet};
use crate::error::{Error, Result};
use crate::layers::{ModelConfig, ModelKind};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub dataset: String,
    pub model: ModelKind,
    pub depth: usize,
    pub mean_val: f64,
    pub std_val: f64,
    pub mean_test: f64,
    pub std_test: f64,
}

/// Trains each base configuration at every depth on every split.
pub fn layer_sweep(
    ds: &Dataset,
    splits: &SplitSet,
    bases: &[(ModelConfig, TrainSpec)],
    depths: &[usize],
    opts: &GridOptions,
) -> Result<Vec<SweepRow>> {
    if depths.is_empty() || bases.is_empty() {
        return Err(Error::Config("layer sweep needs at least one model and one depth".into()));
    }
    let mut rows = Vec::new();
    for (base, spec) in bases {
        let configs: Vec<GridConfig> = depths
            .iter()
            .enumerate()
            .map(|(id, &depth)| GridConfig {
                id,
                model: ModelConfig { depth, ..base.clone() },
                train: spec.clone(),
            })
            .collect();
        let sub = GridOptions {
            workers: opts.workers,
            out_dir: opts.out_dir.as_ref().map(|d| d.join(base.kind.name())),
        };
        let results = run_cells(ds, splits, &configs, &sub)?;
        for cfg in &configs {
            let ok: Vec<_> = results.iter().filter(|r| r.config_id == cfg.id && !r.failed()).collect();
            if ok.is_empty() {
                log::warn!("{} at depth {} failed on every trial", base.kind, cfg.model.depth);
            }
            let (mean_val, std_val) = mean_std(&ok.iter().map(|r| r.val_acc).collect::<Vec<_>>());
            let (mean_test, std_test) = mean_std(&ok.iter().map(|r| r.test_acc).collect::<Vec<_>>());
            rows.push(SweepRow {
                dataset: ds.name.clone(),
                model: base.kind,
                depth: cfg.model.depth,
                mean_val,
                std_val,
                mean_test,
                std_test,
            });
        }
    }
    Ok(rows)
}

/// Spearman correlation of mean validation accuracy against depth, over
/// depths at or above `from_depth`.
pub fn depth_trend(rows: &[SweepRow], model: ModelKind, from_depth: usize) -> Option<f64> {
    let (d, acc): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.model == model && r.depth >= from_depth && r.mean_val.is_finite())
        .map(|r| (r.depth as f64, r.mean_val))
        .unzip();
    spearman(&d, &acc)
}

pub fn write_sweep(path: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset", "model", "depth", "mean_val", "std_val", "mean_test", "std_test"])?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.model.name().to_string(),
            r.depth.to_string(),
            format!("{:.4}", r.mean_val),
            format!("{:.4}", r.std_val),
            format!("{:.4}", r.mean_test),
            format!("{:.4}", r.std_test),
        ])?;
    }
    w.flush()?;
    Ok(())
}

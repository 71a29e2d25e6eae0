//! `ldl train`: one configuration on every split.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use ldl_core::experiments::{
    cell_seed, export_embeddings, mean_std, train_model, write_results, write_summary, GridSummary, TrialResult,
};
use ldl_core::layers::{ModelKind, Propagation};
use serde::{Deserialize, Serialize};

use super::{load_with_splits, ConfigFlags, TrainConfig};
use crate::error::CliError;
use crate::{resolved, Command};

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Canonical dataset JSON with embedded splits.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use only the first N splits.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Also write eval-mode embeddings after this many layers for each split.
    #[arg(long)]
    pub embeddings_layer: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(skip)]
    #[serde(default)]
    pub resolved: Option<TrainConfig>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let cfg = match &args.resolved {
        Some(c) => c.clone(),
        None => args.flags.resolve()?,
    };
    let kind = cfg.kind(args.model)?;
    let model_cfg = cfg.model_config(kind)?;
    cfg.train_spec(args.seed)?;
    let (ds, splits) = load_with_splits(&args.dataset, args.trials)?;
    fs::create_dir_all(&args.out)?;
    let record = TrainArgs {
        model: Some(kind),
        flags: ConfigFlags::default(),
        resolved: Some(TrainConfig {
            model: Some(kind),
            ..cfg.clone()
        }),
        ..args.clone()
    };
    resolved::write_in(&args.out, Command::Train(record))?;

    let prop = Propagation::new(&ds.graph);
    let mut rows = Vec::new();
    for (t, split) in splits.trials.iter().enumerate() {
        let spec = cfg.train_spec(cell_seed(args.seed, 0, t))?;
        let m = train_model(&model_cfg, &spec, &ds, &prop, split)?;
        log::info!(
            "trial {t}: val {:.4} test {:.4} (best epoch {}, {} epochs, {:.1}s)",
            m.val_acc,
            m.test_acc,
            m.best_epoch,
            m.epochs,
            m.seconds
        );
        if let Some(layer) = args.embeddings_layer {
            export_embeddings(&m.best, &ds, layer, &args.out.join(format!("embeddings_trial{t}.csv")))?;
        }
        rows.push(TrialResult {
            dataset: ds.name.clone(),
            model: kind,
            config_id: 0,
            trial: t,
            val_acc: m.val_acc,
            test_acc: m.test_acc,
            epochs: m.epochs,
            seconds: m.seconds,
        });
    }
    let vals: Vec<f64> = rows.iter().map(|r| r.val_acc).collect();
    let tests: Vec<f64> = rows.iter().map(|r| r.test_acc).collect();
    let (mean_val, std_val) = mean_std(&vals);
    let (mean_test, std_test) = mean_std(&tests);
    let summary = GridSummary {
        dataset: ds.name.clone(),
        model: kind,
        trials: rows.len(),
        mean_val,
        std_val,
        mean_test,
        std_test,
    };
    write_results(&args.out.join("results.csv"), &rows)?;
    write_summary(&args.out.join("summary.csv"), &[summary])?;
    println!(
        "{} on {}: test {:.2} ± {:.2}, val {:.2} ± {:.2} over {} splits",
        kind,
        ds.name,
        100.0 * mean_test,
        100.0 * std_test,
        100.0 * mean_val,
        100.0 * std_val,
        rows.len()
    );
    Ok(())
}

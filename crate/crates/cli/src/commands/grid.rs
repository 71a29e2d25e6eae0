//! `ldl grid`: grid search with per-split selection.

use std::path::PathBuf;

use clap::Args;
use ldl_core::experiments::{grid_search, GridOptions, GridSpec};
use ldl_core::layers::ModelKind;
use serde::{Deserialize, Serialize};

use super::{load_with_splits, read_json};
use crate::error::CliError;
use crate::{resolved, Command};

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// JSON grid: lists per hyperparameter plus optimizer settings.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Overrides the grid's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "LDL_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Output directory; completed cells found here are reused.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(skip)]
    #[serde(default)]
    pub resolved: Option<GridSpec>,
}

pub fn run(args: GridArgs) -> Result<(), CliError> {
    let mut grid: GridSpec = match (&args.resolved, &args.grid) {
        (Some(g), _) => g.clone(),
        (None, Some(path)) => read_json(path)?,
        (None, None) => return Err(CliError::Usage("--grid is required".into())),
    };
    if let Some(seed) = args.seed {
        grid.seed = seed;
    }
    let kind = match (args.model, grid.model) {
        (Some(f), Some(g)) if f != g => return Err(CliError::Usage(format!("--model {f} contradicts grid model {g}"))),
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(CliError::Usage("no model given; pass --model or set \"model\" in the grid".into())),
    };
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    grid.model = Some(kind);
    let configs = grid.expand(kind)?;
    let (ds, splits) = load_with_splits(&args.dataset, args.trials)?;
    std::fs::create_dir_all(&args.out)?;
    let record = GridArgs {
        model: Some(kind),
        grid: None,
        seed: None,
        resolved: Some(grid.clone()),
        ..args.clone()
    };
    resolved::write_in(&args.out, Command::Grid(record))?;
    log::info!(
        "{kind} on {}: {} configurations x {} splits on {} workers",
        ds.name,
        configs.len(),
        splits.len(),
        args.workers
    );

    let opts = GridOptions {
        workers: args.workers,
        out_dir: Some(args.out.clone()),
    };
    let outcome = grid_search(&ds, &splits, kind, &grid, &opts)?;
    for s in &outcome.selections {
        println!(
            "split {:2}: config {:3} val {:.4} test {:.4}",
            s.trial, s.config_id, s.val_acc, s.test_acc
        );
    }
    let best = outcome.best();
    println!(
        "best on average: config {} (depth {}, hidden {}, {}, wd {}, p_in {}, p_layer {}, alpha {}, lambda {})",
        best.id,
        best.model.depth,
        best.model.hidden,
        best.model.activation,
        best.train.weight_decay,
        best.model.p_input,
        best.model.p_layer,
        best.model.alpha,
        best.model.lambda
    );
    let s = &outcome.summary;
    println!(
        "{} on {}: test {:.2} ± {:.2} over {} splits",
        kind,
        ds.name,
        100.0 * s.mean_test,
        100.0 * s.std_test,
        s.trials
    );
    if !outcome.excluded.is_empty() {
        println!("excluded (every trial failed): {:?}", outcome.excluded);
    }
    Ok(())
}

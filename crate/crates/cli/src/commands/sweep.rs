//! `ldl sweep`: accuracy against depth with everything else fixed.

use std::path::PathBuf;

use clap::Args;
use ldl_core::experiments::{depth_trend, layer_sweep, write_sweep, GridOptions};
use ldl_core::layers::ModelKind;
use serde::{Deserialize, Serialize};

use super::{load_with_splits, ConfigFlags, TrainConfig};
use crate::error::CliError;
use crate::{resolved, Command};

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',', default_value = "Lying-GCN,Lying-GCNII")]
    pub models: Vec<ModelKind>,
    /// Comma-separated depths.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub depths: Vec<usize>,
    /// Base configuration; its depth is ignored.
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "LDL_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Trend is measured over depths at or above this value.
    #[arg(long, default_value_t = 3)]
    pub trend_from: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(skip)]
    #[serde(default)]
    pub resolved: Option<TrainConfig>,
}

pub fn run(args: SweepArgs) -> Result<(), CliError> {
    let cfg = match &args.resolved {
        Some(c) => c.clone(),
        None => args.flags.resolve()?,
    };
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let bases = args
        .models
        .iter()
        .map(|&k| Ok((cfg.model_config(k)?, cfg.train_spec(args.seed)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let (ds, splits) = load_with_splits(&args.dataset, args.trials)?;
    std::fs::create_dir_all(&args.out)?;
    let record = SweepArgs {
        flags: ConfigFlags::default(),
        resolved: Some(TrainConfig { model: None, ..cfg }),
        ..args.clone()
    };
    resolved::write_in(&args.out, Command::Sweep(record))?;

    let opts = GridOptions {
        workers: args.workers,
        out_dir: Some(args.out.clone()),
    };
    let rows = layer_sweep(&ds, &splits, &bases, &args.depths, &opts)?;
    write_sweep(&args.out.join("sweep.csv"), &rows)?;
    for r in &rows {
        println!("{:12} depth {:2}: val {:.4} ± {:.4}  test {:.4}", r.model.name(), r.depth, r.mean_val, r.std_val, r.mean_test);
    }
    for &k in &args.models {
        match depth_trend(&rows, k, args.trend_from) {
            Some(rho) => println!("{}: Spearman(depth, val) over depth >= {} = {rho:.3}", k.name(), args.trend_from),
            None => println!("{}: trend undefined (constant accuracy or too few depths)", k.name()),
        }
    }
    Ok(())
}

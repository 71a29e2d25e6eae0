//! `ldl generate`: synthetic multipartite dataset plus random splits.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ldl_core::data::{generate_multipartite, make_random_splits, save_canonical};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{resolved, Command};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partite {
    Bipartite,
    Tripartite,
}

impl Partite {
    pub fn partitions(self) -> usize {
        match self {
            Partite::Bipartite => 2,
            Partite::Tripartite => 3,
        }
    }

    /// Default width of the Gaussian node features.
    pub fn default_feat_dim(self) -> usize {
        match self {
            Partite::Bipartite => 512,
            Partite::Tripartite => 128,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Partite::Bipartite => "bipartite",
            Partite::Tripartite => "tripartite",
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: Partite,
    #[arg(long, default_value_t = 1600)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5.0)]
    pub avg_degree: f64,
    /// Feature width; 512 for bipartite and 128 for tripartite by default.
    #[arg(long)]
    pub feat_dim: Option<usize>,
    /// Number of random 60/20/20 splits stored with the dataset.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; the resolved config goes to `<stem>.resolved.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(mut args: GenerateArgs) -> Result<(), CliError> {
    let feat_dim = *args.feat_dim.get_or_insert(args.kind.default_feat_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut ds = generate_multipartite(args.kind.partitions(), args.nodes, args.avg_degree, feat_dim, &mut rng)?;
    ds.name = args.kind.name().to_string();
    let splits = make_random_splits(args.nodes, (0.6, 0.2, 0.2), args.trials, &mut rng)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_canonical(&args.out, &ds, Some(&splits))?;
    let record = args.out.with_extension("resolved.json");
    resolved::write(&record, Command::Generate(args.clone()))?;
    println!(
        "{}: n = {}, edges = {}, C = {}, f = {}, mean degree = {:.3}, homophily = {:.3}, {} splits -> {}",
        ds.name,
        ds.n_nodes(),
        ds.graph.n_edges(),
        ds.classes,
        ds.feature_dim(),
        2.0 * ds.graph.n_edges() as f64 / ds.n_nodes() as f64,
        ds.edge_homophily()?,
        splits.len(),
        args.out.display()
    );
    Ok(())
}

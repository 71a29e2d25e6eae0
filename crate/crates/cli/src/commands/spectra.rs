//! `ldl spectra`: eigenvalue checks on lying diffusion operators.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use ldl_core::dynamics::{random_instance, random_opinions, verify_spectrum, OpinionSampling};
use ldl_core::graph::Graph;
use ldl_core::numerics::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::read_json;
use crate::error::CliError;
use crate::{resolved, Command};

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SpectraArgs {
    /// `random` (fresh G(n, p) per sample) or a JSON file with `n` and `edges`.
    #[arg(long, default_value = "random")]
    pub graph: String,
    /// `random`, `signs`, `ones`, or a JSON n×n matrix file.
    #[arg(long, default_value = "random")]
    pub z: String,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Largest random graph; the dense eigensolver is meant for small n.
    #[arg(long, default_value_t = 30)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `spectra.csv` and the resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(skip)]
    #[serde(default)]
    pub resolved_z: Option<Vec<Vec<f64>>>,
}

/// Largest graph accepted from a file.
const MAX_FILE_NODES: usize = 400;

#[derive(Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize)>,
}

enum ZSource {
    Sampled(OpinionSampling),
    Fixed(Matrix),
}

pub fn run(args: SpectraArgs) -> Result<(), CliError> {
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let fixed_graph = match args.graph.as_str() {
        "random" => None,
        path => {
            let file: GraphFile = read_json(std::path::Path::new(path))?;
            if file.n > MAX_FILE_NODES {
                return Err(CliError::Usage(format!("graph has {} nodes; the eigensolver cap is {MAX_FILE_NODES}", file.n)));
            }
            Some(Graph::from_edge_list(file.n, &file.edges)?)
        }
    };
    let mut resolved_z = args.resolved_z.clone();
    let z_source = match (&resolved_z, args.z.parse::<OpinionSampling>()) {
        (Some(rows), _) => ZSource::Fixed(rows_to_matrix(rows)?),
        (None, Ok(sampling)) => ZSource::Sampled(sampling),
        (None, Err(_)) => {
            let rows: Vec<Vec<f64>> = read_json(std::path::Path::new(&args.z))?;
            let m = rows_to_matrix(&rows)?;
            resolved_z = Some(rows);
            ZSource::Fixed(m)
        }
    };
    if let ZSource::Fixed(z) = &z_source {
        match &fixed_graph {
            Some(g) if g.n_nodes() == z.rows() => {}
            Some(g) => return Err(CliError::Usage(format!("z is {}x{} but the graph has {} nodes", z.rows(), z.cols(), g.n_nodes()))),
            None => return Err(CliError::Usage("a fixed z matrix needs --graph PATH".into())),
        }
    }

    let record = SpectraArgs {
        resolved_z,
        ..args.clone()
    };
    let mut csv_out = match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            resolved::write_in(dir, Command::Spectra(record))?;
            Some(fs::File::create(dir.join("spectra.csv"))?)
        }
        None => {
            println!("# resolved: {}", serde_json::to_string(&Command::Spectra(record))?);
            None
        }
    };
    let header = "sample,n,edges,min_real,max_real,min_nonzero_real,max_abs_imag,complex_pair,gershgorin,pass";
    println!("{header}");
    if let Some(f) = &mut csv_out {
        writeln!(f, "{header}")?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut passed, mut gershgorin, mut complex, mut unit_ok) = (0, 0, 0, true);
    for k in 0..args.samples {
        let (g, z) = match (&fixed_graph, &z_source) {
            (Some(g), ZSource::Fixed(z)) => (g.clone(), z.clone()),
            (Some(g), ZSource::Sampled(s)) => (g.clone(), random_opinions(g, *s, &mut rng)),
            (None, ZSource::Sampled(s)) => random_instance(args.max_nodes, *s, &mut rng)?,
            (None, ZSource::Fixed(_)) => unreachable!("rejected above"),
        };
        let r = verify_spectrum(&g, &z)?;
        if matches!(z_source, ZSource::Sampled(OpinionSampling::Ones)) {
            unit_ok &= r.max_abs_imag <= 1e-9 && r.max_real <= 2.0 + 1e-9;
        }
        passed += usize::from(r.pass);
        gershgorin += usize::from(r.gershgorin_ok);
        complex += usize::from(r.complex_pair);
        let line = format!(
            "{k},{},{},{:.3e},{:.6},{},{:.3e},{},{},{}",
            r.n,
            g.n_edges(),
            r.min_real,
            r.max_real,
            r.min_nonzero_real.map_or("none".to_string(), |v| format!("{v:.6}")),
            r.max_abs_imag,
            r.complex_pair,
            r.gershgorin_ok,
            r.pass
        );
        println!("{line}");
        if let Some(f) = &mut csv_out {
            writeln!(f, "{line}")?;
        }
    }
    let n = args.samples;
    println!("spectrum: {passed}/{n} pass; diagonal dominance: {gershgorin}/{n}; samples with a complex pair: {complex}/{n}");
    if passed < n || gershgorin < n {
        return Err(CliError::Violation(format!("{} of {n} samples violate the spectral property", n - passed)));
    }
    if !unit_ok {
        return Err(CliError::Violation("unit opinions produced a spectrum outside the real interval [0, 2]".into()));
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage("z must be a non-empty square matrix".into()));
    }
    if let Some(bad) = rows.iter().flatten().find(|z| !(-1.0..=1.0).contains(*z)) {
        return Err(CliError::Usage(format!("opinion weight {bad} lies outside [-1, 1]")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

//! `ldl simulate`: diffusion trajectories from both solvers.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use ldl_core::dynamics::{
    chain3, chain_opinions, chain_sheaf_restrictions, run_chain_study, simulate, solve_closed_form, uniform_grid,
    DiffusionSystem, ChainStudyOptions, SystemKind, CHAIN_H0,
};
use ldl_core::graph::Graph;
use ldl_core::numerics::Matrix;
use serde::{Deserialize, Serialize};

use super::read_json;
use crate::error::CliError;
use crate::{resolved, Command};

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: SystemKind,
    /// `chain3` or a JSON file with `n` and `edges` (canonical datasets work).
    #[arg(long, default_value = "chain3")]
    pub graph: String,
    /// JSON n×n matrix of opinion weights `Z[u][v] = z_{v→u}`.
    #[arg(long)]
    pub z_spec: Option<PathBuf>,
    /// JSON list of `[f_u, f_v]` restriction pairs, one per edge in `(u < v)`
    /// order.
    #[arg(long)]
    pub restrictions: Option<PathBuf>,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub h0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub rk4_dt: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(skip)]
    #[serde(default)]
    pub resolved_z: Option<Vec<Vec<f64>>>,
    #[arg(skip)]
    #[serde(default)]
    pub resolved_restrictions: Option<Vec<(f64, f64)>>,
}

#[derive(Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize)>,
}

fn load_graph(spec: &str) -> Result<Graph, CliError> {
    if spec == "chain3" {
        return Ok(chain3());
    }
    let file: GraphFile = read_json(std::path::Path::new(spec))?;
    Ok(Graph::from_edge_list(file.n, &file.edges)?)
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize) -> Result<Matrix, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!("z-spec must be a {n}x{n} matrix")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let g = load_graph(&args.graph)?;
    let n = g.n_nodes();
    let is_chain3 = args.graph == "chain3";

    let z_rows: Option<Vec<Vec<f64>>> = match (&args.resolved_z, &args.z_spec) {
        (Some(z), _) => Some(z.clone()),
        (None, Some(path)) => Some(read_json(path)?),
        (None, None) if is_chain3 => {
            let z = chain_opinions();
            Some((0..3).map(|i| z.row(i).to_vec()).collect())
        }
        (None, None) => None,
    };
    if let Some(rows) = &z_rows {
        if let Some(bad) = rows.iter().flatten().find(|z| !(-1.0..=1.0).contains(*z)) {
            return Err(CliError::Usage(format!("opinion weight {bad} lies outside [-1, 1]")));
        }
    }
    let restrictions: Option<Vec<(f64, f64)>> = match (&args.resolved_restrictions, &args.restrictions) {
        (Some(r), _) => Some(r.clone()),
        (None, Some(path)) => Some(read_json(path)?),
        (None, None) if is_chain3 => Some(chain_sheaf_restrictions()),
        (None, None) => None,
    };
    let h0 = match &args.h0 {
        Some(h) => h.clone(),
        None if is_chain3 => CHAIN_H0.to_vec(),
        None => return Err(CliError::Usage("--h0 is required for graphs other than chain3".into())),
    };
    if h0.len() != n {
        return Err(CliError::Usage(format!("--h0 has {} entries but the graph has {n} nodes", h0.len())));
    }

    let sys = match args.system {
        SystemKind::Heat => DiffusionSystem::heat(&g),
        SystemKind::HeatNormalized => DiffusionSystem::heat_normalized(&g),
        SystemKind::SheafScalar => {
            let r = restrictions.as_ref().ok_or_else(|| CliError::Usage("--restrictions is required for sheaf".into()))?;
            DiffusionSystem::sheaf_scalar(&g, r)?
        }
        SystemKind::Lying => {
            let rows = z_rows.as_ref().ok_or_else(|| CliError::Usage("--z-spec is required for lying".into()))?;
            DiffusionSystem::lying(&g, &matrix_from_rows(rows, n)?)?
        }
    };

    fs::create_dir_all(&args.out)?;
    let record = SimulateArgs {
        h0: Some(h0.clone()),
        z_spec: None,
        restrictions: None,
        resolved_z: z_rows.clone(),
        resolved_restrictions: restrictions.clone(),
        ..args.clone()
    };
    resolved::write_in(&args.out, Command::Simulate(record))?;

    let times = uniform_grid(args.t_max, args.dt)?;
    let (closed, rk4, gap) = simulate(&sys, &h0, &times, args.rk4_dt)?;
    let cf = solve_closed_form(&sys, &h0, &[0.0], args.rk4_dt)?;
    closed.write_csv(&args.out.join("closed_form.csv"))?;
    rk4.write_csv(&args.out.join("rk4.csv"))?;
    let final_norm = closed.last().iter().map(|x| x * x).sum::<f64>().sqrt();
    let summary = serde_json::json!({
        "system": sys.kind.name(),
        "nodes": n,
        "steps": times.len(),
        "closed_form_solver": closed.solver.name(),
        "eigenvector_condition": cf.condition,
        "solver_gap": gap,
        "final_state": closed.last(),
        "final_norm": final_norm,
    });
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} on {} nodes: {} steps, closed form via {}, solver gap {:.2e}, final norm {:.4e}",
        sys.kind.name(),
        n,
        times.len(),
        closed.solver.name(),
        gap,
        final_norm
    );

    if is_chain3 {
        let mut opts = ChainStudyOptions {
            h0,
            t_max: args.t_max.max(10.0),
            dt: args.dt,
            rk4_dt: args.rk4_dt,
            ..ChainStudyOptions::default()
        };
        if let Some(rows) = &z_rows {
            opts.lying_opinions = matrix_from_rows(rows, 3)?;
        }
        if let Some(r) = restrictions {
            opts.sheaf_restrictions = r;
        }
        let report = run_chain_study(&opts)?;
        report.write(&args.out.join("chain"))?;
        for (system, check) in report.checks() {
            println!("  [{}] {system}: {} ({})", if check.pass { "ok" } else { "FAIL" }, check.name, check.detail);
        }
        println!("  max solver gap across panels: {:.2e}", report.max_solver_gap());
        if !report.all_pass() {
            return Err(CliError::Violation("a qualitative diffusion check failed".into()));
        }
    }
    Ok(())
}

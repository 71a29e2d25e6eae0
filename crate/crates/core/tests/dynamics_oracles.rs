//! Diffusion systems against closed-form, RK4, and spectral oracles.

mod common;

use common::random_graph;
use ldl_core::dynamics::{
    chain_opinions, random_opinions, run_chain_study, simulate, solve_closed_form, uniform_grid,
    verify_spectrum, DiffusionSystem, ChainStudyOptions, OpinionSampling, Solver, CHAIN_H0,
};
use ldl_core::graph::Graph;
use ldl_core::numerics::eigen::max_residual;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn chain_study_panels_pass_their_checks() {
    let report = run_chain_study(&ChainStudyOptions::default()).unwrap();
    for (system, check) in report.checks() {
        assert!(check.pass, "{system}: {} ({})", check.name, check.detail);
    }
    assert!(report.max_solver_gap() <= 1e-6, "gap {}", report.max_solver_gap());
    for panel in &report.panels {
        assert_eq!(panel.closed_form.solver, Solver::ClosedForm, "{}", panel.system.kind);
    }
}

#[test]
fn chain_study_writes_csv_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_chain_study(&ChainStudyOptions {
        t_max: 1.0,
        dt: 0.25,
        ..Default::default()
    })
    .unwrap();
    report.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("lying_rk4.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,h_1,h_2,h_3");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[1], "0,1,0.5,-0.5");
    let checks: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("checks.json")).unwrap()).unwrap();
    assert_eq!(checks["panels"].as_array().unwrap().len(), 3);
}

#[test]
fn solvers_agree_on_random_lying_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let times = uniform_grid(10.0, 0.05).unwrap();
    for _ in 0..10 {
        let g = random_graph(rng.random_range(3..10), 0.4, &mut rng);
        let z = random_opinions(&g, OpinionSampling::Uniform, &mut rng);
        let sys = DiffusionSystem::lying(&g, &z).unwrap();
        let h0: Vec<f64> = (0..g.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, _, gap) = simulate(&sys, &h0, &times, 1e-3).unwrap();
        assert!(gap <= 1e-6, "gap {gap:e}");
    }
}

#[test]
fn lying_diffusion_decays_to_zero() {
    let sys = DiffusionSystem::lying(&Graph::chain(3), &chain_opinions()).unwrap();
    let out = solve_closed_form(&sys, &CHAIN_H0, &[0.0, 60.0], 1e-3).unwrap();
    assert!(out.trajectory.last().iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn spectrum_checks_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for k in 0..300 {
        let n = rng.random_range(2..=30);
        let g = random_graph(n, rng.random_range(0.05..0.5), &mut rng);
        let sampling = [OpinionSampling::Uniform, OpinionSampling::Signs, OpinionSampling::Ones][k % 3];
        let z = random_opinions(&g, sampling, &mut rng);
        let report = verify_spectrum(&g, &z).unwrap();
        assert!(report.pass, "sample {k}: {report:?}");
        assert!(report.congruence_gap < 1e-14);
    }
}

#[test]
fn unit_opinions_give_real_spectrum_in_zero_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let g = random_graph(20, 0.2, &mut rng);
    let z = random_opinions(&g, OpinionSampling::Ones, &mut rng);
    let report = verify_spectrum(&g, &z).unwrap();
    assert!(report.max_abs_imag <= 1e-9);
    assert!(report.min_real >= -1e-9);
    let sys = DiffusionSystem::lying(&g, &z).unwrap();
    let spectrum = sys.spectrum().unwrap();
    assert!(spectrum.eigenvalues.iter().all(|l| l.re <= 2.0 + 1e-9));
    assert!(max_residual(&sys.matrix, &spectrum).unwrap() <= 1e-8 * sys.matrix.max_abs().max(1.0) * 20.0);
}

#[test]
fn symmetric_systems_dissipate_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let g = random_graph(8, 0.4, &mut rng);
    let h0: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let restrictions: Vec<(f64, f64)> = g
        .edges()
        .iter()
        .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        .collect();
    let times = uniform_grid(5.0, 0.05).unwrap();
    for sys in [
        DiffusionSystem::heat(&g),
        DiffusionSystem::heat_normalized(&g),
        DiffusionSystem::sheaf_scalar(&g, &restrictions).unwrap(),
    ] {
        let (closed, rk4, gap) = simulate(&sys, &h0, &times, 1e-3).unwrap();
        assert!(gap <= 1e-6);
        assert!(ldl_core::dynamics::energy_non_increasing(&closed, 1e-12), "{}", sys.kind);
        assert!(ldl_core::dynamics::energy_non_increasing(&rk4, 1e-12), "{}", sys.kind);
    }
}

#[test]
fn sheaf_restriction_count_is_checked() {
    let g = Graph::chain(3);
    assert!(DiffusionSystem::sheaf_scalar(&g, &[(1.0, 1.0)]).is_err());
    let m = DiffusionSystem::sheaf_scalar(&g, &[(1.0, 1.0), (1.0, 1.0)]).unwrap().matrix;
    assert_eq!(m, g.laplacian_dense());
}

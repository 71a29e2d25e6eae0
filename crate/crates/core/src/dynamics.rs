//! Continuous diffusion on graphs: heat, scalar sheaf, and lying diffusion,
//! their spectra, closed-form and Runge–Kutta trajectories, and the
//! three-node chain demonstration.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormalizedOperators};
use crate::numerics::eigen::eigenvalues;
use crate::numerics::lu::{condition_number, ComplexLu};
use crate::numerics::{eig_dense, ComplexSpectrum, Matrix};

/// Eigenvector matrices at or above this condition number count as defective.
pub const DIAGONALIZABLE_COND_LIMIT: f64 = 1e8;
/// Largest imaginary residue tolerated in a reconstructed real state.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `D − A`.
    Heat,
    /// `I − S̃`.
    HeatNormalized,
    /// Sheaf Laplacian with one scalar restriction per node-edge incidence.
    SheafScalar,
    /// `L̃ ⊙ (Z + I)`.
    Lying,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Heat => "heat",
            SystemKind::HeatNormalized => "heat-norm",
            SystemKind::SheafScalar => "sheaf",
            SystemKind::Lying => "lying",
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, SystemKind::Lying)
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heat" => Ok(SystemKind::Heat),
            "heat-norm" | "heat-normalized" => Ok(SystemKind::HeatNormalized),
            "sheaf" | "sheaf-scalar" => Ok(SystemKind::SheafScalar),
            "lying" => Ok(SystemKind::Lying),
            other => Err(Error::Config(format!("unknown diffusion system '{other}'"))),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `dh/dt = −rate · M h`.
#[derive(Clone, Debug)]
pub struct DiffusionSystem {
    pub kind: SystemKind,
    pub matrix: Matrix,
    pub rate: f64,
    pub graph: Graph,
    /// Per edge of `graph.edges()`, `(f_{u⊲e}, f_{v⊲e})` for `(u, v)`.
    pub restrictions: Option<Vec<(f64, f64)>>,
    /// Opinion weights, `Z[u][v] = z_{v→u}`.
    pub opinions: Option<Matrix>,
}

impl DiffusionSystem {
    pub fn heat(g: &Graph) -> Self {
        Self::plain(SystemKind::Heat, g, g.laplacian_dense())
    }

    pub fn heat_normalized(g: &Graph) -> Self {
        Self::plain(SystemKind::HeatNormalized, g, normalize_adjacency(g).laplacian.to_dense())
    }

    pub fn sheaf_scalar(g: &Graph, restrictions: &[(f64, f64)]) -> Result<Self> {
        if restrictions.len() != g.n_edges() {
            return Err(Error::Config(format!(
                "sheaf needs one restriction pair per edge: {} edges, {} pairs",
                g.n_edges(),
                restrictions.len()
            )));
        }
        if restrictions.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("non-finite sheaf restriction".into()));
        }
        let n = g.n_nodes();
        let mut m = Matrix::zeros(n, n);
        for (&(u, v), &(fu, fv)) in g.edges().iter().zip(restrictions) {
            m[(u, u)] += fu * fu;
            m[(v, v)] += fv * fv;
            m[(u, v)] -= fu * fv;
            m[(v, u)] -= fu * fv;
        }
        let mut sys = Self::plain(SystemKind::SheafScalar, g, m);
        sys.restrictions = Some(restrictions.to_vec());
        Ok(sys)
    }

    pub fn lying(g: &Graph, z: &Matrix) -> Result<Self> {
        let ops = normalize_adjacency(g);
        let e = build_lying_e(g, &ops, z)?;
        let mut sys = Self::plain(SystemKind::Lying, g, e);
        sys.opinions = Some(z.clone());
        Ok(sys)
    }

    fn plain(kind: SystemKind, g: &Graph, matrix: Matrix) -> Self {
        Self {
            kind,
            matrix,
            rate: 1.0,
            graph: g.clone(),
            restrictions: None,
            opinions: None,
        }
    }

    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Config(format!("rate must be positive, got {rate}")));
        }
        self.rate = rate;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn spectrum(&self) -> Result<ComplexSpectrum> {
        eig_dense(&self.matrix)
    }
}

fn check_opinions(g: &Graph, z: &Matrix) -> Result<()> {
    let n = g.n_nodes();
    if z.shape() != (n, n) {
        return Err(Error::dim("opinion matrix", z.shape(), (n, n)));
    }
    for u in 0..n {
        if z[(u, u)] != 0.0 {
            return Err(Error::Contract(format!("opinion matrix has nonzero diagonal at node {u}")));
        }
    }
    let adj = g.adjacency_dense();
    for u in 0..n {
        for v in 0..n {
            let x = z[(u, v)];
            if !x.is_finite() || x.abs() > 1.0 {
                return Err(Error::Contract(format!("opinion weight Z[{u}][{v}] = {x} outside [-1, 1]")));
            }
            if adj[(u, v)] == 0.0 && x != 0.0 {
                return Err(Error::Contract(format!("opinion weight on non-edge ({u}, {v})")));
            }
        }
    }
    Ok(())
}

/// `E = L̃ ⊙ (Z + I)`: diagonal `1 − S̃ᵤᵤ`, off-diagonal `−S̃ᵤᵥ Zᵤᵥ`.
pub fn build_lying_e(g: &Graph, ops: &NormalizedOperators, z: &Matrix) -> Result<Matrix> {
    check_opinions(g, z)?;
    let n = g.n_nodes();
    let mut e = ops.laplacian.to_dense();
    for u in 0..n {
        for v in 0..n {
            if u != v {
                e[(u, v)] *= z[(u, v)];
            }
        }
    }
    Ok(e)
}

/// `B = (D − A) ⊙ (Z + I)`, the unnormalized counterpart of `E`.
pub fn build_lying_b(g: &Graph, z: &Matrix) -> Result<Matrix> {
    check_opinions(g, z)?;
    let mut b = g.laplacian_dense();
    let n = g.n_nodes();
    for u in 0..n {
        for v in 0..n {
            if u != v {
                b[(u, v)] *= z[(u, v)];
            }
        }
    }
    Ok(b)
}

/// How random opinion weights are drawn on each directed edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpinionSampling {
    Uniform,
    Signs,
    Ones,
}

impl FromStr for OpinionSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "uniform" => Ok(OpinionSampling::Uniform),
            "signs" => Ok(OpinionSampling::Signs),
            "ones" => Ok(OpinionSampling::Ones),
            other => Err(Error::Config(format!("unknown opinion sampling '{other}'"))),
        }
    }
}

pub fn random_opinions<R: Rng + ?Sized>(g: &Graph, sampling: OpinionSampling, rng: &mut R) -> Matrix {
    let n = g.n_nodes();
    let mut z = Matrix::zeros(n, n);
    for &(u, v) in g.edges() {
        for (a, b) in [(u, v), (v, u)] {
            z[(a, b)] = match sampling {
                OpinionSampling::Uniform => rng.random_range(-1.0..=1.0),
                OpinionSampling::Signs => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
                OpinionSampling::Ones => 1.0,
            };
        }
    }
    z
}

/// Random `(graph, Z)` pair: `n` uniform in `[2, max_nodes]`, G(n, p) with
/// `p` uniform in `[0.05, 0.5)`.
pub fn random_instance<R: Rng + ?Sized>(max_nodes: usize, sampling: OpinionSampling, rng: &mut R) -> Result<(Graph, Matrix)> {
    if max_nodes < 2 {
        return Err(Error::Config(format!("need at least 2 nodes, got {max_nodes}")));
    }
    let n = rng.random_range(2..=max_nodes);
    let p = rng.random_range(0.05..0.5);
    let g = Graph::gnp(n, p, rng)?;
    let z = random_opinions(&g, sampling, rng);
    Ok((g, z))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub min_real: f64,
    pub max_real: f64,
    /// Smallest real part among eigenvalues with modulus above the zero
    /// threshold, if any.
    pub min_nonzero_real: Option<f64>,
    pub max_abs_imag: f64,
    pub complex_pair: bool,
    /// Every row of `B` has `B_uu ≥ Σ_{v≠u} |B_uv|`.
    pub gershgorin_ok: bool,
    /// `‖E − D̃^{-1/2} B D̃^{-1/2}‖_max`.
    pub congruence_gap: f64,
    pub pass: bool,
}

/// Eigenvalues with modulus at or below this are treated as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

/// Checks that no eigenvalue of `E` has negative real part, that nonzero
/// eigenvalues have strictly positive real part, and that `B` is
/// diagonally dominant.
pub fn verify_spectrum(g: &Graph, z: &Matrix) -> Result<SpectrumReport> {
    let ops = normalize_adjacency(g);
    let e = build_lying_e(g, &ops, z)?;
    let b = build_lying_b(g, z)?;
    let n = g.n_nodes();
    let spectrum = eigenvalues(&e)?;

    let min_real = spectrum.min_real();
    let min_nonzero_real = spectrum
        .eigenvalues
        .iter()
        .filter(|l| l.norm() > ZERO_EIGEN_TOL)
        .map(|l| l.re)
        .reduce(f64::min);

    let gershgorin_ok = (0..n).all(|u| {
        let off: f64 = (0..n).filter(|&v| v != u).map(|v| b[(u, v)].abs()).sum();
        off <= b[(u, u)] + 1e-12
    });

    let scale: Vec<f64> = ops.aug_degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut congruence_gap = 0.0f64;
    for u in 0..n {
        for v in 0..n {
            let via_b = scale[u] * b[(u, v)] * scale[v];
            congruence_gap = congruence_gap.max((via_b - e[(u, v)]).abs());
        }
    }

    let pass = min_real >= -ZERO_EIGEN_TOL && min_nonzero_real.is_none_or(|r| r > ZERO_EIGEN_TOL) && gershgorin_ok;
    Ok(SpectrumReport {
        n,
        min_real,
        max_real: spectrum.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max),
        min_nonzero_real,
        max_abs_imag: spectrum.max_abs_imag(),
        complex_pair: spectrum.has_complex_pair(1e-9),
        gershgorin_ok,
        congruence_gap,
        pass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    ClosedForm,
    Rk4,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::ClosedForm => "closed-form",
            Solver::Rk4 => "rk4",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub solver: Solver,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn max_abs_gap(&self, other: &Trajectory) -> Result<f64> {
        if self.times != other.times || self.dim() != other.dim() {
            return Err(Error::Contract("trajectories are on different grids".into()));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    /// Header `t,h_1,...,h_n`, values in shortest round-trip form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("h_{i}")));
        w.write_record(&header)?;
        for (t, state) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(state.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `[0, dt, 2dt, ..., t_max]`, with the last point pinned to `t_max`.
pub fn uniform_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::Config(format!("invalid time grid: t_max = {t_max}, dt = {dt}")));
    }
    let steps = (t_max / dt).round() as usize;
    if steps == 0 {
        return Ok(vec![0.0]);
    }
    Ok((0..=steps).map(|k| if k == steps { t_max } else { k as f64 * dt }).collect())
}

fn check_grid(sys: &DiffusionSystem, h0: &[f64], times: &[f64]) -> Result<()> {
    if h0.len() != sys.dim() {
        return Err(Error::dim("initial state", (h0.len(), 1), (sys.dim(), 1)));
    }
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::Config("time grid must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Outcome of [`solve_closed_form`].
#[derive(Clone, Debug)]
pub struct ClosedForm {
    pub trajectory: Trajectory,
    pub condition: f64,
    /// Largest imaginary residue across reconstructed states.
    pub imag_residue: f64,
}

/// `h(t) = Σ cᵢ e^{−rate·λᵢ t} uᵢ` with `U c = h₀`. Falls back to RK4 with
/// `fallback_dt` when the eigenvector matrix is near-defective.
pub fn solve_closed_form(sys: &DiffusionSystem, h0: &[f64], times: &[f64], fallback_dt: f64) -> Result<ClosedForm> {
    check_grid(sys, h0, times)?;
    let spectrum = eig_dense(&sys.matrix)?;
    let vectors = spectrum.eigenvectors.as_ref().expect("vectors requested");
    let condition = condition_number(vectors);
    if !(condition < DIAGONALIZABLE_COND_LIMIT) {
        log::warn!(
            "{} system is near-defective (eigenvector condition {condition:.3e}); using RK4",
            sys.kind
        );
        let trajectory = solve_rk4_on_grid(sys, h0, times, fallback_dt)?;
        return Ok(ClosedForm {
            trajectory,
            condition,
            imag_residue: 0.0,
        });
    }
    let lu = ComplexLu::from_columns(vectors)?;
    let rhs: Vec<Complex64> = h0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let coeffs = lu.solve(&rhs);

    let n = sys.dim();
    let mut states = Vec::with_capacity(times.len());
    let mut imag_residue = 0.0f64;
    for &t in times {
        if t == 0.0 {
            states.push(h0.to_vec());
            continue;
        }
        let mut state = vec![Complex64::new(0.0, 0.0); n];
        for ((lambda, c), u) in spectrum.eigenvalues.iter().zip(&coeffs).zip(vectors) {
            let weight = c * (-sys.rate * lambda * t).exp();
            for (s, ui) in state.iter_mut().zip(u) {
                *s += weight * ui;
            }
        }
        imag_residue = imag_residue.max(state.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
        states.push(state.iter().map(|z| z.re).collect());
    }
    let scale = h0.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if imag_residue > IMAG_RESIDUE_TOL * scale {
        return Err(Error::Numerical(format!(
            "closed-form states carry imaginary residue {imag_residue:.3e}"
        )));
    }
    Ok(ClosedForm {
        trajectory: Trajectory {
            times: times.to_vec(),
            states,
            solver: Solver::ClosedForm,
        },
        condition,
        imag_residue,
    })
}

fn rk4_step(m: &Matrix, rate: f64, h: &[f64], dt: f64) -> Vec<f64> {
    let f = |x: &[f64]| -> Vec<f64> { m.matvec(x).expect("square system").into_iter().map(|v| -rate * v).collect() };
    let shifted = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(h);
    let k2 = f(&shifted(h, &k1, dt / 2.0));
    let k3 = f(&shifted(h, &k2, dt / 2.0));
    let k4 = f(&shifted(h, &k3, dt));
    (0..h.len())
        .map(|i| h[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Classical RK4 with `steps` steps of size `dt`, recording every step.
pub fn solve_rk4(sys: &DiffusionSystem, h0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    solve_rk4_on_grid(sys, h0, &times, dt)
}

/// RK4 reporting states at `times`, with substeps no longer than `max_dt`.
pub fn solve_rk4_on_grid(sys: &DiffusionSystem, h0: &[f64], times: &[f64], max_dt: f64) -> Result<Trajectory> {
    check_grid(sys, h0, times)?;
    if !(max_dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {max_dt}")));
    }
    let mut h = h0.to_vec();
    let mut states = vec![h.clone()];
    let mut step = 0usize;
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let sub = (span / max_dt).ceil().max(1.0) as usize;
        let dt = span / sub as f64;
        for k in 0..sub {
            h = rk4_step(&sys.matrix, sys.rate, &h, dt);
            step += 1;
            if h.iter().any(|x| !x.is_finite()) {
                return Err(Error::Integration {
                    step,
                    t: w[0] + (k + 1) as f64 * dt,
                });
            }
        }
        states.push(h.clone());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        solver: Solver::Rk4,
    })
}

/// Squared norms never increase along the trajectory, up to `tol`.
pub fn energy_non_increasing(traj: &Trajectory, tol: f64) -> bool {
    let energy: Vec<f64> = traj.states.iter().map(|s| s.iter().map(|x| x * x).sum()).collect();
    energy.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Some pair `(i, j)` starts with `hᵢ < hⱼ` and later has `hᵢ > hⱼ`.
pub fn overtaking_witness(traj: &Trajectory) -> Option<(usize, usize, f64)> {
    let h0 = traj.states.first()?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for i in 0..state.len() {
            for j in 0..state.len() {
                if h0[i] < h0[j] && state[i] > state[j] {
                    return Some((i, j, *t));
                }
            }
        }
    }
    None
}

/// Nodes that hold the strictly largest value at some recorded instant.
pub fn leaders(traj: &Trajectory) -> Vec<usize> {
    let mut seen = vec![false; traj.dim()];
    for state in &traj.states {
        let (best, &value) = state
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty state");
        if state.iter().enumerate().all(|(k, &x)| k == best || x < value) {
            seen[best] = true;
        }
    }
    (0..seen.len()).filter(|&i| seen[i]).collect()
}

/// The three-node chain `u₁ – u₂ – u₃`.
pub fn chain3() -> Graph {
    Graph::chain(3)
}

pub const CHAIN_H0: [f64; 3] = [1.0, 0.5, -0.5];

/// Sheaf restrictions `(f_{u⊲e}, f_{v⊲e})` on the chain edges: the first
/// edge carries a sign flip, the second is plain.
pub fn chain_sheaf_restrictions() -> Vec<(f64, f64)> {
    vec![(1.0, -1.0), (1.0, 1.0)]
}

/// Opinion weights on the chain: `u₂` lies to `u₁` (`z_{u₂→u₁} = −1`), is
/// half-trusting towards `u₃` (`z_{u₂→u₃} = 0.5`), and every other message
/// is honest.
pub fn chain_opinions() -> Matrix {
    Matrix::from_rows(&[[0.0, -1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.5, 0.0]])
}

#[derive(Clone, Debug)]
pub struct ChainStudyOptions {
    pub h0: Vec<f64>,
    pub t_max: f64,
    pub dt: f64,
    pub rk4_dt: f64,
    pub lying_opinions: Matrix,
    pub sheaf_restrictions: Vec<(f64, f64)>,
}

impl Default for ChainStudyOptions {
    fn default() -> Self {
        Self {
            h0: CHAIN_H0.to_vec(),
            t_max: 10.0,
            dt: 0.01,
            rk4_dt: 1e-3,
            lying_opinions: chain_opinions(),
            sheaf_restrictions: chain_sheaf_restrictions(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub system: DiffusionSystem,
    pub closed_form: Trajectory,
    pub rk4: Trajectory,
    pub solver_gap: f64,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug)]
pub struct ChainStudyReport {
    pub panels: Vec<Panel>,
}

impl ChainStudyReport {
    pub fn all_pass(&self) -> bool {
        self.panels.iter().all(|p| p.checks.iter().all(|c| c.pass))
    }

    pub fn max_solver_gap(&self) -> f64 {
        self.panels.iter().map(|p| p.solver_gap).fold(0.0, f64::max)
    }

    pub fn checks(&self) -> impl Iterator<Item = (&str, &Check)> {
        self.panels
            .iter()
            .flat_map(|p| p.checks.iter().map(move |c| (p.system.kind.name(), c)))
    }

    /// Writes `<kind>_closed_form.csv`, `<kind>_rk4.csv`, and `checks.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut summary = Vec::new();
        for p in &self.panels {
            let name = p.system.kind.name();
            p.closed_form.write_csv(&dir.join(format!("{name}_closed_form.csv")))?;
            p.rk4.write_csv(&dir.join(format!("{name}_rk4.csv")))?;
            summary.push(serde_json::json!({
                "system": name,
                "closed_form_solver": p.closed_form.solver.name(),
                "solver_gap": p.solver_gap,
                "checks": p.checks,
            }));
        }
        let doc = serde_json::json!({ "panels": summary, "all_pass": self.all_pass() });
        fs::write(dir.join("checks.json"), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

/// Runs both solvers for one system and returns the pair with their gap.
pub fn simulate(sys: &DiffusionSystem, h0: &[f64], times: &[f64], rk4_dt: f64) -> Result<(Trajectory, Trajectory, f64)> {
    let closed = solve_closed_form(sys, h0, times, rk4_dt)?.trajectory;
    let rk4 = solve_rk4_on_grid(sys, h0, times, rk4_dt)?;
    let gap = closed.max_abs_gap(&rk4)?;
    Ok((closed, rk4, gap))
}

fn state_at(sys: &DiffusionSystem, h0: &[f64], t: f64, rk4_dt: f64) -> Result<Vec<f64>> {
    let times = if t > 0.0 { vec![0.0, t] } else { vec![0.0] };
    Ok(solve_closed_form(sys, h0, &times, rk4_dt)?.trajectory.last().to_vec())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Heat, sheaf, and lying diffusion on the three-node chain, with the
/// qualitative behaviour of each panel machine-checked.
pub fn run_chain_study(opts: &ChainStudyOptions) -> Result<ChainStudyReport> {
    let g = chain3();
    if opts.h0.len() != 3 {
        return Err(Error::dim("initial state", (opts.h0.len(), 1), (3, 1)));
    }
    let times = uniform_grid(opts.t_max, opts.dt)?;
    let h0 = &opts.h0;
    let mut panels = Vec::new();

    let heat = DiffusionSystem::heat(&g);
    let (closed, rk4, gap) = simulate(&heat, h0, &times, opts.rk4_dt)?;
    let settled = state_at(&heat, h0, 50.0, opts.rk4_dt)?;
    let mean = h0.iter().sum::<f64>() / 3.0;
    let spread = settled.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    let sign_uniform = settled.iter().all(|&x| x > 0.0) || settled.iter().all(|&x| x < 0.0);
    panels.push(Panel {
        checks: vec![
            Check::new(
                "consensus at t=50",
                spread < 1e-6,
                format!("max |h_i(50) - mean(h0)| = {spread:.3e}"),
            ),
            Check::new("sign-uniform consensus", sign_uniform, format!("h(50) = {settled:?}")),
            Check::new(
                "energy non-increasing",
                energy_non_increasing(&closed, 1e-12),
                String::new(),
            ),
        ],
        system: heat,
        closed_form: closed,
        rk4,
        solver_gap: gap,
    });

    let sheaf = DiffusionSystem::sheaf_scalar(&g, &opts.sheaf_restrictions)?;
    let (closed, rk4, gap) = simulate(&sheaf, h0, &times, opts.rk4_dt)?;
    let settled = state_at(&sheaf, h0, 50.0, opts.rk4_dt)?;
    let discourse = g
        .edges()
        .iter()
        .zip(&opts.sheaf_restrictions)
        .map(|(&(u, v), &(fu, fv))| (fu * settled[u] - fv * settled[v]).abs())
        .fold(0.0, f64::max);
    let diverged = settled[0] * settled[1] < 0.0;
    panels.push(Panel {
        checks: vec![
            Check::new(
                "u1 and u2 end with opposite signs",
                diverged,
                format!("h(50) = {settled:?}"),
            ),
            Check::new(
                "discourse consensus at t=50",
                discourse < 1e-6,
                format!("max edge disagreement {discourse:.3e}"),
            ),
            Check::new(
                "energy non-increasing",
                energy_non_increasing(&closed, 1e-12),
                String::new(),
            ),
        ],
        system: sheaf,
        closed_form: closed,
        rk4,
        solver_gap: gap,
    });

    let lying = DiffusionSystem::lying(&g, &opts.lying_opinions)?;
    let (closed, rk4, gap) = simulate(&lying, h0, &times, opts.rk4_dt)?;
    let at_ten = state_at(&lying, h0, 10.0, opts.rk4_dt)?;
    let decay = norm(&at_ten) / norm(h0);
    let spectrum = lying.spectrum()?;
    let witness_traj = solve_closed_form(&lying, h0, &uniform_grid(10.0, opts.dt)?, opts.rk4_dt)?.trajectory;
    let witness = overtaking_witness(&witness_traj);
    let leading = leaders(&witness_traj);
    panels.push(Panel {
        checks: vec![
            Check::new(
                "decay by t=10",
                decay < 1e-2,
                format!("|h(10)| / |h(0)| = {decay:.3e}"),
            ),
            Check::new(
                "oscillation witness",
                witness.is_some(),
                match witness {
                    Some((i, j, t)) => format!("u{} overtakes u{} at t = {t}", i + 1, j + 1),
                    None => "no overtaking observed".into(),
                },
            ),
            Check::new(
                "conjugate complex pair",
                spectrum.has_complex_pair(1e-9),
                format!("eigenvalues {:?}", spectrum.eigenvalues),
            ),
            Check::new(
                "every node leads at some instant",
                leading.len() == 3,
                format!("leaders {:?}", leading.iter().map(|i| i + 1).collect::<Vec<_>>()),
            ),
        ],
        system: lying,
        closed_form: closed,
        rk4,
        solver_gap: gap,
    });

    Ok(ChainStudyReport { panels })
}

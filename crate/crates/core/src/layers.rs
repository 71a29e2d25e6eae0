//! GCN, GCNII, the lying message mechanism, Lying-GCN, Lying-GCNII, MLP,
//! and whole-model assembly.
//!
//! Conventions: node embeddings are rows, weights are stored `in × out` so a
//! layer computes `H · W`. The opinion-weight map `V` is stored `2d × d`; its
//! first `d` rows act on the sender embedding and the last `d` rows on the
//! receiver embedding.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormalizedOperators};
use crate::numerics::{Activation, GatedEdges, Matrix, SparseRowMatrix, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "GCN")]
    Gcn,
    #[serde(rename = "GCNII")]
    Gcnii,
    #[serde(rename = "Lying-GCN")]
    LyingGcn,
    #[serde(rename = "Lying-GCNII")]
    LyingGcnii,
    #[serde(rename = "MLP")]
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Gcn,
        ModelKind::Gcnii,
        ModelKind::LyingGcn,
        ModelKind::LyingGcnii,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "GCN",
            ModelKind::Gcnii => "GCNII",
            ModelKind::LyingGcn => "Lying-GCN",
            ModelKind::LyingGcnii => "Lying-GCNII",
            ModelKind::Mlp => "MLP",
        }
    }

    pub fn is_lying(self) -> bool {
        matches!(self, ModelKind::LyingGcn | ModelKind::LyingGcnii)
    }

    pub fn is_gcnii(self) -> bool {
        matches!(self, ModelKind::Gcnii | ModelKind::LyingGcnii)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "gcnii" | "gcn2" => Ok(ModelKind::Gcnii),
            "lyinggcn" => Ok(ModelKind::LyingGcn),
            "lyinggcnii" | "lyinggcn2" => Ok(ModelKind::LyingGcnii),
            "mlp" => Ok(ModelKind::Mlp),
            _ => Err(Error::Config(format!("unknown model kind '{s}'"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub depth: usize,
    pub hidden: usize,
    pub activation: Activation,
    #[serde(default)]
    pub p_input: f64,
    #[serde(default)]
    pub p_layer: f64,
    /// GCNII restart weight.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// GCNII identity-map strength.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn new(kind: ModelKind, depth: usize, hidden: usize, activation: Activation) -> Self {
        Self {
            kind,
            depth,
            hidden,
            activation,
            p_input: 0.0,
            p_layer: 0.0,
            alpha: default_alpha(),
            lambda: default_lambda(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        for (name, p) in [("p_input", self.p_input), ("p_layer", self.p_layer)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if self.kind.is_gcnii() {
            if !(self.alpha > 0.0 && self.alpha < 1.0) {
                return Err(Error::Config(format!("GCNII alpha = {} outside (0, 1)", self.alpha)));
            }
            if self.lambda <= 0.0 {
                return Err(Error::Config(format!("GCNII lambda = {} must be positive", self.lambda)));
            }
        }
        Ok(())
    }
}

/// Identity-map strength at layer `ℓ ≥ 1`: `β = ln(λ/ℓ + 1)`.
pub fn gcnii_beta(lambda: f64, layer: usize) -> f64 {
    (lambda / layer as f64 + 1.0).ln()
}

/// GCNII mixing parameters for one layer.
#[derive(Clone, Copy, Debug)]
pub struct GcniiParams {
    pub alpha: f64,
    pub lambda: f64,
    pub layer: usize,
}

impl GcniiParams {
    pub fn beta(&self) -> f64 {
        gcnii_beta(self.lambda, self.layer)
    }
}

/// Trainable weights of one propagation layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w: Matrix,
    /// Opinion-weight map, present for lying kinds.
    pub v: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub input: Matrix,
    pub layers: Vec<LayerParams>,
    pub classifier: Matrix,
}

impl ModelParams {
    pub fn input_width(&self) -> usize {
        self.input.rows()
    }

    pub fn classes(&self) -> usize {
        self.classifier.cols()
    }

    /// All weight matrices in a fixed order: input, per layer `W` then `V`,
    /// classifier.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.input];
        for layer in &self.layers {
            out.push(&layer.w);
            if let Some(v) = &layer.v {
                out.push(v);
            }
        }
        out.push(&self.classifier);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.input];
        for layer in &mut self.layers {
            out.push(&mut layer.w);
            if let Some(v) = &mut layer.v {
                out.push(v);
            }
        }
        out.push(&mut self.classifier);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound))
}

/// Input layer `f → d`, `depth` propagation layers, linear classifier `d → C`.
pub fn assemble_model<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    input_width: usize,
    classes: usize,
    rng: &mut R,
) -> Result<ModelParams> {
    cfg.validate()?;
    if input_width == 0 || classes == 0 {
        return Err(Error::Config("input width and class count must be positive".into()));
    }
    let d = cfg.hidden;
    let input = glorot(input_width, d, rng);
    let layers = (0..cfg.depth)
        .map(|_| {
            let w = glorot(d, d, rng);
            let v = cfg.kind.is_lying().then(|| glorot(2 * d, d, rng));
            LayerParams { w, v }
        })
        .collect();
    let classifier = glorot(d, classes, rng);
    Ok(ModelParams {
        config: cfg.clone(),
        input,
        layers,
        classifier,
    })
}

/// Graph-derived constants shared by every forward pass on one graph.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub ops: NormalizedOperators,
    /// `(sender, receiver)` for every directed edge.
    pub directed: Vec<(usize, usize)>,
    s_tilde: Arc<SparseRowMatrix>,
    self_diag: Arc<SparseRowMatrix>,
    gather_src: Arc<SparseRowMatrix>,
    gather_dst: Arc<SparseRowMatrix>,
    scatter: Arc<SparseRowMatrix>,
    gated: Arc<GatedEdges>,
}

impl Propagation {
    pub fn new(g: &Graph) -> Self {
        let ops = normalize_adjacency(g);
        let n = g.n_nodes();
        let directed = g.directed_edges();
        let m = directed.len();

        let self_diag = SparseRowMatrix::from_triplets(n, n, (0..n).map(|u| (u, u, ops.self_weight(u))))
            .expect("diagonal in range");
        let gather_src = SparseRowMatrix::from_triplets(m, n, directed.iter().enumerate().map(|(e, &(s, _))| (e, s, 1.0)))
            .expect("edge endpoints in range");
        let gather_dst = SparseRowMatrix::from_triplets(m, n, directed.iter().enumerate().map(|(e, &(_, d))| (e, d, 1.0)))
            .expect("edge endpoints in range");
        let scatter = SparseRowMatrix::from_triplets(
            n,
            m,
            directed
                .iter()
                .enumerate()
                .map(|(e, &(s, d))| (d, e, ops.edge_weight(d, s))),
        )
        .expect("edge endpoints in range");

        let gated = GatedEdges::new(n, directed.iter().map(|&(s, d)| (s, d, ops.edge_weight(d, s))).collect())
            .expect("edge endpoints in range");

        Self {
            s_tilde: Arc::new(ops.s_tilde.clone()),
            ops,
            directed,
            self_diag: Arc::new(self_diag),
            gather_src: Arc::new(gather_src),
            gather_dst: Arc::new(gather_dst),
            scatter: Arc::new(scatter),
            gated: Arc::new(gated),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.s_tilde.n_rows()
    }

    pub fn n_directed(&self) -> usize {
        self.directed.len()
    }
}

/// How the lying weights are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LyingMode {
    #[default]
    Learned,
    /// Every opinion weight fixed to exactly 1; reduces the lying layers to
    /// their plain counterparts.
    ClampedToOne,
}

fn check_rows(op: &'static str, tape: &Tape, h: Tensor, n: usize) -> Result<()> {
    let shape = tape.shape(h);
    if shape.0 != n {
        return Err(Error::dim(op, shape, (n, shape.1)));
    }
    Ok(())
}

/// `σ(S̃ H W)`.
pub fn gcn_layer(tape: &mut Tape, h: Tensor, prop: &Propagation, w: Tensor, act: Activation) -> Result<Tensor> {
    check_rows("gcn_layer", tape, h, prop.n_nodes())?;
    let propagated = tape.spmm(&prop.s_tilde, h)?;
    let mixed = tape.matmul(propagated, w)?;
    Ok(tape.activation(act, mixed))
}

/// `(H V_send, H V_recv)`, the per-node halves of `[h_v ∥ h_u] V`.
fn opinion_projections(tape: &mut Tape, h: Tensor, prop: &Propagation, v: Tensor) -> Result<(Tensor, Tensor)> {
    check_rows("lying_weights", tape, h, prop.n_nodes())?;
    let d = tape.shape(h).1;
    let v_shape = tape.shape(v);
    if v_shape != (2 * d, d) {
        return Err(Error::dim("lying_weights", v_shape, (2 * d, d)));
    }
    let v_send = tape.slice_rows(v, 0, d)?;
    let v_recv = tape.slice_rows(v, d, d)?;
    Ok((tape.matmul(h, v_send)?, tape.matmul(h, v_recv)?))
}

/// `z_{v→u} = tanh([h_v ∥ h_u] V)` for every directed edge, one row each in
/// the order of [`Propagation::directed`].
pub fn lying_weights(tape: &mut Tape, h: Tensor, prop: &Propagation, v: Tensor) -> Result<Tensor> {
    let (send, recv) = opinion_projections(tape, h, prop, v)?;
    let send_e = tape.spmm(&prop.gather_src, send)?;
    let recv_e = tape.spmm(&prop.gather_dst, recv)?;
    let pre = tape.add(send_e, recv_e)?;
    Ok(tape.tanh(pre))
}

/// `m_{v→u} = z_{v→u} ⊙ h_v`.
pub fn lying_message(tape: &mut Tape, h: Tensor, prop: &Propagation, z: Tensor) -> Result<Tensor> {
    let senders = tape.spmm(&prop.gather_src, h)?;
    tape.mul(z, senders)
}

/// `S̃ᵤᵤ h_u + Σ_{v ∈ N(u)} S̃ᵤᵥ m_{v→u}` for every node.
pub fn lying_aggregate(
    tape: &mut Tape,
    h: Tensor,
    prop: &Propagation,
    v: Tensor,
    mode: LyingMode,
) -> Result<Tensor> {
    let received = match mode {
        LyingMode::Learned => {
            let (send, recv) = opinion_projections(tape, h, prop, v)?;
            tape.gated_scatter(&prop.gated, h, send, recv)?
        }
        LyingMode::ClampedToOne => {
            check_rows("lying_aggregate", tape, h, prop.n_nodes())?;
            let z = tape.constant(Matrix::filled(prop.n_directed(), tape.shape(h).1, 1.0));
            let messages = lying_message(tape, h, prop, z)?;
            tape.spmm(&prop.scatter, messages)?
        }
    };
    let own = tape.spmm(&prop.self_diag, h)?;
    tape.add(own, received)
}

/// `σ(W(S̃ᵤᵤ h_u + Σ S̃ᵤᵥ m_{v→u}))`.
pub fn lying_gcn_layer(
    tape: &mut Tape,
    h: Tensor,
    prop: &Propagation,
    v: Tensor,
    w: Tensor,
    act: Activation,
    mode: LyingMode,
) -> Result<Tensor> {
    let agg = lying_aggregate(tape, h, prop, v, mode)?;
    let mixed = tape.matmul(agg, w)?;
    Ok(tape.activation(act, mixed))
}

/// `σ(((1−α)·P + α·H₀)((1−β)I + βW))` given the propagated term `P`.
fn gcnii_mix(tape: &mut Tape, propagated: Tensor, h0: Tensor, w: Tensor, g2: GcniiParams, act: Activation) -> Result<Tensor> {
    let shape = tape.shape(propagated);
    let h0_shape = tape.shape(h0);
    if shape != h0_shape {
        return Err(Error::dim("gcnii_layer", shape, h0_shape));
    }
    let beta = g2.beta();
    let keep = tape.scale(propagated, 1.0 - g2.alpha);
    let restart = tape.scale(h0, g2.alpha);
    let support = tape.add(keep, restart)?;
    let identity_part = tape.scale(support, 1.0 - beta);
    let mapped = tape.matmul(support, w)?;
    let weight_part = tape.scale(mapped, beta);
    let out = tape.add(identity_part, weight_part)?;
    Ok(tape.activation(act, out))
}

pub fn gcnii_layer(
    tape: &mut Tape,
    h: Tensor,
    h0: Tensor,
    prop: &Propagation,
    w: Tensor,
    g2: GcniiParams,
    act: Activation,
) -> Result<Tensor> {
    check_rows("gcnii_layer", tape, h, prop.n_nodes())?;
    let propagated = tape.spmm(&prop.s_tilde, h)?;
    gcnii_mix(tape, propagated, h0, w, g2, act)
}

/// GCNII with the propagation term replaced by the lying aggregate.
#[allow(clippy::too_many_arguments)]
pub fn lying_gcnii_layer(
    tape: &mut Tape,
    h: Tensor,
    h0: Tensor,
    prop: &Propagation,
    v: Tensor,
    w: Tensor,
    g2: GcniiParams,
    act: Activation,
    mode: LyingMode,
) -> Result<Tensor> {
    let agg = lying_aggregate(tape, h, prop, v, mode)?;
    gcnii_mix(tape, agg, h0, w, g2, act)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    pub training: bool,
    pub lying: LyingMode,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train() -> Self {
        Self {
            training: true,
            ..Self::default()
        }
    }
}

pub struct ForwardOutput {
    pub logits: Tensor,
    /// Handles for [`ModelParams::tensors`], same order.
    pub params: Vec<Tensor>,
    /// `H⁰` (input layer output) followed by the output of every layer.
    pub hidden: Vec<Tensor>,
}

/// Full model forward pass on a fresh portion of `tape`.
pub fn forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    model: &ModelParams,
    prop: &Propagation,
    features: &Arc<Matrix>,
    opts: ForwardOptions,
    rng: &mut R,
) -> Result<ForwardOutput> {
    let params: Vec<Tensor> = model.tensors().into_iter().map(|m| tape.param(m.clone())).collect();
    forward_with_params(tape, model, &params, prop, features, opts, rng)
}

/// [`forward`] with weights already on the tape, in [`ModelParams::tensors`]
/// order. Only the configuration and layout of `model` are read.
pub fn forward_with_params<R: Rng + ?Sized>(
    tape: &mut Tape,
    model: &ModelParams,
    params: &[Tensor],
    prop: &Propagation,
    features: &Arc<Matrix>,
    opts: ForwardOptions,
    rng: &mut R,
) -> Result<ForwardOutput> {
    if features.cols() != model.input_width() {
        return Err(Error::dim("forward", features.shape(), (features.rows(), model.input_width())));
    }
    if features.rows() != prop.n_nodes() {
        return Err(Error::dim("forward", features.shape(), (prop.n_nodes(), features.cols())));
    }
    let cfg = &model.config;
    let expected = model.tensors().len();
    if params.len() != expected {
        return Err(Error::Contract(format!("expected {expected} parameter handles, got {}", params.len())));
    }
    for (&t, m) in params.iter().zip(model.tensors()) {
        if tape.shape(t) != m.shape() {
            return Err(Error::dim("forward", tape.shape(t), m.shape()));
        }
    }
    let mut handles = params.iter().copied();
    let mut next = || handles.next().expect("parameter handles match layout");

    let x = tape.constant_shared(Arc::clone(features));
    let x = tape.dropout(x, cfg.p_input, opts.training, rng)?;
    let w_in = next();
    let h0 = tape.matmul(x, w_in)?;

    let mut hidden = vec![h0];
    let mut h = h0;
    for (idx, layer) in model.layers.iter().enumerate() {
        let w = next();
        let v = layer.v.as_ref().map(|_| next());
        let input = tape.dropout(h, cfg.p_layer, opts.training, rng)?;
        let g2 = GcniiParams {
            alpha: cfg.alpha,
            lambda: cfg.lambda,
            layer: idx + 1,
        };
        h = match cfg.kind {
            ModelKind::Gcn => gcn_layer(tape, input, prop, w, cfg.activation)?,
            ModelKind::Gcnii => gcnii_layer(tape, input, h0, prop, w, g2, cfg.activation)?,
            ModelKind::LyingGcn => {
                let v = v.ok_or_else(|| Error::Contract("lying layer without V".into()))?;
                lying_gcn_layer(tape, input, prop, v, w, cfg.activation, opts.lying)?
            }
            ModelKind::LyingGcnii => {
                let v = v.ok_or_else(|| Error::Contract("lying layer without V".into()))?;
                lying_gcnii_layer(tape, input, h0, prop, v, w, g2, cfg.activation, opts.lying)?
            }
            ModelKind::Mlp => {
                let mixed = tape.matmul(input, w)?;
                tape.activation(cfg.activation, mixed)
            }
        };
        hidden.push(h);
    }

    let w_out = next();
    let logits = tape.matmul(h, w_out)?;
    Ok(ForwardOutput {
        logits,
        params: params.to_vec(),
        hidden,
    })
}

/// Eval-mode logits as a plain matrix.
pub fn predict(model: &ModelParams, prop: &Propagation, features: &Arc<Matrix>) -> Result<Matrix> {
    let mut tape = Tape::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let out = forward(&mut tape, model, prop, features, ForwardOptions::eval(), &mut rng)?;
    Ok(tape.value(out.logits).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn run<F: FnOnce(&mut Tape) -> Result<Tensor>>(f: F) -> Matrix {
        let mut tape = Tape::new();
        let out = f(&mut tape).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn gcn_single_node_identity() {
        let prop = Propagation::new(&Graph::new(1, &[]).unwrap());
        let out = run(|t| {
            let h = t.constant(Matrix::from_rows(&[[0.3, -2.0]]));
            let w = t.constant(Matrix::identity(2));
            gcn_layer(t, h, &prop, w, Activation::Identity)
        });
        assert_eq!(out, Matrix::from_rows(&[[0.3, -2.0]]));
    }

    #[test]
    fn gcn_k2_cancels_opposites() {
        let prop = Propagation::new(&Graph::complete(2));
        let out = run(|t| {
            let h = t.constant(Matrix::column(&[1.0, -1.0]));
            let w = t.constant(Matrix::filled(1, 1, 1.0));
            gcn_layer(t, h, &prop, w, Activation::Identity)
        });
        assert!(out.max_abs_diff(&Matrix::column(&[0.0, 0.0])) < 1e-15);
    }

    #[test]
    fn zero_v_gives_zero_weights_and_self_term_only() {
        let g = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let prop = Propagation::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h_val = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let w_val = Matrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));

        let mut tape = Tape::new();
        let h = tape.constant(h_val.clone());
        let v = tape.constant(Matrix::zeros(6, 3));
        let z = lying_weights(&mut tape, h, &prop, v).unwrap();
        assert_eq!(tape.value(z), &Matrix::zeros(prop.n_directed(), 3));

        let w = tape.constant(w_val.clone());
        let out = lying_gcn_layer(&mut tape, h, &prop, v, w, Activation::Tanh, LyingMode::Learned).unwrap();
        let mut scaled = h_val.clone();
        for u in 0..4 {
            let s = prop.ops.self_weight(u);
            scaled.row_mut(u).iter_mut().for_each(|x| *x *= s);
        }
        let expected = scaled.matmul(&w_val).unwrap().map(f64::tanh);
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn scalar_lying_weight() {
        let prop = Propagation::new(&Graph::complete(2));
        let z = run(|t| {
            let h = t.constant(Matrix::column(&[10.0, 0.0]));
            let v = t.constant(Matrix::column(&[1.0, 0.0]));
            lying_weights(t, h, &prop, v)
        });
        // directed edges sorted by receiver: (1 -> 0), (0 -> 1)
        assert_eq!(prop.directed, vec![(1, 0), (0, 1)]);
        assert!((z[(1, 0)] - 10f64.tanh()).abs() < 1e-15);
        assert!(z[(1, 0)] > 0.9999999);
        assert_eq!(z[(0, 0)], 0.0);
    }

    #[test]
    fn lying_weights_are_asymmetric() {
        let prop = Propagation::new(&Graph::complete(2));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = run(|t| {
            let h = t.constant(Matrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0)));
            let v = t.constant(Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0)));
            lying_weights(t, h, &prop, v)
        });
        assert!(z.row(0).iter().zip(z.row(1)).any(|(a, b)| (a - b).abs() > 1e-6));
        assert!(z.as_slice().iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn lying_weights_arity_mismatch() {
        let prop = Propagation::new(&Graph::complete(2));
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::zeros(2, 3));
        let v = tape.constant(Matrix::zeros(3, 3));
        assert!(matches!(lying_weights(&mut tape, h, &prop, v), Err(Error::Dimension { .. })));
    }

    #[test]
    fn message_examples() {
        let prop = Propagation::new(&Graph::complete(2));
        let m = run(|t| {
            let h = t.constant(Matrix::from_rows(&[[2.0, -1.0], [0.0, 0.0]]));
            let z = t.constant(Matrix::from_rows(&[[1.0, 1.0], [0.5, -1.0]]));
            lying_message(t, h, &prop, z)
        });
        // edge 1 is 0 -> 1, carrying h_0 = (2, -1)
        assert_eq!(m.row(1), &[1.0, 1.0]);
        assert_eq!(m.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn gcnii_beta_schedule() {
        assert!((gcnii_beta(1.0, 1) - 2f64.ln()).abs() < 1e-15);
        assert!((gcnii_beta(1.0, 10) - 1.1f64.ln()).abs() < 1e-15);
        assert!((gcnii_beta(1.0, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((gcnii_beta(1.0, 10) - 0.0953).abs() < 1e-4);
    }

    #[test]
    fn gcnii_full_restart_ignores_h() {
        let prop = Propagation::new(&Graph::chain(3));
        let h0_val = Matrix::from_rows(&[[1.0, 0.0], [0.5, -0.5], [0.0, 2.0]]);
        let w_val = Matrix::from_rows(&[[0.2, 0.1], [-0.3, 0.4]]);
        let g2 = GcniiParams { alpha: 1.0, lambda: 1.0, layer: 2 };
        let eval = |h_val: Matrix| {
            run(|t| {
                let h = t.constant(h_val);
                let h0 = t.constant(h0_val.clone());
                let w = t.constant(w_val.clone());
                gcnii_layer(t, h, h0, &prop, w, g2, Activation::Identity)
            })
        };
        let a = eval(Matrix::zeros(3, 2));
        let b = eval(Matrix::filled(3, 2, 7.0));
        assert!(a.max_abs_diff(&b) < 1e-14);
        let beta = g2.beta();
        let expected = h0_val
            .matmul(&Matrix::identity(2).scale(1.0 - beta).add(&w_val.scale(beta)).unwrap())
            .unwrap();
        assert!(a.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn assembled_gcn_parameter_count() {
        let cfg = ModelConfig::new(ModelKind::Gcn, 2, 16, Activation::Relu);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = assemble_model(&cfg, 1433, 7, &mut rng).unwrap();
        assert_eq!(model.parameter_count(), 23_552);

        let lying = ModelConfig::new(ModelKind::LyingGcn, 2, 16, Activation::Relu);
        let lying_model = assemble_model(&lying, 1433, 7, &mut rng).unwrap();
        assert_eq!(lying_model.parameter_count(), 23_552 + 2 * 2 * 16 * 16);
    }

    #[test]
    fn assembly_is_seed_deterministic_and_validated() {
        let cfg = ModelConfig::new(ModelKind::LyingGcnii, 3, 8, Activation::Relu);
        let a = assemble_model(&cfg, 5, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = assemble_model(&cfg, 5, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);

        let mut bad = cfg.clone();
        bad.depth = 0;
        assert!(matches!(assemble_model(&bad, 5, 3, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Config(_))));
        assert!("GAT".parse::<ModelKind>().is_err());
        assert_eq!("lying-gcnii".parse::<ModelKind>().unwrap(), ModelKind::LyingGcnii);
    }
}

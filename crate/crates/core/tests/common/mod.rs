#![allow(dead_code)]

use std::sync::Arc;

use ldl_core::graph::Graph;
use ldl_core::layers::{assemble_model, forward_with_params, ForwardOptions, ModelConfig, ModelKind, Propagation};
use ldl_core::numerics::{check_gradients, Activation, GradCheckReport, Matrix, Tape, Tensor};
use ldl_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// G(n, p) with at least a spanning path, so every node has a neighbor.
pub fn random_connected_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edge_list(n, &edges).expect("endpoints in range")
}

/// G(n, p) that may contain isolated nodes.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges).expect("simple graph")
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// `sum(out ⊙ R)` with a fixed random `R`, so every output entry carries a
/// distinct weight in the scalar under test.
pub fn project(tape: &mut Tape, out: Tensor, seed: u64) -> Result<Tensor> {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = tape.constant(random_matrix(r, c, 1.0, &mut rng));
    let prod = tape.mul(out, weights)?;
    Ok(tape.sum(prod))
}

/// Finite-difference check of the full model `kind` at depth 2 on a random
/// 10-node graph, differentiating the masked cross-entropy with respect to
/// every weight matrix.
pub fn full_model_gradient_check(kind: ModelKind, activation: Activation, training: bool, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 10;
    let g = random_connected_graph(n, 0.3, &mut rng);
    let prop = Propagation::new(&g);
    let features = Arc::new(random_matrix(n, 6, 1.0, &mut rng));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let mask: Vec<usize> = (0..n).filter(|i| i % 3 != 2).collect();
    let mut cfg = ModelConfig::new(kind, 2, 4, activation);
    if training {
        cfg.p_input = 0.3;
        cfg.p_layer = 0.2;
    }
    let model = assemble_model(&cfg, 6, 3, &mut rng).expect("valid config");
    let inputs: Vec<_> = model.tensors().into_iter().cloned().collect();
    let opts = ForwardOptions { training, ..ForwardOptions::default() };

    check_gradients(&inputs, 1e-5, |tape, params| {
        // Same dropout masks on every evaluation.
        let mut drop_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0);
        let out = forward_with_params(tape, &model, params, &prop, &features, opts, &mut drop_rng)?;
        tape.masked_cross_entropy(out.logits, &labels, &mask)
    })
    .expect("gradient check runs")
}

/// Largest elementwise gap between a lying model run with every opinion
/// weight clamped to 1 and its plain counterpart sharing the same `W`s.
pub fn reduction_gap(lying_kind: ModelKind, seed: u64) -> f64 {
    use ldl_core::layers::{forward, LyingMode, ModelParams};

    let plain_kind = match lying_kind {
        ModelKind::LyingGcn => ModelKind::Gcn,
        ModelKind::LyingGcnii => ModelKind::Gcnii,
        other => panic!("{other} has no plain counterpart"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..30);
    let g = random_graph(n, rng.random_range(0.05..0.5), &mut rng);
    let prop = Propagation::new(&g);
    let f = rng.random_range(2..8);
    let features = Arc::new(random_matrix(n, f, 1.0, &mut rng));
    let act = [Activation::Tanh, Activation::Relu, Activation::Elu][rng.random_range(0..3)];
    let mut cfg = ModelConfig::new(lying_kind, rng.random_range(1..5), rng.random_range(2..8), act);
    cfg.alpha = rng.random_range(0.05..0.5);
    cfg.lambda = rng.random_range(0.5..1.5);
    let lying = assemble_model(&cfg, f, 3, &mut rng).expect("valid config");

    let plain = ModelParams {
        config: ModelConfig { kind: plain_kind, ..cfg },
        input: lying.input.clone(),
        layers: lying
            .layers
            .iter()
            .map(|l| ldl_core::layers::LayerParams { w: l.w.clone(), v: None })
            .collect(),
        classifier: lying.classifier.clone(),
    };

    let run = |model: &ModelParams, lying_mode: LyingMode| {
        let mut tape = Tape::new();
        let opts = ForwardOptions { training: false, lying: lying_mode };
        let out = forward(&mut tape, model, &prop, &features, opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut all = vec![tape.value(out.logits).clone()];
        all.extend(out.hidden.iter().map(|&h| tape.value(h).clone()));
        all
    };
    let a = run(&lying, LyingMode::ClampedToOne);
    let b = run(&plain, LyingMode::Learned);
    a.iter().zip(&b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

/// Largest relative error of a finite-difference check for every
/// differentiable operation, every layer, and every full model.
pub fn gradient_suite() -> Vec<(String, f64)> {
    use ldl_core::layers::{
        gcn_layer, gcnii_layer, lying_aggregate, lying_gcn_layer, lying_gcnii_layer, lying_message, lying_weights,
        GcniiParams, LyingMode,
    };
    use ldl_core::numerics::SparseRowMatrix;

    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut out = Vec::new();
    let mut record = |name: &str, report: GradCheckReport| out.push((name.to_string(), report.max_rel_err));

    let a = random_matrix(4, 3, 1.0, &mut rng);
    let b = random_matrix(3, 5, 1.0, &mut rng);
    let c = random_matrix(4, 3, 1.0, &mut rng);
    record(
        "matmul",
        check_gradients(&[a.clone(), b], STEP, |t, h| {
            let p = t.matmul(h[0], h[1])?;
            project(t, p, 1)
        })
        .unwrap(),
    );
    let triplets: Vec<_> =
        (0..12).map(|_| (rng.random_range(0..5), rng.random_range(0..4), rng.random_range(-1.0..1.0))).collect();
    let s = Arc::new(SparseRowMatrix::from_triplets(5, 4, triplets).unwrap());
    record(
        "spmm",
        check_gradients(&[random_matrix(4, 3, 1.0, &mut rng)], STEP, |t, h| {
            let p = t.spmm(&s, h[0])?;
            project(t, p, 2)
        })
        .unwrap(),
    );
    let away_from_zero = Matrix::from_fn(6, 6, |i, j| {
        let mag = 0.05 + ((i * 6 + j) as f64 * 0.37).fract() * 1.9;
        if (i + j) % 2 == 0 {
            mag
        } else {
            -mag
        }
    });
    for kind in [Activation::Tanh, Activation::Relu, Activation::Elu, Activation::Identity] {
        record(
            &format!("activation {kind}"),
            check_gradients(std::slice::from_ref(&away_from_zero), STEP, |t, h| {
                let y = t.activation(kind, h[0]);
                project(t, y, 3)
            })
            .unwrap(),
        );
    }
    record(
        "mul",
        check_gradients(&[a.clone(), c.clone()], STEP, |t, h| {
            let p = t.mul(h[0], h[1])?;
            project(t, p, 4)
        })
        .unwrap(),
    );
    record(
        "add and scale",
        check_gradients(&[a.clone(), c], STEP, |t, h| {
            let sc = t.scale(h[1], -0.7);
            let p = t.add(h[0], sc)?;
            project(t, p, 5)
        })
        .unwrap(),
    );
    record(
        "slice rows",
        check_gradients(std::slice::from_ref(&a), STEP, |t, h| {
            let top = t.slice_rows(h[0], 1, 2)?;
            let sq = t.mul(top, top)?;
            project(t, sq, 6)
        })
        .unwrap(),
    );
    record(
        "dropout",
        check_gradients(&[a], STEP, |t, h| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
            let y = t.dropout(h[0], 0.4, true, &mut mask_rng)?;
            project(t, y, 7)
        })
        .unwrap(),
    );
    let logits = random_matrix(7, 4, 2.0, &mut rng);
    let labels: Vec<usize> = (0..7).map(|_| rng.random_range(0..4)).collect();
    record(
        "masked cross-entropy",
        check_gradients(&[logits], STEP, |t, h| t.masked_cross_entropy(h[0], &labels, &[0, 2, 3, 6])).unwrap(),
    );

    let g = random_connected_graph(8, 0.3, &mut rng);
    let prop = Propagation::new(&g);
    let d = 3;
    let h = random_matrix(8, d, 1.0, &mut rng);
    let h0 = random_matrix(8, d, 1.0, &mut rng);
    let w = random_matrix(d, d, 1.0, &mut rng);
    let v = random_matrix(2 * d, d, 1.0, &mut rng);
    let g2 = GcniiParams { alpha: 0.1, lambda: 1.0, layer: 2 };
    record(
        "lying weights",
        check_gradients(&[h.clone(), v.clone()], STEP, |t, p| {
            let z = lying_weights(t, p[0], &prop, p[1])?;
            project(t, z, 8)
        })
        .unwrap(),
    );
    record(
        "lying message",
        check_gradients(&[h.clone(), v.clone()], STEP, |t, p| {
            let z = lying_weights(t, p[0], &prop, p[1])?;
            let m = lying_message(t, p[0], &prop, z)?;
            project(t, m, 9)
        })
        .unwrap(),
    );
    record(
        "lying aggregate",
        check_gradients(&[h.clone(), v.clone()], STEP, |t, p| {
            let agg = lying_aggregate(t, p[0], &prop, p[1], LyingMode::Learned)?;
            project(t, agg, 10)
        })
        .unwrap(),
    );
    let act = Activation::Tanh;
    record(
        "GCN layer",
        check_gradients(&[h.clone(), w.clone()], STEP, |t, p| {
            let o = gcn_layer(t, p[0], &prop, p[1], act)?;
            project(t, o, 11)
        })
        .unwrap(),
    );
    record(
        "GCNII layer",
        check_gradients(&[h.clone(), h0.clone(), w.clone()], STEP, |t, p| {
            let o = gcnii_layer(t, p[0], p[1], &prop, p[2], g2, act)?;
            project(t, o, 12)
        })
        .unwrap(),
    );
    record(
        "Lying-GCN layer",
        check_gradients(&[h.clone(), v.clone(), w.clone()], STEP, |t, p| {
            let o = lying_gcn_layer(t, p[0], &prop, p[1], p[2], act, LyingMode::Learned)?;
            project(t, o, 13)
        })
        .unwrap(),
    );
    record(
        "Lying-GCNII layer",
        check_gradients(&[h, h0, v, w], STEP, |t, p| {
            let o = lying_gcnii_layer(t, p[0], p[1], &prop, p[2], p[3], g2, act, LyingMode::Learned)?;
            project(t, o, 14)
        })
        .unwrap(),
    );

    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        record(&format!("{kind} model"), full_model_gradient_check(kind, Activation::Tanh, false, 300 + i as u64));
        record(
            &format!("{kind} model with dropout"),
            full_model_gradient_check(kind, Activation::Elu, true, 400 + i as u64),
        );
    }
    out
}

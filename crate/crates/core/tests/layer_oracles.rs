//! Independent oracles for the propagation layers and the assembled models.

mod common;

use std::sync::Arc;

use common::{random_connected_graph, random_graph, random_matrix, random_permutation, reduction_gap};
use ldl_core::graph::{normalize_adjacency, Graph};
use ldl_core::layers::{
    assemble_model, forward, gcn_layer, gcnii_layer, gcnii_beta, lying_gcn_layer, lying_gcnii_layer, lying_weights,
    predict, ForwardOptions, GcniiParams, LyingMode, ModelConfig, ModelKind, Propagation,
};
use ldl_core::numerics::{Activation, Matrix, Tape};
use ldl_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn clamped_lying_models_reduce_to_plain_models() {
    for seed in 0..20 {
        for kind in [ModelKind::LyingGcn, ModelKind::LyingGcnii] {
            let gap = reduction_gap(kind, seed);
            assert!(gap <= 1e-12, "{kind} seed {seed}: gap {gap:e}");
        }
    }
}

#[test]
fn gcn_layer_matches_node_wise_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = rng.random_range(2..25);
        let g = random_graph(n, rng.random_range(0.05..0.6), &mut rng);
        let h = random_matrix(n, 3, 1.0, &mut rng);
        let w = random_matrix(3, 2, 1.0, &mut rng);
        let prop = Propagation::new(&g);

        let mut tape = Tape::new();
        let ht = tape.constant(h.clone());
        let wt = tape.constant(w.clone());
        let out = gcn_layer(&mut tape, ht, &prop, wt, Activation::Tanh).unwrap();
        let out = tape.value(out);

        let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64 + 1.0).collect();
        let nbrs = g.neighbors();
        for u in 0..n {
            let mut acc = [0.0; 3];
            for v in nbrs[u].iter().copied().chain([u]) {
                let c = 1.0 / (deg[u] * deg[v]).sqrt();
                for k in 0..3 {
                    acc[k] += c * h[(v, k)];
                }
            }
            for j in 0..2 {
                let pre: f64 = (0..3).map(|k| acc[k] * w[(k, j)]).sum();
                assert!((out[(u, j)] - pre.tanh()).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn scalar_lying_layer_matches_matrix_form() {
    // With one channel, W = 1 and identity activation, the layer is
    // h' = (I − L̃ ⊙ (Z + I)) h with Z[u][v] = z_{v→u}.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let n = rng.random_range(2..20);
        let g = random_graph(n, rng.random_range(0.1..0.6), &mut rng);
        let prop = Propagation::new(&g);
        let h = random_matrix(n, 1, 2.0, &mut rng);
        let v = random_matrix(2, 1, 2.0, &mut rng);

        let mut tape = Tape::new();
        let ht = tape.constant(h.clone());
        let vt = tape.constant(v.clone());
        let wt = tape.constant(Matrix::filled(1, 1, 1.0));
        let z = lying_weights(&mut tape, ht, &prop, vt).unwrap();
        let out = lying_gcn_layer(&mut tape, ht, &prop, vt, wt, Activation::Identity, LyingMode::Learned).unwrap();

        let mut zmat = Matrix::zeros(n, n);
        for (e, &(src, dst)) in prop.directed.iter().enumerate() {
            zmat[(dst, src)] = tape.value(z)[(e, 0)];
        }
        for &(u, w) in g.edges() {
            let expect_uw = (v[(0, 0)] * h[(w, 0)] + v[(1, 0)] * h[(u, 0)]).tanh();
            assert!((zmat[(u, w)] - expect_uw).abs() < 1e-15);
        }
        let lap = normalize_adjacency(&g).laplacian.to_dense();
        let e_mat = lap.hadamard(&zmat.add(&Matrix::identity(n)).unwrap()).unwrap();
        let expected = Matrix::identity(n).sub(&e_mat).unwrap().matmul(&h).unwrap();
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-13);
    }
}

#[test]
fn gcnii_zero_restart_and_zero_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = random_connected_graph(9, 0.3, &mut rng);
    let prop = Propagation::new(&g);
    let h = random_matrix(9, 4, 1.0, &mut rng);
    let h0 = random_matrix(9, 4, 1.0, &mut rng);
    let g2 = GcniiParams {
        alpha: 0.0,
        lambda: 1.0,
        layer: 3,
    };
    let beta = g2.beta();

    let mut tape = Tape::new();
    let ht = tape.constant(h.clone());
    let h0t = tape.constant(h0);
    let wt = tape.constant(Matrix::zeros(4, 4));
    let out = gcnii_layer(&mut tape, ht, h0t, &prop, wt, g2, Activation::Tanh).unwrap();
    let expected = prop.ops.s_tilde.mul_dense(&h).unwrap().scale(1.0 - beta).map(f64::tanh);
    assert!(tape.value(out).max_abs_diff(&expected) < 1e-14);

    // Lying-GCNII with V = 0 and α = 0 keeps only the self term.
    let w = random_matrix(4, 4, 1.0, &mut rng);
    let vt = tape.constant(Matrix::zeros(8, 4));
    let wt = tape.constant(w.clone());
    let out = lying_gcnii_layer(&mut tape, ht, h0t, &prop, vt, wt, g2, Activation::Tanh, LyingMode::Learned).unwrap();
    let mut diag_h = h.clone();
    for u in 0..9 {
        let s = prop.ops.self_weight(u);
        diag_h.row_mut(u).iter_mut().for_each(|x| *x *= s);
    }
    let mix = Matrix::identity(4).scale(1.0 - beta).add(&w.scale(beta)).unwrap();
    let expected = diag_h.matmul(&mix).unwrap().map(f64::tanh);
    assert!(tape.value(out).max_abs_diff(&expected) < 1e-14);
    assert!((gcnii_beta(1.0, 3) - beta).abs() == 0.0);
}

fn permuted_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(m.row(i));
    }
    out
}

#[test]
fn models_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for kind in ModelKind::ALL {
        for _ in 0..3 {
            let n = rng.random_range(4..20);
            let g = random_graph(n, 0.3, &mut rng);
            let x = random_matrix(n, 5, 1.0, &mut rng);
            let perm = random_permutation(n, &mut rng);
            let cfg = ModelConfig::new(kind, 3, 4, Activation::Relu);
            let model = assemble_model(&cfg, 5, 3, &mut rng).unwrap();

            let hidden = |g: &Graph, x: Matrix| {
                let prop = Propagation::new(g);
                let mut tape = Tape::new();
                let out = forward(&mut tape, &model, &prop, &Arc::new(x), ForwardOptions::eval(), &mut rng.clone()).unwrap();
                let mut all: Vec<Matrix> = out.hidden.iter().map(|&h| tape.value(h).clone()).collect();
                all.push(tape.value(out.logits).clone());
                all
            };
            let base = hidden(&g, x.clone());
            let moved = hidden(&g.permuted(&perm), permuted_rows(&x, &perm));
            for (a, b) in base.iter().zip(&moved) {
                assert!(permuted_rows(a, &perm).max_abs_diff(b) < 1e-12, "{kind}");
            }
        }
    }
}

#[test]
fn mlp_ignores_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = Arc::new(random_matrix(12, 4, 1.0, &mut rng));
    let cfg = ModelConfig::new(ModelKind::Mlp, 2, 6, Activation::Elu);
    let model = assemble_model(&cfg, 4, 3, &mut rng).unwrap();
    let a = predict(&model, &Propagation::new(&Graph::chain(12)), &x).unwrap();
    let b = predict(&model, &Propagation::new(&random_graph(12, 0.5, &mut rng)), &x).unwrap();
    assert_eq!(a, b);

    let gcn = assemble_model(&ModelConfig::new(ModelKind::Gcn, 2, 6, Activation::Elu), 4, 3, &mut rng).unwrap();
    let c = predict(&gcn, &Propagation::new(&Graph::chain(12)), &x).unwrap();
    let d = predict(&gcn, &Propagation::new(&Graph::complete(12)), &x).unwrap();
    assert!(c.max_abs_diff(&d) > 1e-6);
}

#[test]
fn eval_forward_is_deterministic_and_ignores_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let g = random_connected_graph(10, 0.3, &mut rng);
    let prop = Propagation::new(&g);
    let x = Arc::new(random_matrix(10, 4, 1.0, &mut rng));
    let mut cfg = ModelConfig::new(ModelKind::LyingGcnii, 2, 5, Activation::Relu);
    cfg.p_input = 0.6;
    cfg.p_layer = 0.5;
    let model = assemble_model(&cfg, 4, 2, &mut rng).unwrap();
    assert_eq!(predict(&model, &prop, &x).unwrap(), predict(&model, &prop, &x).unwrap());

    let logits = |training: bool, seed: u64| {
        let mut tape = Tape::new();
        let opts = ForwardOptions { training, ..Default::default() };
        let out = forward(&mut tape, &model, &prop, &x, opts, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        tape.value(out.logits).clone()
    };
    assert_eq!(logits(false, 1), logits(false, 2));
    assert_eq!(logits(true, 3), logits(true, 3));
    assert_ne!(logits(true, 3), logits(true, 4));
}

#[test]
fn width_mismatch_is_a_dimension_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let model = assemble_model(&ModelConfig::new(ModelKind::Gcn, 1, 3, Activation::Tanh), 4, 2, &mut rng).unwrap();
    let prop = Propagation::new(&Graph::chain(5));
    let wrong_width = Arc::new(Matrix::zeros(5, 3));
    assert!(matches!(predict(&model, &prop, &wrong_width), Err(Error::Dimension { .. })));
    let wrong_rows = Arc::new(Matrix::zeros(4, 4));
    assert!(matches!(predict(&model, &prop, &wrong_rows), Err(Error::Dimension { .. })));
}

#[test]
fn lying_weights_stay_strictly_inside_unit_interval() {
    // f64 tanh rounds to ±1 once |x| > ~19.06, so inputs stay moderate.
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..10 {
        let g = random_connected_graph(15, 0.2, &mut rng);
        let prop = Propagation::new(&g);
        let mut tape = Tape::new();
        let h = tape.constant(random_matrix(15, 4, 2.0, &mut rng));
        let v = tape.constant(random_matrix(8, 4, 1.0, &mut rng));
        let z = lying_weights(&mut tape, h, &prop, v).unwrap();
        assert_eq!(tape.shape(z), (2 * g.n_edges(), 4));
        assert!(tape.value(z).as_slice().iter().all(|x| x.abs() < 1.0));
    }
}

#[test]
fn fused_lying_aggregate_matches_unfused_composition() {
    use ldl_core::layers::{lying_aggregate, lying_message};
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..5 {
        let n = rng.random_range(4..15);
        let g = random_graph(n, 0.4, &mut rng);
        let prop = Propagation::new(&g);
        let d = rng.random_range(1..5);
        let mut tape = Tape::new();
        let h = tape.constant(random_matrix(n, d, 1.5, &mut rng));
        let v = tape.constant(random_matrix(2 * d, d, 1.5, &mut rng));
        let fused = lying_aggregate(&mut tape, h, &prop, v, LyingMode::Learned).unwrap();

        let z = lying_weights(&mut tape, h, &prop, v).unwrap();
        let m = lying_message(&mut tape, h, &prop, z).unwrap();
        let hv = tape.value(h).clone();
        let mut expected = Matrix::zeros(n, d);
        for u in 0..n {
            for c in 0..d {
                expected[(u, c)] = prop.ops.self_weight(u) * hv[(u, c)];
            }
        }
        for (e, &(s, r)) in prop.directed.iter().enumerate() {
            for c in 0..d {
                expected[(r, c)] += prop.ops.edge_weight(r, s) * tape.value(m)[(e, c)];
            }
        }
        assert!(tape.value(fused).max_abs_diff(&expected) < 1e-14);
    }
}

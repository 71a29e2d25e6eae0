//! Finite-difference oracles for every differentiable operation, layer, and
//! full model.

mod common;

use std::sync::Arc;

use common::{full_model_gradient_check, project, random_connected_graph, random_matrix};
use ldl_core::graph::Graph;
use ldl_core::layers::{
    gcn_layer, gcnii_layer, lying_aggregate, lying_gcn_layer, lying_gcnii_layer, lying_message, lying_weights,
    GcniiParams, LyingMode, ModelKind, Propagation,
};
use ldl_core::numerics::{check_gradients, Activation, Matrix, SparseRowMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const OP_TOL: f64 = 1e-6;
const LAYER_TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn matmul_gradients() {
    let mut r = rng(1);
    let a = random_matrix(4, 3, 1.0, &mut r);
    let b = random_matrix(3, 5, 1.0, &mut r);
    let plain = check_gradients(&[a.clone(), b.clone()], STEP, |t, h| {
        let p = t.matmul(h[0], h[1])?;
        Ok(t.sum(p))
    })
    .unwrap();
    assert!(plain.max_rel_err < OP_TOL, "{plain:?}");

    let weighted = check_gradients(&[a, b], STEP, |t, h| {
        let p = t.matmul(h[0], h[1])?;
        project(t, p, 7)
    })
    .unwrap();
    assert!(weighted.max_rel_err < OP_TOL, "{weighted:?}");
}

#[test]
fn spmm_gradients() {
    let mut r = rng(2);
    let triplets: Vec<_> = (0..12).map(|_| (r.random_range(0..5), r.random_range(0..4), r.random_range(-1.0..1.0))).collect();
    let s = Arc::new(SparseRowMatrix::from_triplets(5, 4, triplets).unwrap());
    let h = random_matrix(4, 3, 1.0, &mut r);
    let report = check_gradients(&[h], STEP, |t, x| {
        let p = t.spmm(&s, x[0])?;
        project(t, p, 3)
    })
    .unwrap();
    assert!(report.max_rel_err < OP_TOL, "{report:?}");
}

#[test]
fn activation_gradients_at_random_points() {
    let mut r = rng(3);
    // Keep clear of the relu and elu kink at zero.
    let x = Matrix::from_fn(10, 10, |_, _| {
        let mag = r.random_range(0.05..2.0);
        if r.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    });
    for kind in [Activation::Tanh, Activation::Relu, Activation::Elu, Activation::Identity] {
        let report = check_gradients(std::slice::from_ref(&x), STEP, |t, h| {
            let y = t.activation(kind, h[0]);
            project(t, y, 5)
        })
        .unwrap();
        assert!(report.max_rel_err < OP_TOL, "{kind}: {report:?}");
    }
}

#[test]
fn elementwise_gradients() {
    let mut r = rng(4);
    let a = random_matrix(3, 4, 1.0, &mut r);
    let b = random_matrix(3, 4, 1.0, &mut r);
    let mul = check_gradients(&[a.clone(), b.clone()], STEP, |t, h| {
        let p = t.mul(h[0], h[1])?;
        project(t, p, 1)
    })
    .unwrap();
    assert!(mul.max_rel_err < OP_TOL, "{mul:?}");

    let add_scale = check_gradients(&[a.clone(), b], STEP, |t, h| {
        let s = t.scale(h[1], -0.7);
        let p = t.add(h[0], s)?;
        project(t, p, 2)
    })
    .unwrap();
    assert!(add_scale.max_rel_err < OP_TOL, "{add_scale:?}");

    let sliced = check_gradients(&[a], STEP, |t, h| {
        let top = t.slice_rows(h[0], 1, 2)?;
        let sq = t.mul(top, top)?;
        project(t, sq, 3)
    })
    .unwrap();
    assert!(sliced.max_rel_err < OP_TOL, "{sliced:?}");
}

#[test]
fn dropout_gradients_with_fixed_mask() {
    let x = random_matrix(6, 5, 1.0, &mut rng(5));
    let report = check_gradients(&[x], STEP, |t, h| {
        let mut mask_rng = rng(99);
        let y = t.dropout(h[0], 0.4, true, &mut mask_rng)?;
        project(t, y, 4)
    })
    .unwrap();
    assert!(report.max_rel_err < OP_TOL, "{report:?}");
}

#[test]
fn cross_entropy_gradients() {
    let mut r = rng(6);
    let logits = random_matrix(7, 4, 2.0, &mut r);
    let labels: Vec<usize> = (0..7).map(|_| r.random_range(0..4)).collect();
    let mask = [0, 2, 3, 6];
    let report = check_gradients(&[logits], STEP, |t, h| t.masked_cross_entropy(h[0], &labels, &mask)).unwrap();
    assert!(report.max_rel_err < OP_TOL, "{report:?}");
}

struct LayerFixture {
    prop: Propagation,
    h: Matrix,
    h0: Matrix,
    w: Matrix,
    v: Matrix,
}

fn layer_fixture(seed: u64) -> LayerFixture {
    let mut r = rng(seed);
    let g = random_connected_graph(8, 0.3, &mut r);
    let d = 3;
    LayerFixture {
        prop: Propagation::new(&g),
        h: random_matrix(8, d, 1.0, &mut r),
        h0: random_matrix(8, d, 1.0, &mut r),
        w: random_matrix(d, d, 1.0, &mut r),
        v: random_matrix(2 * d, d, 1.0, &mut r),
    }
}

#[test]
fn lying_mechanism_gradients() {
    let fx = layer_fixture(7);
    let weights = check_gradients(&[fx.h.clone(), fx.v.clone()], STEP, |t, p| {
        let z = lying_weights(t, p[0], &fx.prop, p[1])?;
        project(t, z, 8)
    })
    .unwrap();
    assert!(weights.max_rel_err < LAYER_TOL, "{weights:?}");

    let message = check_gradients(&[fx.h.clone(), fx.v.clone()], STEP, |t, p| {
        let z = lying_weights(t, p[0], &fx.prop, p[1])?;
        let m = lying_message(t, p[0], &fx.prop, z)?;
        project(t, m, 9)
    })
    .unwrap();
    assert!(message.max_rel_err < LAYER_TOL, "{message:?}");

    let aggregate = check_gradients(&[fx.h.clone(), fx.v.clone()], STEP, |t, p| {
        let a = lying_aggregate(t, p[0], &fx.prop, p[1], LyingMode::Learned)?;
        project(t, a, 10)
    })
    .unwrap();
    assert!(aggregate.max_rel_err < LAYER_TOL, "{aggregate:?}");
}

#[test]
fn layer_gradients() {
    let fx = layer_fixture(8);
    let g2 = GcniiParams {
        alpha: 0.1,
        lambda: 1.0,
        layer: 2,
    };
    for act in [Activation::Tanh, Activation::Elu] {
        let gcn = check_gradients(&[fx.h.clone(), fx.w.clone()], STEP, |t, p| {
            let out = gcn_layer(t, p[0], &fx.prop, p[1], act)?;
            project(t, out, 11)
        })
        .unwrap();
        assert!(gcn.max_rel_err < LAYER_TOL, "gcn {act}: {gcn:?}");

        let gcnii = check_gradients(&[fx.h.clone(), fx.h0.clone(), fx.w.clone()], STEP, |t, p| {
            let out = gcnii_layer(t, p[0], p[1], &fx.prop, p[2], g2, act)?;
            project(t, out, 12)
        })
        .unwrap();
        assert!(gcnii.max_rel_err < LAYER_TOL, "gcnii {act}: {gcnii:?}");

        let lying = check_gradients(&[fx.h.clone(), fx.v.clone(), fx.w.clone()], STEP, |t, p| {
            let out = lying_gcn_layer(t, p[0], &fx.prop, p[1], p[2], act, LyingMode::Learned)?;
            project(t, out, 13)
        })
        .unwrap();
        assert!(lying.max_rel_err < LAYER_TOL, "lying-gcn {act}: {lying:?}");

        let lying2 = check_gradients(
            &[fx.h.clone(), fx.h0.clone(), fx.v.clone(), fx.w.clone()],
            STEP,
            |t, p| {
                let out = lying_gcnii_layer(t, p[0], p[1], &fx.prop, p[2], p[3], g2, act, LyingMode::Learned)?;
                project(t, out, 14)
            },
        )
        .unwrap();
        assert!(lying2.max_rel_err < LAYER_TOL, "lying-gcnii {act}: {lying2:?}");
    }
}

#[test]
fn full_models_eval_mode() {
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let report = full_model_gradient_check(kind, Activation::Tanh, false, 100 + i as u64);
        assert!(report.max_rel_err < LAYER_TOL, "{kind}: {report:?}");
    }
}

#[test]
fn full_models_with_dropout_and_elu() {
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let report = full_model_gradient_check(kind, Activation::Elu, true, 200 + i as u64);
        assert!(report.max_rel_err < LAYER_TOL, "{kind}: {report:?}");
    }
}

#[test]
fn isolated_nodes_do_not_break_lying_gradients() {
    let g = Graph::new(5, &[(0, 1), (1, 2)]).unwrap();
    let prop = Propagation::new(&g);
    let mut r = rng(9);
    let h = random_matrix(5, 2, 1.0, &mut r);
    let v = random_matrix(4, 2, 1.0, &mut r);
    let w = random_matrix(2, 2, 1.0, &mut r);
    let report = check_gradients(&[h, v, w], STEP, |t, p| {
        let out = lying_gcn_layer(t, p[0], &prop, p[1], p[2], Activation::Tanh, LyingMode::Learned)?;
        project(t, out, 15)
    })
    .unwrap();
    assert!(report.max_rel_err < LAYER_TOL, "{report:?}");
}

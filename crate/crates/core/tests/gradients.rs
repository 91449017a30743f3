//! Reverse-mode gradients against central finite differences.

mod common;

use common::*;
use gnncl::autodiff::{Mlp, ParamStore};
use gnncl::head::CellKind;
use gnncl::relation::{cross_relation_aggregate, gnn_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 100;

fn assert_family(name: &str, check: GradCheck) {
    assert!(check.passes(), "{name}: {check:?}");
    assert!(check.checked > 0, "{name}: nothing checked");
}

#[test]
fn mlp_with_cross_entropy() {
    assert_family("mlp", run_family(11, DRAWS, mlp_draw));
}

#[test]
fn weighted_self_loop_aggregation() {
    assert_family("aggregation", run_family(12, DRAWS, aggregation_draw));
}

#[test]
fn relation_fusion() {
    assert_family("fusion", run_family(13, DRAWS, fusion_draw));
}

#[test]
fn convolution_then_pooling() {
    assert_family("conv/pool", run_family(14, DRAWS, conv_pool_draw));
}

#[test]
fn recurrence_through_time_up_to_eight_steps() {
    assert_family(
        "elman rnn",
        run_family(15, DRAWS, |rng| recurrence_draw(rng, CellKind::ElmanRnn, 8)),
    );
    assert_family(
        "lstm",
        run_family(16, DRAWS, |rng| recurrence_draw(rng, CellKind::StandardLstm, 8)),
    );
}

#[test]
fn full_head_tiny_configuration() {
    assert_family("head", run_family(17, DRAWS, head_draw));
}

#[test]
fn trunk_loss_through_fusion_weight() {
    let check = run_family(18, DRAWS, |rng| {
        let m = rng.random_range(1..6);
        let (din, d) = (rng.random_range(1..4), rng.random_range(1..4));
        let mut store = ParamStore::new();
        let prev = random_tensor(rng, m, din, 1.0);
        let h1 = random_tensor(rng, m, d, 1.0);
        let w = store.add("fusion", random_tensor(rng, din + d, d, 1.0));
        let mlp = Mlp::new(&mut store, "cls", &[d, 3, 1], rng).unwrap();
        // Zero biases would put dead rows exactly on a ReLU kink.
        for layer in mlp.layers() {
            let width = store.value(layer.bias).cols();
            *store.value_mut(layer.bias) = random_tensor(rng, 1, width, 0.5);
        }
        let labels: Vec<f64> = (0..m).map(|_| f64::from(rng.random_bool(0.5))).collect();
        grad_check(&mut store, |tape, store| {
            let (p, h) = (tape.constant(prev.clone()), tape.constant(h1.clone()));
            let wv = tape.param(store, w);
            let fused = cross_relation_aggregate(tape, p, &[h], wv)?;
            gnn_loss(tape, &mlp, store, fused, &labels)
        })
    });
    assert_family("gnn loss", check);
}

#[test]
fn checker_skips_kinks_and_accepts_smooth_maps() {
    // A kink at the evaluation point is skipped rather than scored.
    let mut store = ParamStore::new();
    let x = store.add("x", gnncl::autodiff::Tensor::scalar(0.0));
    let check = grad_check(&mut store, |tape, store| {
        let v = tape.param(store, x);
        tape.abs(v)
    });
    assert_eq!((check.checked, check.skipped), (0, 1));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, 1, 3, 1.0));
    let check = grad_check(&mut store, |tape, store| {
        let v = tape.param(store, x);
        let sq = tape.mul(v, v)?;
        tape.sum(sq)
    });
    assert!(check.passes() && check.checked == 3);
}

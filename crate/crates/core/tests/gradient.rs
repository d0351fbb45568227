//! Analytic gradients of the margin loss against central differences.

mod common;

use common::*;
use fscil::stim::{margin_ce_loss, Layout, ToyModel};
use rand::Rng;

const STEP: f64 = 1e-6;
const KINK: f64 = 1e-3;

fn reference_ce(logits: &[f64], target: usize) -> f64 {
    let denom: f64 = logits.iter().map(|z| z.exp()).sum();
    -(logits[target].exp() / denom).ln()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn zero_margin_is_plain_cross_entropy() {
    let mut rng = rng(31);
    for _ in 0..500 {
        let n = rng.random_range(2..12);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y = rng.random_range(0..n);
        let (loss, grad) = margin_ce_loss(&logits, y, 0.0);
        assert!((loss - reference_ce(&logits, y)).abs() < 1e-12);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn logit_gradient_matches_finite_differences() {
    let mut rng = rng(32);
    for _ in 0..300 {
        let n = rng.random_range(2..10);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = rng.random_range(0..n);
        let delta = rng.random_range(0.0..2.0);
        let (_, grad) = margin_ce_loss(&logits, y, delta);
        for k in 0..n {
            let mut up = logits.clone();
            let mut down = logits.clone();
            up[k] += STEP;
            down[k] -= STEP;
            let fd = (margin_ce_loss(&up, y, delta).0 - margin_ce_loss(&down, y, delta).0) / (2.0 * STEP);
            assert!(close(grad[k], fd, 1e-4), "{} vs {fd}", grad[k]);
        }
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = rng(33);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 120 {
        attempts += 1;
        assert!(attempts < 2000, "too many near-kink instances");
        let dim = rng.random_range(2..=8);
        let use_sr = rng.random_bool(0.5);
        let layout = Layout {
            hidden: rng.random_range(2..=8),
            feature_dim: rng.random_range(2..=8),
            use_sr,
            sr_hidden: rng.random_range(2..=8),
            sr_out: rng.random_range(2..=8),
        };
        let classes = rng.random_range(2..=4);
        let components = rng.random_range(1..=2);
        let virtual_pool = rng.random_range(0..=3);
        let model = ToyModel::new_random(dim, &layout, classes, virtual_pool, components, rng.random());
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if model.forward(&x).pre_activations().any(|z| z.abs() < KINK) {
            continue;
        }
        let target = rng.random_range(0..model.rows());
        let delta = rng.random_range(0.0..1.5);
        let (_, grads) = model.loss_and_grad(&x, target, delta);

        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        for (slot, &len) in shapes.iter().enumerate() {
            for i in 0..len {
                let mut up = model.clone();
                up.params_mut()[slot][i] += STEP;
                let mut down = model.clone();
                down.params_mut()[slot][i] -= STEP;
                let fd = (up.loss_and_grad(&x, target, delta).0 - down.loss_and_grad(&x, target, delta).0) / (2.0 * STEP);
                let an = grads.0[slot][i];
                assert!(close(an, fd, 1e-4), "slot {slot} index {i}: analytic {an} numeric {fd}");
            }
        }
        checked += 1;
    }
}

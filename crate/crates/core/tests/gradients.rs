//! Finite-difference check of the analytic backward pass over every parameter coordinate.

mod common;

use miri_core::{Activation, Matrix, MlpParams, RngState};

fn check(activation: Activation, seed: u64) {
    let d = 2;
    let mut rng = RngState::new(seed);
    let params = MlpParams::init(&[4 * d + 1, 8, d], activation, &mut rng).unwrap();
    let x = Matrix::from_vec(6, 4 * d + 1, rng.normal(6 * (4 * d + 1))).unwrap();
    let y = Matrix::from_vec(6, d, rng.normal(6 * d)).unwrap();
    let worst = common::worst_gradient_gap(&params, &x, &y, 1e-5);
    assert!(worst < 1e-4, "worst relative gap {worst}");
}

#[test]
fn silu_network_gradients_match_central_differences() {
    for seed in 0..3 {
        check(Activation::Silu, seed);
    }
}

#[test]
fn tanh_network_gradients_match_central_differences() {
    check(Activation::Tanh, 10);
}

#[test]
fn deeper_network_gradients_match_central_differences() {
    let mut rng = RngState::new(20);
    let params = MlpParams::init(&[5, 6, 6, 3], Activation::Silu, &mut rng).unwrap();
    let x = Matrix::from_vec(4, 5, rng.normal(20)).unwrap();
    let y = Matrix::from_vec(4, 3, rng.normal(12)).unwrap();
    assert!(common::worst_gradient_gap(&params, &x, &y, 1e-5) < 1e-4);
}

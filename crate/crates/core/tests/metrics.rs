mod common;

use common::{median_by_hand, mi_by_hand, mmd_by_hand};
use miri_core::metrics::median_bandwidth;
use miri_core::{gen_mcar, gen_mnar, mi_plugin, mmd_rbf, Mask, Matrix, RngState};
use proptest::prelude::*;

fn random(rng: &mut RngState, n: usize, d: usize, shift: f64) -> Matrix {
    Matrix::from_vec(n, d, rng.normal(n * d).into_iter().map(|v| v + shift).collect()).unwrap()
}

#[test]
fn mmd_matches_double_sum_on_random_instances() {
    let mut rng = RngState::new(11);
    for case in 0..100 {
        let d = 1 + case % 3;
        let n1 = 2 + rng.next_index(49);
        let n2 = if case % 2 == 0 { n1 } else { 2 + rng.next_index(49) };
        let a = random(&mut rng, n1, d, 0.0);
        let b = random(&mut rng, n2, d, 0.5 * (case % 4) as f64);
        let sigma = median_by_hand(&a, &b);
        assert!((median_bandwidth(&a, &b) - sigma).abs() < 1e-12);
        let got = mmd_rbf(&a, &b, None).unwrap();
        let want = mmd_by_hand(&a, &b, sigma);
        assert!((got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
        let fixed = mmd_rbf(&a, &b, Some(0.7)).unwrap();
        assert!((fixed - mmd_by_hand(&a, &b, 0.7)).abs() < 1e-12);
    }
}

#[test]
fn mmd_two_point_expansion() {
    // Two points per sample, four-term closed form.
    let a = Matrix::from_rows(&[[0.0], [1.0]]);
    let b = Matrix::from_rows(&[[0.0], [3.0]]);
    let k = |d: f64| (-d * d / 2.0).exp();
    let aa = (2.0 + 2.0 * k(1.0)) / 4.0;
    let bb = (2.0 + 2.0 * k(3.0)) / 4.0;
    let ab = (k(0.0) + k(3.0) + k(1.0) + k(2.0)) / 4.0;
    let want = (aa + bb - 2.0 * ab).sqrt();
    assert!((mmd_rbf(&a, &b, Some(1.0)).unwrap() - want).abs() < 1e-15);
}

#[test]
fn mmd_separates_shifted_samples() {
    let mut rng = RngState::new(12);
    let a = random(&mut rng, 300, 2, 0.0);
    let b = random(&mut rng, 300, 2, 10.0);
    assert!(mmd_rbf(&a, &b, None).unwrap() > 0.5);
    assert_eq!(mmd_rbf(&a, &a, None).unwrap(), 0.0);
}

#[test]
fn mmd_bandwidth_thinning_keeps_symmetry() {
    let mut rng = RngState::new(13);
    let a = random(&mut rng, 1200, 2, 0.0);
    let b = random(&mut rng, 700, 2, 0.3);
    assert_eq!(mmd_rbf(&a, &b, None).unwrap(), mmd_rbf(&b, &a, None).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mmd_is_symmetric_and_nonnegative(seed in any::<u64>(), n1 in 2usize..30, n2 in 2usize..30, d in 1usize..4) {
        let mut rng = RngState::new(seed);
        let a = random(&mut rng, n1, d, 0.0);
        let b = random(&mut rng, n2, d, 1.0);
        let ab = mmd_rbf(&a, &b, None).unwrap();
        let ba = mmd_rbf(&b, &a, None).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(mmd_rbf(&a, &a, None).unwrap(), 0.0);
    }

    #[test]
    fn mi_is_nonnegative_and_zero_for_one_pattern(seed in any::<u64>(), n in 2usize..200, d in 1usize..5) {
        let mut rng = RngState::new(seed);
        let x = random(&mut rng, n, d, 0.0);
        let mask = gen_mcar(n, d, 0.4, &mut rng).unwrap();
        prop_assert!(mi_plugin(&x, &mask, 8).unwrap() >= 0.0);
        prop_assert_eq!(mi_plugin(&x, &Mask::all_observed(n, d), 8).unwrap(), 0.0);
    }
}

#[test]
fn mi_matches_entropy_decomposition() {
    let mut rng = RngState::new(14);
    for case in 0..50 {
        let d = 1 + case % 4;
        let n = 20 + rng.next_index(300);
        let x = random(&mut rng, n, d, 0.0);
        let mask = gen_mnar(&x, 0.3, &mut rng).unwrap();
        let bins = 2 + case % 9;
        let got = mi_plugin(&x, &mask, bins).unwrap();
        let want = mi_by_hand(&x, &mask, bins);
        assert!((got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
    }
}

#[test]
fn mi_near_zero_under_independence() {
    let mut rng = RngState::new(15);
    let x = random(&mut rng, 10_000, 2, 0.0);
    let mask = gen_mcar(10_000, 2, 0.3, &mut rng).unwrap();
    let mi = mi_plugin(&x, &mask, 8).unwrap();
    assert!(mi < 0.05, "{mi}");

    // Permutation null: shuffling mask rows destroys any dependence.
    let dependent = gen_mnar(&x, 0.3, &mut rng).unwrap();
    let perm = rng.permutation(10_000);
    let shuffled = Mask::from_fn(10_000, 2, |i, j| dependent.is_observed(perm[i], j));
    let null = mi_plugin(&x, &shuffled, 8).unwrap();
    assert!(null < 0.05, "{null}");
    assert!(mi_plugin(&x, &dependent, 8).unwrap() > null);
}

#[test]
fn mi_of_binary_channel_is_ln2() {
    let mut rng = RngState::new(16);
    let n = 10_000;
    let x = Matrix::from_fn(n, 1, |_, _| if rng.next_uniform() < 0.5 { 0.0 } else { 1.0 });
    let mask = Mask::from_fn(n, 1, |i, _| x[(i, 0)] == 1.0);
    let mi = mi_plugin(&x, &mask, 8).unwrap();
    assert!((mi - std::f64::consts::LN_2).abs() < 0.05, "{mi}");
}

#[test]
fn mi_grows_with_coupling() {
    let mut rng = RngState::new(17);
    let n = 10_000;
    let x = random(&mut rng, n, 1, 0.0);
    let u = rng.uniform(n);
    let mut prev = -1.0;
    for strength in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let mask = Mask::from_fn(n, 1, |i, _| u[i] >= 1.0 / (1.0 + (-strength * x[(i, 0)]).exp()));
        let mi = mi_plugin(&x, &mask, 8).unwrap();
        assert!(mi > prev, "strength {strength}: {mi} <= {prev}");
        prev = mi;
    }
}

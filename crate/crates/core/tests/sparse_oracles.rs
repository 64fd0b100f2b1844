mod common;

use common::{direct_tikhonov, lasso_objective, projected_gradient_lasso, random_matrix};
use dehash_core::sparse::{kkt_violation, solve_nn_lasso, solve_tikhonov, solve_tikhonov_weighted, Dictionary, LassoOptions, TikhonovWeights};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dict(m: &DMatrix<f64>) -> Dictionary {
    Dictionary::new(0, (0..m.ncols() as u32).collect(), m.clone()).unwrap()
}

#[test]
fn orthonormal_example_matches_grid_search() {
    let m = DMatrix::identity(2, 2);
    let v = DVector::from_vec(vec![1.0, 0.0]);
    let sol = solve_nn_lasso(&dict(&m), v.as_slice(), 0.1, &LassoOptions::default()).unwrap();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=2000 {
        for j in 0..=2000 {
            let h = DVector::from_vec(vec![i as f64 * 1e-3, j as f64 * 1e-3]);
            let f = lasso_objective(&m, &v, 0.1, &h);
            if f < best.0 {
                best = (f, h[0], h[1]);
            }
        }
    }
    assert!((best.1 - 0.95).abs() < 1e-9 && best.2 == 0.0);
    assert!((sol.coefficients[0] - 0.95).abs() < 1e-12 && sol.coefficients[1] == 0.0);
}

#[test]
fn random_8x20_rewrite_equals_direct_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 8, 20);
        let v = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let h0 = DVector::from_fn(20, |_, _| rng.random_range(0.0..1.0));
        let alpha = rng.random_range(0.05..0.95);
        let ours = solve_tikhonov(&dict(&m), v.as_slice(), h0.as_slice(), alpha).unwrap();
        let a1 = alpha / v.norm_squared();
        let a2 = (1.0 - alpha) / h0.norm_squared();
        let direct = direct_tikhonov(&m, &v, &h0, a1, a2);
        for (a, b) in ours.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn near_one_alpha_fits_the_data_better_than_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 6, 12);
        let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let h0 = DVector::from_fn(12, |_, _| rng.random_range(0.0..1.0));
        let h = solve_tikhonov(&dict(&m), v.as_slice(), h0.as_slice(), 1.0 - 1e-9).unwrap();
        let fit = (&v - &m * DVector::from_vec(h)).norm();
        assert!(fit <= (&v - &m * &h0).norm() + 1e-12);
        assert!(fit < 1e-3);
    }
}

#[test]
fn objective_trace_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = LassoOptions { record_trace: true, ..Default::default() };
    for _ in 0..50 {
        let m = random_matrix(&mut rng, 6, 15);
        let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let sol = solve_nn_lasso(&dict(&m), v.as_slice(), 0.05, &opts).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}

fn instance() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, f64)> {
    (1usize..=10, 1usize..=20, any::<u64>(), 0.0f64..1.0).prop_map(|(d, t, seed, lambda)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, d, t);
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        (m, v, lambda)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lasso_matches_projected_gradient((m, v, lambda) in instance()) {
        let sol = solve_nn_lasso(&dict(&m), v.as_slice(), lambda, &LassoOptions::default()).unwrap();
        prop_assert!(sol.coefficients.iter().all(|&x| x >= 0.0));
        let oracle = projected_gradient_lasso(&m, &v, lambda, 20_000);
        let ours = lasso_objective(&m, &v, lambda, &DVector::from_vec(sol.coefficients.clone()));
        prop_assert!(ours <= lasso_objective(&m, &v, lambda, &oracle) + 1e-6);
        prop_assert!(kkt_violation(&dict(&m), v.as_slice(), lambda, &sol.coefficients).unwrap() <= 1e-5);
    }

    #[test]
    fn lasso_is_homogeneous(seed in any::<u64>(), c in 0.1f64..10.0) {
        // tall full-rank dictionaries have a unique minimizer
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 8, 4);
        let v = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let opts = LassoOptions { tol: 1e-10, max_iter: 100_000, ..Default::default() };
        let a = solve_nn_lasso(&dict(&m), v.as_slice(), 0.1, &opts).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let b = solve_nn_lasso(&dict(&m), &scaled, 0.1 * c, &opts).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x * c - y).abs() <= 1e-6 * c.max(1.0), "{} vs {}", x * c, y);
        }
    }

    #[test]
    fn tikhonov_rewrite_matches_direct(seed in any::<u64>(), d in 1usize..=12, t in 1usize..=50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, d, t);
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let h0 = DVector::from_fn(t, |_, _| rng.random_range(0.0..1.0));
        let w = TikhonovWeights { data: rng.random_range(0.01..3.0), prior: rng.random_range(0.01..3.0) };
        let ours = solve_tikhonov_weighted(&dict(&m), v.as_slice(), h0.as_slice(), w).unwrap();
        let direct = direct_tikhonov(&m, &v, &h0, w.data, w.prior);
        for (a, b) in ours.iter().zip(direct.iter()) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }
}

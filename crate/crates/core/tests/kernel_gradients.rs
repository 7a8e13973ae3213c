mod common;

use common::*;
use ndarray::{Array1, Axis};
use proptest::prelude::*;
use rkdl_core::kernels::{gram_symmetric, mixed_objective_gradients, objective_gradients};
use rkdl_core::{gram, kernel_grad_first, kernel_vector_gradient, KernelSpec};

const EPS: f64 = 1e-6;

fn specs() -> Vec<KernelSpec> {
    vec![
        KernelSpec::rbf(1.3),
        KernelSpec::rbf_with_denom(2.0, 1.0),
        KernelSpec::polynomial(0.5, 2),
        KernelSpec::polynomial(1.0, 3),
        KernelSpec::linear(),
    ]
}

#[test]
fn gram_matches_entrywise_loop() {
    let mut r = rng(11);
    let x = gaussian(&mut r, 3, 3, 1.0);
    let y = gaussian(&mut r, 3, 2, 1.0);
    for spec in specs() {
        let g = gram(x.view(), y.view(), &spec).unwrap();
        assert_eq!((g.left_count(), g.right_count()), (3, 2));
        for i in 0..3 {
            for j in 0..2 {
                let want = k(x.column(i), y.column(j), &spec);
                assert!((g.values[[i, j]] - want).abs() <= 1e-12 * want.abs().max(1.0), "{spec:?}");
            }
        }
    }
}

#[test]
fn rbf_gram_range_and_diagonal() {
    let mut r = rng(3);
    let x = gaussian(&mut r, 5, 12, 2.0);
    let d = gaussian(&mut r, 5, 4, 2.0);
    let spec = KernelSpec::rbf(1.5);
    let kxd = gram(x.view(), d.view(), &spec).unwrap();
    assert!(kxd.values.iter().all(|&v| v > 0.0 && v <= 1.0));
    let kxx = gram(x.view(), x.view(), &spec).unwrap();
    assert!(kxx.values.diag().iter().all(|&v| v == 1.0));
}

#[test]
fn rbf_self_derivative_is_zero() {
    let mut r = rng(5);
    let d = gaussian(&mut r, 6, 1, 1.0);
    let g = kernel_grad_first(d.column(0), d.column(0), &KernelSpec::rbf(0.9)).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_is_symmetric(seed in 0u64..10_000, n in 1usize..9, m in 1usize..6) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, m, n, 1.0);
        for spec in specs() {
            let g = gram_symmetric(x.view(), &spec).unwrap().values;
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((g[[i, j]] - g[[j, i]]).abs() <= 1e-12);
                }
                prop_assert!((g[[i, i]] - k(x.column(i), x.column(i), &spec)).abs() <= 1e-12 * g[[i, i]].abs().max(1.0));
            }
        }
    }

    #[test]
    fn grad_first_matches_finite_differences(seed in 0u64..10_000, m in 1usize..7) {
        let mut r = rng(seed);
        let xy = gaussian(&mut r, m, 2, 0.8);
        let (x, y) = (xy.column(0).to_owned(), xy.column(1).to_owned());
        for spec in specs() {
            let g = kernel_grad_first(x.view(), y.view(), &spec).unwrap();
            let mut fd = Array1::zeros(m);
            for i in 0..m {
                let mut p = x.clone();
                p[i] += EPS;
                let mut q = x.clone();
                q[i] -= EPS;
                fd[i] = (k(p.view(), y.view(), &spec) - k(q.view(), y.view(), &spec)) / (2.0 * EPS);
            }
            // skip degenerate points where the gradient itself vanishes
            if fd.mapv(|v| v * v).sum().sqrt() > 1e-4 {
                prop_assert!(rel_err(&g, &fd) < 1e-5, "{:?}: {}", spec, rel_err(&g, &fd));
            }
        }
    }
}

#[test]
fn atom_gradient_matches_finite_differences() {
    // m = 4, N = 6, n_d = 3, n_a = 2
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let y = gaussian(&mut r, 4, 6, 1.0);
        let d = gaussian(&mut r, 4, 3, 1.0);
        let a = gaussian(&mut r, 3, 2, 1.0);
        let z = random_code(&mut r, 2, 6, 1);
        let w = a.dot(&z.to_dense());
        for spec in specs() {
            for j in 0..3 {
                let g = kernel_vector_gradient(y.view(), d.view(), a.view(), &z, j, &spec).unwrap();
                let fd = fd_column(&d, j, EPS, |dd| brute_objective(y.view(), dd.view(), w.view(), &spec));
                assert!(rel_err(&g, &fd) < 1e-5, "{spec:?} j={j}: {}", rel_err(&g, &fd));
            }
        }
    }
}

#[test]
fn batched_gradients_agree_with_reference() {
    let mut r = rng(7);
    let y = gaussian(&mut r, 5, 9, 1.0);
    let d = gaussian(&mut r, 5, 4, 1.0);
    let a = gaussian(&mut r, 4, 3, 1.0);
    let z = random_code(&mut r, 3, 9, 2);
    let w = a.dot(&z.to_dense());
    for spec in specs() {
        let all = objective_gradients(y.view(), d.view(), w.view(), &spec);
        for j in 0..4 {
            let g = kernel_vector_gradient(y.view(), d.view(), a.view(), &z, j, &spec).unwrap();
            let col = all.column(j).to_owned();
            assert!(rel_err(&col, &g) < 1e-10, "{spec:?} j={j}");
        }
    }
}

#[test]
fn linear_kernel_gradient_is_least_squares_gradient() {
    let mut r = rng(21);
    let y = gaussian(&mut r, 6, 10, 1.0);
    let d = gaussian(&mut r, 6, 4, 1.0);
    let a = gaussian(&mut r, 4, 3, 1.0);
    let z = random_code(&mut r, 3, 10, 2);
    let w = a.dot(&z.to_dense());
    // ‖Y − D W‖²_F  ⇒  ∂/∂d_j = −2 (Y − DW) W_jᵀ
    let resid = &y - &d.dot(&w);
    let want = resid.dot(&w.t()) * -2.0;
    for j in 0..4 {
        let g = kernel_vector_gradient(y.view(), d.view(), a.view(), &z, j, &KernelSpec::linear()).unwrap();
        let diff = (&g - &want.column(j)).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
        assert!(diff < 1e-10, "j={j}: {diff}");
    }
}

#[test]
fn mixed_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut r = rng(500 + seed);
        let y = gaussian(&mut r, 5, 8, 1.0);
        let d = gaussian(&mut r, 5, 4, 1.0);
        let a = gaussian(&mut r, 4, 2, 1.0);
        let z = random_code(&mut r, 2, 8, 1);
        let x = random_code(&mut r, 4, 8, 2).to_dense();
        let w = a.dot(&z.to_dense());
        let lambda = 0.7;
        for spec in [KernelSpec::rbf(1.1), KernelSpec::polynomial(0.3, 2)] {
            let g = mixed_objective_gradients(y.view(), d.view(), w.view(), x.view(), lambda, &spec);
            let objective = |dd: &ndarray::Array2<f64>| {
                let lin = &y - &dd.dot(&x);
                brute_objective(y.view(), dd.view(), w.view(), &spec) + lambda * lin.mapv(|v| v * v).sum()
            };
            for j in 0..4 {
                let fd = fd_column(&d, j, EPS, objective);
                let col = g.index_axis(Axis(1), j).to_owned();
                assert!(rel_err(&col, &fd) < 1e-5, "{spec:?} j={j}: {}", rel_err(&col, &fd));
            }
        }
    }
}

#[test]
fn zero_lambda_mixed_gradient_is_kernel_gradient() {
    let mut r = rng(8);
    let y = gaussian(&mut r, 4, 6, 1.0);
    let d = gaussian(&mut r, 4, 3, 1.0);
    let w = gaussian(&mut r, 3, 6, 1.0);
    let x = gaussian(&mut r, 3, 6, 1.0);
    let spec = KernelSpec::rbf(1.0);
    assert_eq!(
        mixed_objective_gradients(y.view(), d.view(), w.view(), x.view(), 0.0, &spec),
        objective_gradients(y.view(), d.view(), w.view(), &spec)
    );
}

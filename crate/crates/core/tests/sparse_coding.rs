mod common;

use common::*;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rkdl_core::{kernel_omp, kernel_omp_batch, omp, omp_batch};

fn coherence(d: &Array2<f64>) -> f64 {
    let g = d.t().dot(d);
    let mut mu: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                mu = mu.max(g[[i, j]].abs());
            }
        }
    }
    mu
}

/// Smallest residual over every 2-subset of atoms, by exhaustive least squares.
fn best_pair_residual(d: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let n = d.ncols();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let sub = d.select(Axis(1), &[i, j]);
            let g = sub.t().dot(&sub);
            let b = sub.t().dot(y);
            let det = g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]];
            let x0 = (g[[1, 1]] * b[0] - g[[0, 1]] * b[1]) / det;
            let x1 = (g[[0, 0]] * b[1] - g[[1, 0]] * b[0]) / det;
            let r = y - &(&sub.column(0) * x0 + &sub.column(1) * x1);
            best = best.min(r.dot(&r).sqrt());
        }
    }
    best
}

/// Gram-Schmidt columns perturbed by `noise`, then normalized.
fn near_orthogonal(r: &mut rand_chacha::ChaCha8Rng, m: usize, n: usize, noise: f64) -> Array2<f64> {
    let mut q = gaussian(r, m, n, 1.0);
    for j in 0..n {
        for i in 0..j {
            let p = q.column(i).dot(&q.column(j));
            let qi = q.column(i).to_owned();
            q.column_mut(j).scaled_add(-p, &qi);
        }
        let nrm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / nrm);
    }
    unit_columns(q + gaussian(r, m, n, noise))
}

#[test]
fn omp_matches_exhaustive_pair_search_under_exact_recovery_condition() {
    // exact recovery of every 2-sparse signal is guaranteed for coherence < 1/(2s - 1)
    let mut r = rng(2024);
    let mut checked = 0;
    while checked < 40 {
        let d = near_orthogonal(&mut r, 8, 6, 0.15);
        if coherence(&d) >= 1.0 / 3.0 {
            continue;
        }
        let x = random_code(&mut r, 6, 1, 2).to_dense();
        let y = d.dot(&x).column(0).to_owned();
        let got = omp(d.view(), y.view(), 2).unwrap();
        let best = best_pair_residual(&d, &y);
        assert!((got.residual_norm - best).abs() < 1e-9, "omp {} vs best {}", got.residual_norm, best);
        checked += 1;
    }
}

#[test]
fn omp_never_beats_exhaustive_pair_search() {
    let mut r = rng(77);
    for _ in 0..40 {
        let d = unit_columns(gaussian(&mut r, 4, 6, 1.0));
        let y = gaussian(&mut r, 4, 1, 1.0).column(0).to_owned();
        let got = omp(d.view(), y.view(), 2).unwrap();
        assert!(got.residual_norm >= best_pair_residual(&d, &y) - 1e-12);
    }
}

#[test]
fn kernel_omp_full_support_zeroes_correlations() {
    let mut r = rng(4);
    let d = unit_columns(gaussian(&mut r, 6, 5, 1.0));
    let k_dd = d.t().dot(&d);
    // a random A normalized under K_DD
    let mut a = gaussian(&mut r, 5, 3, 1.0);
    for j in 0..3 {
        let q = a.column(j).dot(&k_dd.dot(&a.column(j)));
        a.column_mut(j).mapv_inplace(|v| v / q.sqrt());
    }
    let y = gaussian(&mut r, 6, 1, 1.0).column(0).to_owned();
    let k_yd = d.t().dot(&y);
    let out = kernel_omp(k_yd.view(), y.dot(&y), k_dd.view(), a.view(), 3).unwrap();
    let z = out.column.to_dense(3);
    let c = a.t().dot(&(&k_yd - &k_dd.dot(&a.dot(&z))));
    assert!(c.iter().all(|v| v.abs() < 1e-10), "{c:?}");
}

#[test]
fn kernel_omp_rejects_unnormalized_atoms() {
    let k_dd = Array2::<f64>::eye(3);
    let a = Array2::<f64>::eye(3) * 2.0;
    let k = Array1::<f64>::ones(3);
    assert!(kernel_omp(k.view(), 3.0, k_dd.view(), a.view(), 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omp_residual_non_increasing_and_no_repeats(seed in 0u64..100_000, m in 3usize..9, n in 3usize..12, s in 1usize..4) {
        let mut r = rng(seed);
        let d = unit_columns(gaussian(&mut r, m, n, 1.0));
        let y = gaussian(&mut r, m, 1, 1.0).column(0).to_owned();
        let s = s.min(m).min(n);
        let out = omp(d.view(), y.view(), s).unwrap();
        let mut prev = y.dot(&y).sqrt();
        for &h in &out.residual_history {
            prop_assert!(h <= prev + 1e-12);
            prev = h;
        }
        let mut sup = out.column.support.clone();
        sup.dedup();
        prop_assert_eq!(sup.len(), out.column.support.len());
        prop_assert!(out.column.nnz() <= s);
    }

    #[test]
    fn kernel_omp_linear_identity_equals_omp(seed in 0u64..100_000, m in 4usize..10, n in 3usize..10, s in 1usize..4) {
        let mut r = rng(seed);
        let d = unit_columns(gaussian(&mut r, m, n, 1.0));
        let s = s.min(m - 1).min(n);
        let y = gaussian(&mut r, m, 1, 1.0).column(0).to_owned();
        let reference = omp(d.view(), y.view(), s).unwrap();
        let k_dd = d.t().dot(&d);
        let k_yd = d.t().dot(&y);
        let a = Array2::<f64>::eye(n);
        let got = kernel_omp(k_yd.view(), y.dot(&y), k_dd.view(), a.view(), s).unwrap();
        prop_assert!((got.residual_sq.sqrt() - reference.residual_norm).abs() < 1e-9,
            "kernel {} vs omp {}", got.residual_sq.sqrt(), reference.residual_norm);
        prop_assert!(got.residual_sq >= 0.0);
    }

    #[test]
    fn batch_omp_matches_single_signal(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let d = unit_columns(gaussian(&mut r, 8, 12, 1.0));
        let y = gaussian(&mut r, 8, 15, 1.0);
        let batch = omp_batch(d.view(), y.view(), 3).unwrap();
        for c in 0..15 {
            let single = omp(d.view(), y.column(c), 3).unwrap();
            prop_assert_eq!(&batch.column(c).support, &single.column.support);
            for (a, b) in batch.column(c).values.iter().zip(&single.column.values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
        prop_assert!(batch.max_support() <= 3);
    }

    #[test]
    fn kernel_omp_batch_is_columnwise(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let d = gaussian(&mut r, 5, 7, 1.0);
        let y = gaussian(&mut r, 5, 10, 1.0);
        let spec = rkdl_core::KernelSpec::rbf(1.5);
        let k_dd = rkdl_core::gram(d.view(), d.view(), &spec).unwrap().values;
        let k_yd = rkdl_core::gram(y.view(), d.view(), &spec).unwrap().values;
        let mut a = gaussian(&mut r, 7, 4, 1.0);
        for j in 0..4 {
            let q = a.column(j).dot(&k_dd.dot(&a.column(j)));
            a.column_mut(j).mapv_inplace(|v| v / q.sqrt());
        }
        let diag = Array1::<f64>::ones(10);
        let (code, _) = kernel_omp_batch(k_yd.view(), diag.view(), k_dd.view(), a.view(), 2).unwrap();
        for c in 0..10 {
            let single = kernel_omp(k_yd.row(c), 1.0, k_dd.view(), a.view(), 2).unwrap();
            prop_assert_eq!(&code.column(c).support, &single.column.support);
            for (a, b) in code.column(c).values.iter().zip(&single.column.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

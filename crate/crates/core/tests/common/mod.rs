#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rkdl_core::{kernel_eval, KernelSpec, SparseCode, SparseColumn};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn unit_columns(mut m: Array2<f64>) -> Array2<f64> {
    for mut c in m.columns_mut() {
        let n = c.dot(&c).sqrt();
        c /= n;
    }
    m
}

/// Random code with `s` nonzeros per column.
pub fn random_code(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize, s: usize) -> SparseCode {
    let cols = (0..n_cols)
        .map(|_| {
            let mut support = rand::seq::index::sample(rng, n_rows, s).into_vec();
            support.sort_unstable();
            let values = (0..s).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            SparseColumn { support, values }
        })
        .collect();
    SparseCode::from_columns(n_rows, cols).unwrap()
}

/// Kernel value straight from `kernel_eval`, no Gram shortcuts.
pub fn k(x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>, spec: &KernelSpec) -> f64 {
    kernel_eval(x, y, spec).unwrap()
}

/// Σ_s k(y_s,y_s) − 2 Σ_{s,j} k(y_s,d_j) W[j,s] + Σ_{a,b} M[a,b] k(d_a,d_b),
/// with W = AZ and M = WWᵀ, by explicit double loops.
pub fn brute_objective(
    y: ArrayView2<f64>,
    d: ArrayView2<f64>,
    w: ArrayView2<f64>,
    spec: &KernelSpec,
) -> f64 {
    let mut f = 0.0;
    for s in 0..y.ncols() {
        f += k(y.column(s), y.column(s), spec);
        for j in 0..d.ncols() {
            f -= 2.0 * k(y.column(s), d.column(j), spec) * w[[j, s]];
        }
    }
    let m = w.dot(&w.t());
    for a in 0..d.ncols() {
        for b in 0..d.ncols() {
            f += m[[a, b]] * k(d.column(a), d.column(b), spec);
        }
    }
    f
}

/// Central finite-difference gradient of `f` with respect to column `j` of `d`.
pub fn fd_column<F: Fn(&Array2<f64>) -> f64>(d: &Array2<f64>, j: usize, eps: f64, f: F) -> Array1<f64> {
    let mut g = Array1::zeros(d.nrows());
    for i in 0..d.nrows() {
        let mut plus = d.clone();
        plus[[i, j]] += eps;
        let mut minus = d.clone();
        minus[[i, j]] -= eps;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
    }
    g
}

pub fn rel_err(got: &Array1<f64>, want: &Array1<f64>) -> f64 {
    let diff = (got - want).mapv(|v| v * v).sum().sqrt();
    let scale = want.mapv(|v| v * v).sum().sqrt().max(1e-12);
    diff / scale
}

pub fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

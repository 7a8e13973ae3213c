//! Greedy sparse coding: OMP in the signal domain and Kernel OMP in the
//! feature domain.
//!
//! Both batch routines share one Gram-form pursuit: correlations are
//! `c = c0 − B z` with `B` the atom Gram (`DᵀD`, or `AᵀK_DD A` in feature
//! space) and `c0` the atom/signal correlations. The single-signal [`omp`]
//! keeps an explicit residual instead and serves as the reference.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RkdlError};
use crate::linalg::{dot, Cholesky};

/// Residual-norm threshold for early exit in signal-domain OMP.
pub const OMP_RESIDUAL_TOL: f64 = 1e-10;
/// Threshold on the squared feature-space residual for Kernel OMP.
pub const KERNEL_OMP_RESIDUAL_SQ_TOL: f64 = 1e-10;
/// Tolerance for the unit-norm dictionary precondition.
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Relative floor on the squared residual in Gram form, where
/// `‖y‖² − 2zᵀc + zᵀBz` loses about this much to cancellation.
pub const GRAM_RESIDUAL_FLOOR: f64 = 1e-14;

/// One sparse column: sorted support and matching coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseColumn {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    fn from_unsorted(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let (support, values) = pairs.into_iter().unzip();
        SparseColumn { support, values }
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn to_dense(&self, n_rows: usize) -> Array1<f64> {
        let mut out = Array1::zeros(n_rows);
        for (&i, &v) in self.support.iter().zip(&self.values) {
            out[i] += v;
        }
        out
    }
}

/// Column-sparse representation matrix (`n_rows × n_cols`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    n_rows: usize,
    columns: Vec<SparseColumn>,
}

impl SparseCode {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseCode {
            n_rows,
            columns: vec![SparseColumn::default(); n_cols],
        }
    }

    /// Builds a code from columns, checking that supports are sorted,
    /// unique and in range.
    pub fn from_columns(n_rows: usize, columns: Vec<SparseColumn>) -> Result<Self> {
        for (s, col) in columns.iter().enumerate() {
            if col.support.len() != col.values.len() {
                return Err(RkdlError::InvalidParameter(format!(
                    "column {s}: support and values lengths differ"
                )));
            }
            if col.support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(RkdlError::InvalidParameter(format!(
                    "column {s}: support not strictly increasing"
                )));
            }
            if let Some(&last) = col.support.last() {
                if last >= n_rows {
                    return Err(RkdlError::IndexOutOfRange {
                        index: last,
                        len: n_rows,
                    });
                }
            }
        }
        Ok(SparseCode { n_rows, columns })
    }

    /// Sparse view of a dense matrix (exact zeros are dropped).
    pub fn from_dense(m: ArrayView2<'_, f64>) -> Self {
        let columns = m
            .axis_iter(Axis(1))
            .map(|c| {
                let pairs = c
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect();
                SparseColumn::from_unsorted(pairs)
            })
            .collect();
        SparseCode {
            n_rows: m.nrows(),
            columns,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, s: usize) -> &SparseColumn {
        &self.columns[s]
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [SparseColumn] {
        &mut self.columns
    }

    pub fn max_support(&self) -> usize {
        self.columns.iter().map(SparseColumn::nnz).max().unwrap_or(0)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.columns.len()));
        for (s, col) in self.columns.iter().enumerate() {
            for (&i, &v) in col.support.iter().zip(&col.values) {
                out[[i, s]] = v;
            }
        }
        out
    }

    /// For every row `j`, the `(signal, position-in-column)` pairs where
    /// row `j` is in the support.
    pub fn row_entries(&self) -> Vec<Vec<(usize, usize)>> {
        let mut rows = vec![Vec::new(); self.n_rows];
        for (s, col) in self.columns.iter().enumerate() {
            for (k, &i) in col.support.iter().enumerate() {
                rows[i].push((s, k));
            }
        }
        rows
    }

    /// Row `j` as a dense vector over signals.
    pub fn row_dense(&self, j: usize) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_cols());
        for (s, col) in self.columns.iter().enumerate() {
            if let Ok(k) = col.support.binary_search(&j) {
                out[s] = col.values[k];
            }
        }
        out
    }

    /// Multiplies row `j` by `factor`.
    pub(crate) fn scale_row(&mut self, j: usize, factor: f64) {
        for col in &mut self.columns {
            if let Ok(k) = col.support.binary_search(&j) {
                col.values[k] *= factor;
            }
        }
    }
}

/// Result of single-signal OMP.
#[derive(Debug, Clone)]
pub struct OmpResult {
    pub column: SparseColumn,
    pub residual_norm: f64,
    /// Residual norm after each greedy round.
    pub residual_history: Vec<f64>,
    /// True when a singular support system forced an early stop.
    pub truncated: bool,
}

fn check_sparsity(s: usize, m: usize, n: usize) -> Result<()> {
    if s == 0 || s > m.min(n) {
        return Err(RkdlError::InvalidParameter(format!(
            "sparsity {s} must lie in 1..={}",
            m.min(n)
        )));
    }
    Ok(())
}

pub(crate) fn check_unit_columns(d: ArrayView2<'_, f64>, tol: f64) -> Result<()> {
    for (j, col) in d.axis_iter(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if (norm - 1.0).abs() > tol {
            return Err(RkdlError::Precondition(format!(
                "dictionary column {j} has norm {norm}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Orthogonal Matching Pursuit for one signal against a unit-norm
/// dictionary, with an explicit residual and a least-squares refit over the
/// selected support after every selection.
pub fn omp(d: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, s: usize) -> Result<OmpResult> {
    let (m, n) = d.dim();
    if y.len() != m {
        return Err(RkdlError::DimensionMismatch {
            context: "omp signal length",
            expected: m,
            actual: y.len(),
        });
    }
    check_sparsity(s, m, n)?;
    check_unit_columns(d, NORMALIZATION_TOL)?;

    let mut residual = y.to_owned();
    let mut norm = residual.dot(&residual).sqrt();
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut coefs = Array1::<f64>::zeros(0);
    let mut history = Vec::with_capacity(s);
    let mut truncated = false;

    while support.len() < s && norm >= OMP_RESIDUAL_TOL {
        let corr = d.t().dot(&residual);
        let Some(best) = argmax_abs_excluding(corr.view(), &support) else {
            break;
        };
        support.push(best);
        let ds = d.select(Axis(1), &support);
        let gram = ds.t().dot(&ds);
        let rhs = ds.t().dot(&y);
        match Cholesky::new(gram.view()) {
            Some(chol) => coefs = chol.solve(rhs.view()),
            None => {
                support.pop();
                truncated = true;
                break;
            }
        }
        residual = &y - &ds.dot(&coefs);
        norm = residual.dot(&residual).sqrt();
        history.push(norm);
    }

    let column = SparseColumn::from_unsorted(support.into_iter().zip(coefs.iter().copied()).collect());
    Ok(OmpResult {
        column,
        residual_norm: norm,
        residual_history: history,
        truncated,
    })
}

/// Index of the largest `|v_i|` outside `excluded`; ties go to the lowest
/// index. `None` when nothing is left or every candidate is zero.
fn argmax_abs_excluding(v: ArrayView1<'_, f64>, excluded: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in v.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        let a = c.abs();
        match best {
            Some((_, b)) if a <= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.filter(|&(_, a)| a > 0.0).map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SingularPolicy {
    /// Drop the atom that made the support system singular and stop.
    DropAndStop,
    /// Add a small ridge and continue.
    Ridge,
}

#[derive(Debug, Clone)]
pub(crate) struct Pursuit {
    pub column: SparseColumn,
    pub residual_sq: f64,
    pub ridged: bool,
}

/// Gram-form greedy pursuit: `gram` is the atom Gram, `c0` the atom/signal
/// correlations and `energy` the squared norm of the signal.
pub(crate) fn gram_pursuit(
    gram: ArrayView2<'_, f64>,
    c0: ArrayView1<'_, f64>,
    energy: f64,
    s: usize,
    residual_sq_tol: f64,
    policy: SingularPolicy,
) -> Pursuit {
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut z: Vec<f64> = Vec::new();
    let mut residual_sq = energy;
    let mut ridged = false;
    let n = c0.len();
    let mut corr = c0.to_owned();

    let tol = residual_sq_tol.max(GRAM_RESIDUAL_FLOOR * energy);
    while support.len() < s.min(n) && residual_sq >= tol {
        let Some(best) = argmax_abs_excluding(corr.view(), &support) else {
            break;
        };
        support.push(best);
        let k = support.len();
        let mut sub = Array2::<f64>::zeros((k, k));
        let mut rhs = Array1::<f64>::zeros(k);
        for (p, &i) in support.iter().enumerate() {
            rhs[p] = c0[i];
            for (q, &l) in support.iter().enumerate() {
                sub[[p, q]] = gram[[i, l]];
            }
        }
        let sol = match Cholesky::new(sub.view()) {
            Some(chol) => chol.solve(rhs.view()),
            None => match policy {
                SingularPolicy::DropAndStop => {
                    support.pop();
                    break;
                }
                SingularPolicy::Ridge => {
                    ridged = true;
                    match Cholesky::regularized(sub.view()) {
                        Some((chol, _)) => chol.solve(rhs.view()),
                        None => {
                            support.pop();
                            break;
                        }
                    }
                }
            },
        };
        z = sol.to_vec();
        let zbz = dot(&z, sub.dot(&sol).as_slice().unwrap());
        residual_sq = energy - 2.0 * dot(&z, rhs.as_slice().unwrap()) + zbz;
        // c = c0 − B_{:,S} z_S
        corr.assign(&c0);
        for (p, &i) in support.iter().enumerate() {
            corr.scaled_add(-z[p], &gram.column(i));
        }
    }

    Pursuit {
        column: SparseColumn::from_unsorted(support.into_iter().zip(z).collect()),
        residual_sq,
        ridged,
    }
}

/// OMP over every column of `y`. Columns are coded independently (and in
/// parallel); each result matches what [`omp`] selects up to round-off.
pub fn omp_batch(d: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, s: usize) -> Result<SparseCode> {
    let (m, n) = d.dim();
    if y.nrows() != m {
        return Err(RkdlError::DimensionMismatch {
            context: "omp_batch signal length",
            expected: m,
            actual: y.nrows(),
        });
    }
    check_sparsity(s, m, n)?;
    check_unit_columns(d, NORMALIZATION_TOL)?;
    let gram = d.t().dot(&d);
    let corr = d.t().dot(&y);
    let energies: Array1<f64> = y.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    Ok(omp_batch_precomputed(gram.view(), corr.view(), energies.view(), s))
}

/// Batch OMP from `DᵀD`, the correlations `DᵀY` and the signal energies.
pub(crate) fn omp_batch_precomputed(
    gram: ArrayView2<'_, f64>,
    corr: ArrayView2<'_, f64>,
    energies: ArrayView1<'_, f64>,
    s: usize,
) -> SparseCode {
    let columns: Vec<SparseColumn> = (0..corr.ncols())
        .into_par_iter()
        .map(|c| {
            gram_pursuit(
                gram,
                corr.column(c),
                energies[c],
                s,
                OMP_RESIDUAL_TOL * OMP_RESIDUAL_TOL,
                SingularPolicy::DropAndStop,
            )
            .column
        })
        .collect();
    SparseCode {
        n_rows: gram.nrows(),
        columns,
    }
}

/// Result of single-signal Kernel OMP.
#[derive(Debug, Clone)]
pub struct KernelOmpResult {
    pub column: SparseColumn,
    /// Squared feature-space residual, clamped at zero.
    pub residual_sq: f64,
    /// Number of support systems that needed a ridge.
    pub ridge_warnings: usize,
}

pub(crate) fn check_kernel_atoms(
    k_dd: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    tol: f64,
) -> Result<Array2<f64>> {
    let ka = k_dd.dot(&a);
    for j in 0..a.ncols() {
        let q = a.column(j).dot(&ka.column(j));
        if (q - 1.0).abs() > tol {
            return Err(RkdlError::Precondition(format!(
                "kernel atom {j} has feature-space norm² {q}, expected 1"
            )));
        }
    }
    Ok(a.t().dot(&ka))
}

fn check_kernel_shapes(k_dd: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>, s: usize) -> Result<()> {
    if k_dd.nrows() != k_dd.ncols() {
        return Err(RkdlError::DimensionMismatch {
            context: "K_DD must be square",
            expected: k_dd.nrows(),
            actual: k_dd.ncols(),
        });
    }
    if a.nrows() != k_dd.nrows() {
        return Err(RkdlError::DimensionMismatch {
            context: "A rows vs K_DD",
            expected: k_dd.nrows(),
            actual: a.nrows(),
        });
    }
    if s == 0 || s > a.ncols() {
        return Err(RkdlError::InvalidParameter(format!(
            "sparsity {s} must lie in 1..={}",
            a.ncols()
        )));
    }
    Ok(())
}

/// Kernel OMP for one signal, given its kernel row `k_yd` against the
/// kernel vectors, its self-similarity `k_yy`, `K_DD` and the kernel
/// dictionary coefficients `A` (columns normalized under `K_DD`).
pub fn kernel_omp(
    k_yd: ArrayView1<'_, f64>,
    k_yy: f64,
    k_dd: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    s: usize,
) -> Result<KernelOmpResult> {
    check_kernel_shapes(k_dd, a, s)?;
    if k_yd.len() != k_dd.nrows() {
        return Err(RkdlError::DimensionMismatch {
            context: "kernel row length",
            expected: k_dd.nrows(),
            actual: k_yd.len(),
        });
    }
    let b = check_kernel_atoms(k_dd, a, NORMALIZATION_TOL)?;
    let c0 = a.t().dot(&k_yd);
    let p = gram_pursuit(
        b.view(),
        c0.view(),
        k_yy,
        s,
        KERNEL_OMP_RESIDUAL_SQ_TOL,
        SingularPolicy::Ridge,
    );
    Ok(KernelOmpResult {
        column: p.column,
        residual_sq: p.residual_sq.max(0.0),
        ridge_warnings: usize::from(p.ridged),
    })
}

/// Kernel OMP over all signals. `k_yd` is `N × n_d` (one row per signal)
/// and `k_yy` the kernel self-similarities. Returns the code and the number
/// of ridge-regularized support solves.
pub fn kernel_omp_batch(
    k_yd: ArrayView2<'_, f64>,
    k_yy: ArrayView1<'_, f64>,
    k_dd: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    s: usize,
) -> Result<(SparseCode, usize)> {
    check_kernel_shapes(k_dd, a, s)?;
    if k_yd.ncols() != k_dd.nrows() || k_yd.nrows() != k_yy.len() {
        return Err(RkdlError::DimensionMismatch {
            context: "K_YD shape",
            expected: k_dd.nrows(),
            actual: k_yd.ncols(),
        });
    }
    let b = check_kernel_atoms(k_dd, a, NORMALIZATION_TOL)?;
    // C[:, s] = Aᵀ k_{y_s, D}
    let c = a.t().dot(&k_yd.t());
    Ok(kernel_omp_precomputed(b.view(), c.view(), k_yy, s))
}

/// Batch Kernel OMP from `B = AᵀK_DD A` and `C = AᵀK_DY` (`n_a × N`).
pub(crate) fn kernel_omp_precomputed(
    b: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
    k_yy: ArrayView1<'_, f64>,
    s: usize,
) -> (SparseCode, usize) {
    let results: Vec<Pursuit> = (0..c.ncols())
        .into_par_iter()
        .map(|col| {
            gram_pursuit(
                b,
                c.column(col),
                k_yy[col],
                s,
                KERNEL_OMP_RESIDUAL_SQ_TOL,
                SingularPolicy::Ridge,
            )
        })
        .collect();
    let warnings = results.iter().filter(|p| p.ridged).count();
    let columns = results.into_iter().map(|p| p.column).collect();
    (
        SparseCode {
            n_rows: b.nrows(),
            columns,
        },
        warnings,
    )
}

use ndarray::{Array1, Array2, ArrayView2};

use super::system::{code_row_rhs, KernelSystem};
use crate::error::{Result, RkdlError};
use crate::linalg::Cholesky;
use crate::sparse_coding::SparseCode;

/// Counters from one atom sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub unused_atoms: usize,
    pub degenerate_atoms: usize,
    /// 1 when `K_DD` had to be ridge-regularized.
    pub gram_ridge: usize,
}

/// One sequential pass over the kernel atoms with fixed sparsity pattern.
///
/// For atom `j`, only the signals whose code uses `j` take part. With
/// `R = Σ_{i≠j} a_i z_iᵀ`, the atom becomes `K_DD⁻¹ K_DY z_j − R z_j`, is
/// normalized so that `a_jᵀK_DD a_j = 1`, and the code row is refit as
/// `z_j ← (K_YD − Rᵀ K_DD) a_j` on its support. `k_yd` is `N × n_d`.
pub fn rkdl_atom_sweep(
    k_dd: ArrayView2<'_, f64>,
    k_yd: ArrayView2<'_, f64>,
    a: &mut Array2<f64>,
    z: &mut SparseCode,
) -> Result<SweepStats> {
    let n_d = k_dd.nrows();
    if k_dd.ncols() != n_d || k_yd.ncols() != n_d || a.nrows() != n_d {
        return Err(RkdlError::DimensionMismatch {
            context: "rkdl_atom_sweep kernel shapes",
            expected: n_d,
            actual: k_yd.ncols(),
        });
    }
    if z.n_rows() != a.ncols() || z.n_cols() != k_yd.nrows() {
        return Err(RkdlError::DimensionMismatch {
            context: "rkdl_atom_sweep code shape",
            expected: a.ncols(),
            actual: z.n_rows(),
        });
    }
    let (chol, ridged) = Cholesky::regularized(k_dd)
        .ok_or_else(|| RkdlError::NonFinite("K_DD cannot be factorized".into()))?;
    let base = |entries: &[(usize, usize)], z: &SparseCode| chol.solve(code_row_rhs(k_yd, entries, z).view());
    let mut stats = sweep_inner(k_dd, k_yd, base, a, z);
    stats.gram_ridge = usize::from(ridged);
    Ok(stats)
}

pub(crate) fn sweep_system(sys: &KernelSystem, a: &mut Array2<f64>, z: &mut SparseCode) -> SweepStats {
    sweep_inner(sys.k_dd.view(), sys.k_yd.view(), |e, z| sys.back_projection(e, z), a, z)
}

fn sweep_inner<F>(
    k_dd: ArrayView2<'_, f64>,
    k_yd: ArrayView2<'_, f64>,
    base: F,
    a: &mut Array2<f64>,
    z: &mut SparseCode,
) -> SweepStats
where
    F: Fn(&[(usize, usize)], &SparseCode) -> Array1<f64>,
{
    let n_a = a.ncols();
    let rows = z.row_entries();
    let mut stats = SweepStats::default();

    for (j, entries) in rows.iter().enumerate() {
        if entries.is_empty() {
            stats.unused_atoms += 1;
            continue;
        }
        // t_i = z_iᵀ z_j (i ≠ j) over the support of row j
        let mut t = vec![0.0; n_a];
        for &(s, k) in entries {
            let col = z.column(s);
            let zjs = col.values[k];
            for (&i, &v) in col.support.iter().zip(&col.values) {
                if i != j {
                    t[i] += v * zjs;
                }
            }
        }
        let mut atom = base(entries, z);
        for (i, &ti) in t.iter().enumerate() {
            if i != j && ti != 0.0 {
                atom.scaled_add(-ti, &a.column(i));
            }
        }
        let k_atom = k_dd.dot(&atom);
        let q = atom.dot(&k_atom);
        if !(q > 0.0) || !q.is_finite() {
            stats.degenerate_atoms += 1;
            continue;
        }
        let scale = q.sqrt();
        atom /= scale;
        let k_atom = k_atom / scale;
        // v_i = a_iᵀ K_DD a_j
        let v = a.t().dot(&k_atom);
        for &(s, k) in entries {
            let col = z.column(s);
            let mut val = k_yd.row(s).dot(&atom);
            for (&i, &zi) in col.support.iter().zip(&col.values) {
                if i != j {
                    val -= zi * v[i];
                }
            }
            z.columns_mut()[s].values[k] = val;
        }
        a.column_mut(j).assign(&atom);
    }
    stats
}

/// Normalizes the columns of `a` under `K_DD` and rescales the matching
/// code rows so that `AZ` is unchanged.
pub(crate) fn renormalize_atoms(
    sys: &KernelSystem,
    a: &mut Array2<f64>,
    z: &mut SparseCode,
) -> usize {
    let ka = sys.k_dd.dot(&*a);
    let mut degenerate = 0;
    for j in 0..a.ncols() {
        let q = a.column(j).dot(&ka.column(j));
        if !(q > 0.0) || !q.is_finite() {
            degenerate += 1;
            continue;
        }
        let scale = q.sqrt();
        a.column_mut(j).mapv_inplace(|v| v / scale);
        z.scale_row(j, scale);
    }
    degenerate
}

/// Coordinate initialization: atom `j` selects kernel vector `idx[j]`
/// of a seeded permutation, scaled to unit feature norm.
pub(crate) fn init_coefficients(
    k_dd: ArrayView2<'_, f64>,
    n_atoms: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let n_d = k_dd.nrows();
    if n_atoms > n_d {
        return Err(RkdlError::InvalidParameter(format!(
            "{n_atoms} kernel atoms need at least as many kernel vectors, got {n_d}"
        )));
    }
    let idx = crate::linear_dl::seeded_indices(n_d, seed);
    let mut a = Array2::<f64>::zeros((n_d, n_atoms));
    for (j, &i) in idx.iter().take(n_atoms).enumerate() {
        let kii = k_dd[[i, i]];
        if !(kii > 0.0) {
            return Err(RkdlError::Precondition(format!(
                "kernel vector {i} has zero feature norm"
            )));
        }
        a[[i, j]] = 1.0 / kii.sqrt();
    }
    Ok(a)
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::kernels::{
    gram_diagonal, gram_symmetric_unchecked, gradients_with_cross, kernel_from_inner_norms, sq_norms, KernelSpec,
};
use crate::error::{Result, RkdlError};
use crate::linalg::Cholesky;
use crate::sparse_coding::SparseCode;

/// Kernel matrices for one training configuration: `K_DD` with its
/// Cholesky factor, `K_YD` (`N × n_d`) and the diagonal of `K_YY`.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    pub spec: KernelSpec,
    pub k_dd: Array2<f64>,
    pub k_yd: Array2<f64>,
    pub k_yy_diag: Array1<f64>,
    /// Factor of `K_DD`; not needed when `D = Y`.
    chol: Option<Cholesky>,
    /// `DᵀY`, kept for the gradient; not needed when `D = Y`.
    inner_dy: Option<Array2<f64>>,
    /// `‖y_s‖²`, empty when `D = Y`.
    y_sq_norms: Array1<f64>,
    /// `K_YD` and `K_DD` are the same matrix (`D = Y`).
    shared: bool,
    /// Number of factorizations that needed a ridge.
    pub ridged: usize,
}

impl KernelSystem {
    /// Reduced system for kernel vectors `d`.
    pub fn new(y: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>, spec: KernelSpec) -> Result<Self> {
        let k_dd = gram_symmetric_unchecked(d, &spec).into_inner();
        let y_sq_norms = sq_norms(y);
        let (inner_dy, k_yd) = cross_kernel(y, d, y_sq_norms.view(), &spec);
        let k_yy_diag = gram_diagonal(y, &spec);
        check_finite("K_YY diagonal", k_yy_diag.iter())?;
        check_finite("K_YD", k_yd.iter())?;
        let (chol, ridged) = factorize(&k_dd)?;
        Ok(KernelSystem {
            spec,
            k_dd,
            k_yd,
            k_yy_diag,
            chol: Some(chol),
            inner_dy: Some(inner_dy),
            y_sq_norms,
            shared: false,
            ridged: usize::from(ridged),
        })
    }

    /// Full system with the training signals as kernel vectors.
    pub fn full(y: ArrayView2<'_, f64>, spec: KernelSpec) -> Result<Self> {
        let k = gram_symmetric_unchecked(y, &spec).into_inner();
        check_finite("K_YY", k.iter())?;
        let k_yy_diag = k.diag().to_owned();
        Ok(KernelSystem {
            spec,
            k_yd: k.clone(),
            k_dd: k,
            k_yy_diag,
            chol: None,
            inner_dy: None,
            y_sq_norms: Array1::zeros(0),
            shared: true,
            ridged: 0,
        })
    }

    /// Recomputes the kernel-vector dependent matrices after `d` changed.
    pub fn refresh(&mut self, y: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>) -> Result<()> {
        debug_assert!(!self.shared, "full systems have fixed kernel vectors");
        let k_dd = gram_symmetric_unchecked(d, &self.spec).into_inner();
        let (inner_dy, k_yd) = cross_kernel(y, d, self.y_sq_norms.view(), &self.spec);
        check_finite("K_YD", k_yd.iter())?;
        let (chol, ridged) = factorize(&k_dd)?;
        self.k_dd = k_dd;
        self.k_yd = k_yd;
        self.inner_dy = Some(inner_dy);
        self.chol = Some(chol);
        self.ridged += usize::from(ridged);
        Ok(())
    }

    pub fn n_kernel_vectors(&self) -> usize {
        self.k_dd.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.k_yd.nrows()
    }

    /// `DᵀY` for the current kernel vectors.
    pub(crate) fn inner_dy(&self) -> ArrayView2<'_, f64> {
        self.inner_dy.as_ref().expect("full systems have fixed kernel vectors").view()
    }

    /// Objective gradients at the kernel vectors `d` this system was built
    /// from, given `W = AZ`.
    pub(crate) fn gradients(&self, y: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
        let cross = self.inner_dy.as_ref().expect("full systems have fixed kernel vectors");
        gradients_with_cross(y, d, cross.view(), Some(self.k_yd.t()), w, &self.spec)
    }

    /// `K_DD⁻¹ K_DY z_j` for the code row `entries` of atom `j`. With
    /// `D = Y` this is `z_j` itself.
    pub(crate) fn back_projection(&self, entries: &[(usize, usize)], z: &SparseCode) -> Array1<f64> {
        match &self.chol {
            Some(chol) => chol.solve(code_row_rhs(self.k_yd.view(), entries, z).view()),
            None => {
                let mut out = Array1::zeros(self.k_dd.nrows());
                for &(s, k) in entries {
                    out[s] = z.column(s).values[k];
                }
                out
            }
        }
    }

    /// `B = AᵀK_DD A` and `C = AᵀK_DY` (`n_a × N`).
    pub fn projections(&self, a: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let ka = self.k_dd.dot(&a);
        let b = a.t().dot(&ka);
        let c = if self.shared {
            ka.reversed_axes()
        } else {
            a.t().dot(&self.k_yd.t())
        };
        (b, c)
    }

    /// Largest `|a_jᵀK_DD a_j − 1|` over the columns of `a`.
    pub fn atom_norm_deviation(&self, a: ArrayView2<'_, f64>) -> f64 {
        let ka = self.k_dd.dot(&a);
        (0..a.ncols())
            .map(|j| (a.column(j).dot(&ka.column(j)) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `Σ_s k(y_s, y_s) − 2 Σ_s c_sᵀz_s + Σ_s z_sᵀ B z_s`, i.e.
/// `‖φ(Y) − φ(D)AZ‖²_F` expressed through `B = AᵀK_DD A` and `C = AᵀK_DY`.
pub(crate) fn trace_objective(
    diag_sum: f64,
    b: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
    z: &SparseCode,
) -> f64 {
    let mut cross = 0.0;
    let mut quad = 0.0;
    for (s, col) in z.columns().iter().enumerate() {
        for (p, (&i, &vi)) in col.support.iter().zip(&col.values).enumerate() {
            cross += c[[i, s]] * vi;
            quad += b[[i, i]] * vi * vi;
            for (&l, &vl) in col.support[p + 1..].iter().zip(&col.values[p + 1..]) {
                quad += 2.0 * b[[i, l]] * vi * vl;
            }
        }
    }
    diag_sum - 2.0 * cross + quad
}

fn check_finite<'a>(what: &str, mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(RkdlError::NonFinite(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn factorize(k_dd: &Array2<f64>) -> Result<(Cholesky, bool)> {
    Cholesky::regularized(k_dd.view()).ok_or_else(|| RkdlError::NonFinite("K_DD has non-finite entries".into()))
}

/// `DᵀY` and `K_YD` (`N × n_d`).
fn cross_kernel(
    y: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    y_sq_norms: ArrayView1<'_, f64>,
    spec: &KernelSpec,
) -> (Array2<f64>, Array2<f64>) {
    let inner = d.t().dot(&y);
    let k_dy = kernel_from_inner_norms(inner.view(), sq_norms(d).view(), y_sq_norms, spec);
    let k_yd = k_dy.t().as_standard_layout().into_owned();
    (inner, k_yd)
}

/// `K_DY z_j` accumulated over the signals in `entries`.
pub(crate) fn code_row_rhs(k_yd: ArrayView2<'_, f64>, entries: &[(usize, usize)], z: &SparseCode) -> Array1<f64> {
    let mut rhs = Array1::<f64>::zeros(k_yd.ncols());
    for &(s, k) in entries {
        rhs.scaled_add(z.column(s).values[k], &k_yd.row(s));
    }
    rhs
}

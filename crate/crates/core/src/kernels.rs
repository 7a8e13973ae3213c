//! Kernel functions, Gram matrices and analytic kernel gradients.
//!
//! Every supported kernel has a first-argument gradient of the form
//! `∇ₓk(x, y) = u·x + v·y` where the scalars `u`, `v` depend only on
//! `xᵀy`, `‖x − y‖²` and `k(x, y)`. The batched gradient routines exploit
//! this to turn the per-atom contractions into two matrix products.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RkdlError};
use crate::sparse_coding::SparseCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Polynomial,
    Linear,
}

/// Kernel family and its hyperparameters.
///
/// The RBF kernel is `exp(-‖x − y‖² / (denom_factor · σ²))`; `denom_factor`
/// is 2 for the textbook Gaussian and 1 for the variant used in the
/// benchmark configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_denom")]
    pub denom_factor: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: u32,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_denom() -> f64 {
    2.0
}
fn default_beta() -> u32 {
    1
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        Self::rbf_with_denom(sigma, 2.0)
    }

    pub fn rbf_with_denom(sigma: f64, denom_factor: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            sigma,
            denom_factor,
            alpha: 0.0,
            beta: 1,
        }
    }

    pub fn polynomial(alpha: f64, beta: u32) -> Self {
        KernelSpec {
            family: KernelFamily::Polynomial,
            sigma: 1.0,
            denom_factor: 2.0,
            alpha,
            beta,
        }
    }

    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            sigma: 1.0,
            denom_factor: 2.0,
            alpha: 0.0,
            beta: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Rbf => {
                if !(self.sigma > 0.0 && self.sigma.is_finite()) {
                    return Err(RkdlError::InvalidParameter(format!(
                        "RBF sigma must be positive, got {}",
                        self.sigma
                    )));
                }
                if !(self.denom_factor > 0.0 && self.denom_factor.is_finite()) {
                    return Err(RkdlError::InvalidParameter(format!(
                        "RBF denom_factor must be positive, got {}",
                        self.denom_factor
                    )));
                }
            }
            KernelFamily::Polynomial => {
                if self.beta < 1 {
                    return Err(RkdlError::InvalidParameter(
                        "polynomial degree beta must be >= 1".into(),
                    ));
                }
                if !self.alpha.is_finite() {
                    return Err(RkdlError::InvalidParameter("alpha must be finite".into()));
                }
            }
            KernelFamily::Linear => {}
        }
        Ok(())
    }

    #[inline]
    fn rbf_scale(&self) -> f64 {
        self.denom_factor * self.sigma * self.sigma
    }

    /// Kernel value from the pairwise inner product and squared distance.
    #[inline]
    pub(crate) fn value(&self, inner: f64, dist2: f64) -> f64 {
        match self.family {
            KernelFamily::Rbf => (-dist2 / self.rbf_scale()).exp(),
            KernelFamily::Polynomial => (inner + self.alpha).powi(self.beta as i32),
            KernelFamily::Linear => inner,
        }
    }

    /// Coefficients `(u, v)` with `∇ₓk(x, y) = u·x + v·y`.
    #[inline]
    pub(crate) fn grad_coeffs(&self, inner: f64, kval: f64) -> (f64, f64) {
        match self.family {
            KernelFamily::Rbf => {
                let c = 2.0 * kval / self.rbf_scale();
                (-c, c)
            }
            KernelFamily::Polynomial => {
                let v = self.beta as f64 * (inner + self.alpha).powi(self.beta as i32 - 1);
                (0.0, v)
            }
            KernelFamily::Linear => (0.0, 1.0),
        }
    }

    /// `k(x, x)` given `‖x‖²`.
    #[inline]
    pub(crate) fn self_value(&self, sq_norm: f64) -> f64 {
        self.value(sq_norm, 0.0)
    }
}

/// Dense matrix of pairwise kernel evaluations between two column sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Array2<f64>,
}

impl GramMatrix {
    pub fn left_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn right_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(RkdlError::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Evaluates `k(x, y)`.
pub fn kernel_eval(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, spec: &KernelSpec) -> Result<f64> {
    check_len("kernel_eval", x.len(), y.len())?;
    spec.validate()?;
    let inner = x.dot(&y);
    let dist2 = match spec.family {
        KernelFamily::Rbf => x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum(),
        _ => 0.0,
    };
    Ok(spec.value(inner, dist2))
}

/// Gradient of `k(x, y)` with respect to its first argument.
pub fn kernel_grad_first(
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    spec: &KernelSpec,
) -> Result<Array1<f64>> {
    let kval = kernel_eval(x, y, spec)?;
    let (u, v) = spec.grad_coeffs(x.dot(&y), kval);
    Ok(match spec.family {
        // written as a difference so that x == y gives an exact zero
        KernelFamily::Rbf => Zip::from(&x).and(&y).map_collect(|a, b| v * (b - a)),
        _ => Zip::from(&x).and(&y).map_collect(|a, b| u * a + v * b),
    })
}

pub(crate) fn sq_norms(m: ArrayView2<'_, f64>) -> Array1<f64> {
    m.map_axis(Axis(0), |c| c.dot(&c))
}

fn same_view(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> bool {
    a.as_ptr() == b.as_ptr() && a.dim() == b.dim() && a.strides() == b.strides()
}

/// Gram matrix `K[i, j] = k(x_i, y_j)` between the columns of `x` and `y`.
///
/// When `x` and `y` are the same view the symmetric path is taken, which
/// yields an exactly symmetric result with `k(x_i, x_i)` on the diagonal.
pub fn gram(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, spec: &KernelSpec) -> Result<GramMatrix> {
    check_len("gram (row count)", x.nrows(), y.nrows())?;
    spec.validate()?;
    if same_view(&x, &y) {
        return Ok(gram_symmetric_unchecked(x, spec));
    }
    Ok(GramMatrix {
        values: gram_unchecked(x, y, spec),
    })
}

/// Symmetric Gram matrix `K[i, j] = k(x_i, x_j)`.
pub fn gram_symmetric(x: ArrayView2<'_, f64>, spec: &KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    Ok(gram_symmetric_unchecked(x, spec))
}

pub(crate) fn gram_unchecked(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, spec: &KernelSpec) -> Array2<f64> {
    let inner = x.t().dot(&y);
    kernel_from_inner(inner.view(), x, y, spec)
}

/// Kernel values from the inner products `inner[i, j] = x_iᵀy_j`.
pub(crate) fn kernel_from_inner(
    inner: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    spec: &KernelSpec,
) -> Array2<f64> {
    if spec.family == KernelFamily::Linear {
        return inner.to_owned();
    }
    kernel_from_inner_norms(inner, sq_norms(x).view(), sq_norms(y).view(), spec)
}

/// [`kernel_from_inner`] with the squared column norms supplied.
pub(crate) fn kernel_from_inner_norms(
    inner: ArrayView2<'_, f64>,
    xn: ArrayView1<'_, f64>,
    yn: ArrayView1<'_, f64>,
    spec: &KernelSpec,
) -> Array2<f64> {
    let mut k = inner.to_owned();
    if spec.family == KernelFamily::Linear {
        return k;
    }
    Zip::indexed(&mut k).par_for_each(|(i, j), v| {
        let inner = *v;
        let dist2 = (xn[i] + yn[j] - 2.0 * inner).max(0.0);
        *v = spec.value(inner, dist2);
    });
    k
}

pub(crate) fn gram_symmetric_unchecked(x: ArrayView2<'_, f64>, spec: &KernelSpec) -> GramMatrix {
    let inner = x.t().dot(&x);
    let n = inner.nrows();
    let norms = inner.diag().to_owned();
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = spec.self_value(norms[i]);
        for j in (i + 1)..n {
            let ip = inner[[i, j]];
            let dist2 = (norms[i] + norms[j] - 2.0 * ip).max(0.0);
            let v = spec.value(ip, dist2);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    GramMatrix { values: k }
}

/// Diagonal `k(x_i, x_i)` for every column, without forming the Gram.
pub fn gram_diagonal(x: ArrayView2<'_, f64>, spec: &KernelSpec) -> Array1<f64> {
    sq_norms(x).mapv(|n| spec.self_value(n))
}

/// Gradient of `‖φ(Y) − φ(D)AZ‖²_F` with respect to column `j` of `D`.
///
/// This is the reference contraction: with `W = AZ` and `M = WWᵀ`, entry
/// `i` equals `Tr[M ∂K_DD/∂d_ij] − 2 Tr[W ∂K_YD/∂d_ij]`, where the
/// derivative of `K_YD` only populates column `j` and that of `K_DD` only
/// populates row and column `j` (the diagonal entry counted once, as the
/// total derivative of `k(d_j, d_j)`). The batched [`objective_gradients`]
/// must agree with it.
pub fn kernel_vector_gradient(
    y: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    z: &SparseCode,
    j: usize,
    spec: &KernelSpec,
) -> Result<Array1<f64>> {
    let w = check_factor_shapes(y, d, a, z)?;
    if j >= d.ncols() {
        return Err(RkdlError::IndexOutOfRange {
            index: j,
            len: d.ncols(),
        });
    }
    spec.validate()?;
    let m_mat = w.dot(&w.t());
    let dj = d.column(j);
    let mut g = Array1::<f64>::zeros(d.nrows());

    // Tr[M ∂K_DD/∂d_ij]: row j, column j, and the shared diagonal entry.
    for b in 0..d.ncols() {
        if b == j {
            continue;
        }
        let db = d.column(b);
        // row j of ∂K_DD holds ∂k(d_j, d_b)/∂d_j, paired with M[b, j]
        let row_term = kernel_grad_first(dj, db, spec)?;
        // column j holds ∂k(d_b, d_j)/∂d_j = ∇ₓk(d_j, d_b) by symmetry
        let col_term = kernel_grad_first(dj, db, spec)?;
        g.scaled_add(m_mat[[b, j]], &row_term);
        g.scaled_add(m_mat[[j, b]], &col_term);
    }
    // total derivative of k(d_j, d_j): both arguments move
    let diag_term = kernel_grad_first(dj, dj, spec)?;
    g.scaled_add(2.0 * m_mat[[j, j]], &diag_term);

    // −2 Tr[W ∂K_YD/∂d_ij]
    for s in 0..y.ncols() {
        let wjs = w[[j, s]];
        if wjs == 0.0 {
            continue;
        }
        let t = kernel_grad_first(dj, y.column(s), spec)?;
        g.scaled_add(-2.0 * wjs, &t);
    }
    Ok(g)
}

fn check_factor_shapes(
    y: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    z: &SparseCode,
) -> Result<Array2<f64>> {
    check_len("kernel vectors (row count)", y.nrows(), d.nrows())?;
    check_len("A rows vs kernel vectors", d.ncols(), a.nrows())?;
    check_len("Z rows vs A columns", a.ncols(), z.n_rows())?;
    check_len("Z columns vs signals", y.ncols(), z.n_cols())?;
    Ok(a.dot(&z.to_dense()))
}

/// Σ_s weights[b, s] ∇ₓk(d_b, x_s) for every column b of `d`, as an
/// `m × n_d` matrix. `weights` is `n_d × n_x`.
/// `cross[b, s]` is `d_bᵀx_s`; `kvals[b, s]`, when given, is `k(d_b, x_s)`.
fn weighted_grad_sum(
    d: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    cross: ArrayView2<'_, f64>,
    kvals: Option<ArrayView2<'_, f64>>,
    weights: ArrayView2<'_, f64>,
    spec: &KernelSpec,
) -> Array2<f64> {
    let n_d = d.ncols();
    let n_x = x.ncols();
    let norms = kvals.is_none().then(|| (sq_norms(d), sq_norms(x)));
    let mut u_sum = Array1::<f64>::zeros(n_d);
    let mut vw = Array2::<f64>::zeros((n_x, n_d).f());
    for b in 0..n_d {
        let mut us = 0.0;
        let mut vcol = vw.column_mut(b);
        let pairs = weights.row(b).into_iter().zip(cross.row(b)).zip(vcol.iter_mut());
        for (s, ((&w, &inner), v)) in pairs.enumerate() {
            if w == 0.0 {
                continue;
            }
            let kval = match (&kvals, &norms) {
                (Some(k), _) => k[[b, s]],
                (None, Some((dn, xn))) => spec.value(inner, (dn[b] + xn[s] - 2.0 * inner).max(0.0)),
                (None, None) => unreachable!(),
            };
            let (u, vv) = spec.grad_coeffs(inner, kval);
            us += w * u;
            *v = w * vv;
        }
        u_sum[b] = us;
    }
    let mut out = x.dot(&vw);
    for (b, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        col.scaled_add(u_sum[b], &d.column(b));
    }
    out
}

/// Gradients of the kernel objective with respect to every column of `d`
/// at once (`m × n_d`), given the dense product `W = AZ`.
pub fn objective_gradients(
    y: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    spec: &KernelSpec,
) -> Array2<f64> {
    let cross = d.t().dot(&y);
    gradients_with_cross(y, d, cross.view(), None, w, spec)
}

/// [`objective_gradients`] with the inner products `DᵀY` supplied, and
/// optionally the kernel values `K_DY`.
pub(crate) fn gradients_with_cross(
    y: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    cross_dy: ArrayView2<'_, f64>,
    k_dy: Option<ArrayView2<'_, f64>>,
    w: ArrayView2<'_, f64>,
    spec: &KernelSpec,
) -> Array2<f64> {
    let m_mat = w.dot(&w.t());
    let cross_dd = d.t().dot(&d);
    let mut g = weighted_grad_sum(d, d, cross_dd.view(), None, m_mat.view(), spec);
    g *= 2.0;
    let yd = weighted_grad_sum(d, y, cross_dy, k_dy, w, spec);
    g.scaled_add(-2.0, &yd);
    g
}

/// Gradient of `‖φ(Y) − φ(D)AZ‖²_F + λ‖Y − DX‖²_F` with respect to `D`.
pub fn mixed_objective_gradients(
    y: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    lambda: f64,
    spec: &KernelSpec,
) -> Array2<f64> {
    let mut g = objective_gradients(y, d, w, spec);
    if lambda != 0.0 {
        let lin = LinearTerm::new(y, x);
        lin.add_gradient(&mut g, d, lambda);
    }
    g
}

/// Pieces of `(Y − DX)Xᵀ` that do not depend on `D`.
pub(crate) struct LinearTerm {
    yxt: Array2<f64>,
    xxt: Array2<f64>,
}

impl LinearTerm {
    pub(crate) fn new(y: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Self {
        LinearTerm {
            yxt: y.dot(&x.t()),
            xxt: x.dot(&x.t()),
        }
    }

    /// Same pieces from a sparse code; `y` is best given column-major.
    pub(crate) fn from_code(y: ArrayView2<'_, f64>, x: &SparseCode) -> Self {
        let n = x.n_rows();
        let mut yxt = Array2::<f64>::zeros((y.nrows(), n).f());
        let mut xxt = Array2::<f64>::zeros((n, n));
        for (s, col) in x.columns().iter().enumerate() {
            let ys = y.column(s);
            for (&i, &v) in col.support.iter().zip(&col.values) {
                yxt.column_mut(i).scaled_add(v, &ys);
                for (&l, &w) in col.support.iter().zip(&col.values) {
                    xxt[[i, l]] += v * w;
                }
            }
        }
        LinearTerm { yxt, xxt }
    }

    /// `g ← g − 2λ(Y − DX)Xᵀ`.
    pub(crate) fn add_gradient(&self, g: &mut Array2<f64>, d: ArrayView2<'_, f64>, lambda: f64) {
        let lin = &self.yxt - &d.dot(&self.xxt);
        g.scaled_add(-2.0 * lambda, &lin);
    }
}

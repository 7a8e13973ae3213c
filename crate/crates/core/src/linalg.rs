//! Small dense helpers: Cholesky factorization with ridge fallback and
//! triangular solves. The systems solved here are support Grams (at most a
//! few dozen rows) and kernel-vector Grams, so a straightforward
//! right-looking factorization is enough.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Base ridge, scaled by the mean diagonal of the matrix being factorized.
pub const BASE_RIDGE: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `L L^T = A + ridge I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
    ridge: f64,
}

impl Cholesky {
    /// Plain factorization. Returns `None` when the matrix is not
    /// numerically positive definite.
    pub fn new(a: ArrayView2<'_, f64>) -> Option<Self> {
        Self::with_ridge(a, 0.0)
    }

    pub fn with_ridge(a: ArrayView2<'_, f64>, ridge: f64) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]] + ridge;
            {
                let row_j = l.row(j);
                for k in 0..j {
                    diag -= row_j[k] * row_j[k];
                }
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return None;
            }
            let djj = diag.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                let (ri, rj) = (l.row(i), l.row(j));
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[[i, j]] = s / djj;
            }
        }
        Some(Cholesky { lower: l, ridge })
    }

    /// Factorizes `a`, adding an escalating ridge (starting at
    /// `BASE_RIDGE * mean(diag)`) until the factorization succeeds.
    /// The returned flag is true when any ridge was needed. Returns `None`
    /// for matrices with non-finite entries.
    pub fn regularized(a: ArrayView2<'_, f64>) -> Option<(Self, bool)> {
        if a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if let Some(c) = Self::new(a) {
            return Some((c, false));
        }
        let n = a.nrows().max(1);
        let scale = (a.diag().iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(1e-300);
        let mut ridge = BASE_RIDGE * scale;
        loop {
            if let Some(c) = Self::with_ridge(a, ridge) {
                return Some((c, true));
            }
            ridge *= 10.0;
            if !ridge.is_finite() {
                return None;
            }
        }
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `(A + ridge I) x = b`.
    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y = b.to_owned();
        for i in 0..n {
            let row = l.row(i);
            let mut s = y[i];
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

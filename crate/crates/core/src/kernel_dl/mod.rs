//! Kernel dictionary learning with full (KDL) and reduced (RKDL-D,
//! ORKDL-D, MORKDL-D) kernels.
//!
//! A kernel dictionary is `φ(D)A`: `D` holds `n_d` kernel vectors (the full
//! training set for KDL) and `A` is `n_d × n_a`. Every trainer alternates
//! Kernel OMP with an atom sweep over `A`; the optimized variants add
//! gradient steps on `D`.

mod sweep;
mod system;
mod train;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RkdlError};
use crate::kernels::{gram_diagonal, gram_symmetric_unchecked, gram_unchecked, KernelSpec};
use crate::linear_dl::Dictionary;
use crate::sparse_coding::{kernel_omp_batch, SparseCode};

pub use sweep::{rkdl_atom_sweep, SweepStats};
pub use system::KernelSystem;
pub use train::{kdl_train, morkdl_train, orkdl_train, rkdl_train, MixedOutput, TrainOutput};

/// Default cap on the number of kernel vectors for full KDL.
pub const DEFAULT_MAX_GRAM: usize = 20_000;

/// Kernel dictionary `φ(D)A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDictionary {
    /// `n_d × n_a` coefficients over the kernel vectors.
    pub a: Array2<f64>,
    /// Kernel vectors.
    pub d: Dictionary,
    pub spec: KernelSpec,
}

impl KernelDictionary {
    pub fn n_atoms(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_kernel_vectors(&self) -> usize {
        self.a.nrows()
    }

    /// Kernel OMP code of the columns of `y` with `s` atoms each. Also
    /// returns the number of ridge-regularized support solves.
    pub fn encode(&self, y: ArrayView2<'_, f64>, s: usize) -> Result<(SparseCode, usize)> {
        self.spec.validate()?;
        let d = self.d.view();
        if d.nrows() != y.nrows() {
            return Err(RkdlError::DimensionMismatch {
                context: "signals vs kernel vectors",
                expected: d.nrows(),
                actual: y.nrows(),
            });
        }
        let k_yd = gram_unchecked(y, d, &self.spec);
        let k_dd = gram_symmetric_unchecked(d, &self.spec).into_inner();
        let k_yy = gram_diagonal(y, &self.spec);
        kernel_omp_batch(k_yd.view(), k_yy.view(), k_dd.view(), self.a.view(), s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdlConfig {
    /// Number of kernel atoms `n_a`.
    pub n_atoms: usize,
    /// Sparsity `s_z` of the kernel code.
    pub sparsity: usize,
    pub iters: usize,
    #[serde(default)]
    pub grad_steps: usize,
    #[serde(default)]
    pub learning_rate: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Sparsity `s_x` of the linear code (mixed objective only).
    #[serde(default = "default_linear_sparsity")]
    pub linear_sparsity: usize,
    #[serde(default)]
    pub seed: u64,
    /// Re-normalize the kernel vectors after each round of gradient steps
    /// (mixed objective only).
    #[serde(default = "default_true")]
    pub normalize_d: bool,
    #[serde(default = "default_max_gram")]
    pub max_gram: usize,
}

fn default_linear_sparsity() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_max_gram() -> usize {
    DEFAULT_MAX_GRAM
}

impl Default for KdlConfig {
    fn default() -> Self {
        KdlConfig {
            n_atoms: 20,
            sparsity: 4,
            iters: 10,
            grad_steps: 3,
            learning_rate: 5e-4,
            lambda: 1.0,
            linear_sparsity: 5,
            seed: 0,
            normalize_d: true,
            max_gram: DEFAULT_MAX_GRAM,
        }
    }
}

impl KdlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 || self.sparsity == 0 {
            return Err(RkdlError::InvalidParameter(
                "n_atoms and sparsity must be positive".into(),
            ));
        }
        if self.sparsity > self.n_atoms {
            return Err(RkdlError::InvalidParameter(format!(
                "sparsity {} exceeds kernel atom count {}",
                self.sparsity, self.n_atoms
            )));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(RkdlError::InvalidParameter(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(RkdlError::InvalidParameter(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Wall-clock seconds per training phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub gram: f64,
    pub coding: f64,
    pub sweep: f64,
    pub gradient: f64,
    pub linear_coding: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.gram + self.coding + self.sweep + self.gradient + self.linear_coding
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warnings {
    /// Kernel OMP support systems solved with a ridge.
    pub coding_ridge: usize,
    /// Factorizations of `K_DD` that needed a ridge.
    pub gram_ridge: usize,
    /// Atom updates skipped because no signal used the atom.
    pub unused_atoms: usize,
    /// Atom updates skipped because the new atom had zero feature norm.
    pub degenerate_atoms: usize,
}

/// Per-iteration record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Error per signal element after initialization and after each
    /// iteration (`iters + 1` entries).
    pub errors: Vec<f64>,
    /// Largest `|a_jᵀK_DD a_j − 1|` after each iteration.
    pub atom_norm_deviation: Vec<f64>,
    /// Error right after the atom sweep, before the kernel vectors move.
    /// Only filled by the variants that update `D`.
    #[serde(default)]
    pub sweep_errors: Vec<f64>,
    pub timings: PhaseTimings,
    pub warnings: Warnings,
}

/// Representation error per signal element,
/// `‖φ(Y) − φ(D)AZ‖_F / √(mN)`. Only the diagonal of `K_YY` is formed.
pub fn error_metric(y: ArrayView2<'_, f64>, model: &KernelDictionary, z: &SparseCode) -> Result<f64> {
    model.spec.validate()?;
    let d = model.d.view();
    if d.nrows() != y.nrows() {
        return Err(RkdlError::DimensionMismatch {
            context: "kernel vectors vs signals",
            expected: y.nrows(),
            actual: d.nrows(),
        });
    }
    if model.a.nrows() != d.ncols() || z.n_rows() != model.a.ncols() || z.n_cols() != y.ncols() {
        return Err(RkdlError::DimensionMismatch {
            context: "error_metric factor shapes",
            expected: model.a.ncols(),
            actual: z.n_rows(),
        });
    }
    let k_yd = gram_unchecked(y, d, &model.spec);
    let k_dd = gram_symmetric_unchecked(d, &model.spec).into_inner();
    let diag = gram_diagonal(y, &model.spec);
    let ka = k_dd.dot(&model.a);
    let b = model.a.t().dot(&ka);
    let c = model.a.t().dot(&k_yd.t());
    let obj = system::trace_objective(diag.sum(), b.view(), c.view(), z);
    Ok(normalize_error(obj, y.nrows(), y.ncols()))
}

pub(crate) fn normalize_error(objective: f64, m: usize, n: usize) -> f64 {
    objective.max(0.0).sqrt() / ((m * n) as f64).sqrt()
}

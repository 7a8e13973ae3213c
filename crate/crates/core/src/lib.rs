//! Reduced kernel dictionary learning.
//!
//! Linear dictionary learning (AK-SVD), full kernel dictionary learning and
//! three reduced-kernel variants whose kernel vectors are a small trained
//! dictionary: fixed (RKDL-D), gradient-optimized (ORKDL-D) and optimized
//! on a mixed kernel/linear objective (MORKDL-D). Also data loaders and the
//! experiment harness behind the `rkdl` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod experiment;
pub mod kernel_dl;
pub mod kernels;
pub mod linalg;
pub mod linear_dl;
pub mod model;
pub mod sparse_coding;

pub use error::{Result, RkdlError};
pub use kernel_dl::{
    error_metric, kdl_train, morkdl_train, orkdl_train, rkdl_atom_sweep, rkdl_train, KdlConfig,
    KernelDictionary, MixedOutput, TrainOutput, TrainTrace,
};
pub use kernels::{gram, gram_symmetric, kernel_eval, kernel_grad_first, kernel_vector_gradient, GramMatrix, KernelFamily, KernelSpec};
pub use linear_dl::{aksvd_train, aksvd_train_from, init_dictionary, DlConfig, Dictionary};
pub use sparse_coding::{kernel_omp, kernel_omp_batch, omp, omp_batch, SparseCode, SparseColumn};

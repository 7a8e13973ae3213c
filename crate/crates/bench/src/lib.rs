//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use rkdl_core::datasets::synth_strokes;
use rkdl_core::{aksvd_train, Dictionary, DlConfig, KdlConfig, KernelSpec};

/// `n` digit-like 28×28 signals.
pub fn signals(n: usize) -> Array2<f64> {
    synth_strokes(28, n, 40, 3, 0.05, 1).expect("valid stroke parameters")
}

pub fn kernel() -> KernelSpec {
    KernelSpec::rbf_with_denom(10.0, 1.0)
}

pub fn trainer_config() -> KdlConfig {
    KdlConfig {
        iters: 3,
        ..KdlConfig::default()
    }
}

pub fn dl_config() -> DlConfig {
    DlConfig {
        n_atoms: 50,
        sparsity: 5,
        iters: 10,
        seed: 0,
    }
}

/// Kernel vectors trained on `y`.
pub fn kernel_vectors(y: &Array2<f64>) -> Dictionary {
    aksvd_train(y.view(), &dl_config()).expect("pretraining succeeds").dictionary
}

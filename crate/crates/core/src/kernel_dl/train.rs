use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder};

use super::sweep::{init_coefficients, renormalize_atoms, sweep_system};
use super::system::{trace_objective, KernelSystem};
use super::{normalize_error, KdlConfig, KernelDictionary, TrainTrace};
use crate::error::{Result, RkdlError};
use crate::kernels::{KernelSpec, LinearTerm};
use crate::linear_dl::{normalize_columns, Dictionary};
use crate::sparse_coding::{kernel_omp_precomputed, omp_batch_precomputed, SparseCode};

/// Trained kernel dictionary, its code and the run trace.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: KernelDictionary,
    pub code: SparseCode,
    pub trace: TrainTrace,
}

/// Output of the mixed-objective trainer, which also keeps a linear code
/// `X` of the signals over the kernel vectors.
#[derive(Debug, Clone)]
pub struct MixedOutput {
    pub output: TrainOutput,
    pub linear_code: SparseCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Update {
    Fixed,
    Gradient,
    Mixed,
}

/// Full kernel dictionary learning: the training signals themselves are the
/// kernel vectors, so `K_DD = K_YD = K_YY`.
pub fn kdl_train(y: ArrayView2<'_, f64>, spec: &KernelSpec, cfg: &KdlConfig) -> Result<TrainOutput> {
    if y.ncols() > cfg.max_gram {
        return Err(RkdlError::GramTooLarge {
            size: y.ncols(),
            cap: cfg.max_gram,
        });
    }
    run(y, None, spec, cfg, Update::Fixed).map(|(out, _)| out)
}

/// Reduced kernel dictionary learning with fixed kernel vectors `d`
/// (typically trained beforehand by AK-SVD).
pub fn rkdl_train(
    y: ArrayView2<'_, f64>,
    d: &Dictionary,
    spec: &KernelSpec,
    cfg: &KdlConfig,
) -> Result<TrainOutput> {
    run(y, Some(d.atoms.clone()), spec, cfg, Update::Fixed).map(|(out, _)| out)
}

/// Reduced kernel dictionary learning that also moves the kernel vectors
/// by `cfg.grad_steps` gradient steps per iteration.
pub fn orkdl_train(
    y: ArrayView2<'_, f64>,
    d_init: &Dictionary,
    spec: &KernelSpec,
    cfg: &KdlConfig,
) -> Result<TrainOutput> {
    check_gradient_cfg(cfg)?;
    run(y, Some(d_init.atoms.clone()), spec, cfg, Update::Gradient).map(|(out, _)| out)
}

/// As [`orkdl_train`], with the kernel-vector gradient taken on the mixed
/// objective `‖φ(Y) − φ(D)AZ‖²_F + λ‖Y − DX‖²_F`, where `X` is an OMP code
/// of `Y` over `D`. The trace still reports the kernel error only.
pub fn morkdl_train(
    y: ArrayView2<'_, f64>,
    d_init: &Dictionary,
    spec: &KernelSpec,
    cfg: &KdlConfig,
) -> Result<MixedOutput> {
    check_gradient_cfg(cfg)?;
    let n_d = d_init.n_atoms();
    if cfg.linear_sparsity == 0 || cfg.linear_sparsity > n_d.min(y.nrows()) {
        return Err(RkdlError::InvalidParameter(format!(
            "linear sparsity {} must lie in 1..={}",
            cfg.linear_sparsity,
            n_d.min(y.nrows())
        )));
    }
    let (output, x) = run(y, Some(d_init.atoms.clone()), spec, cfg, Update::Mixed)?;
    Ok(MixedOutput {
        output,
        linear_code: x.expect("mixed run produces a linear code"),
    })
}

fn diverged(e: RkdlError, it: usize) -> RkdlError {
    match e {
        RkdlError::NonFinite(msg) => RkdlError::NonFinite(format!("{msg} after gradient steps at iteration {it}")),
        other => other,
    }
}

fn check_gradient_cfg(cfg: &KdlConfig) -> Result<()> {
    if cfg.grad_steps == 0 {
        return Err(RkdlError::InvalidParameter(
            "optimized variants need at least one gradient step".into(),
        ));
    }
    Ok(())
}

fn validate_inputs(y: ArrayView2<'_, f64>, d: Option<&Array2<f64>>) -> Result<()> {
    if y.ncols() == 0 || y.nrows() == 0 {
        return Err(RkdlError::InvalidParameter("empty training set".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RkdlError::NonFinite("training signals".into()));
    }
    if let Some(d) = d {
        if d.nrows() != y.nrows() {
            return Err(RkdlError::DimensionMismatch {
                context: "kernel vectors vs signals",
                expected: y.nrows(),
                actual: d.nrows(),
            });
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(RkdlError::NonFinite("kernel vectors".into()));
        }
    }
    Ok(())
}

/// OMP code of the signals over the (possibly non-normalized) columns of
/// `d`, from the cached `DᵀY`. Values refer to the unnormalized columns.
fn linear_code(d: &Array2<f64>, inner_dy: ArrayView2<'_, f64>, energies: ArrayView1<'_, f64>, s: usize) -> Result<SparseCode> {
    let norms: Vec<f64> = d.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect();
    if let Some(j) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(RkdlError::Precondition(format!("kernel vector {j} has zero norm")));
    }
    let mut gram = d.t().dot(d);
    for ((i, j), v) in gram.indexed_iter_mut() {
        *v /= norms[i] * norms[j];
    }
    let mut corr = inner_dy.to_owned();
    for (mut row, &nb) in corr.axis_iter_mut(Axis(0)).zip(&norms) {
        row /= nb;
    }
    let mut code = omp_batch_precomputed(gram.view(), corr.view(), energies, s);
    for col in code.columns_mut() {
        for (&i, v) in col.support.iter().zip(col.values.iter_mut()) {
            *v /= norms[i];
        }
    }
    Ok(code)
}

fn run(
    y: ArrayView2<'_, f64>,
    kernel_vectors: Option<Array2<f64>>,
    spec: &KernelSpec,
    cfg: &KdlConfig,
    update: Update,
) -> Result<(TrainOutput, Option<SparseCode>)> {
    spec.validate()?;
    cfg.validate()?;
    validate_inputs(y, kernel_vectors.as_ref())?;
    let (m, n) = y.dim();
    let mut trace = TrainTrace::default();

    let clock = Instant::now();
    let (mut sys, mut d) = match kernel_vectors {
        None => (KernelSystem::full(y, *spec)?, None),
        Some(d) => (KernelSystem::new(y, d.view(), *spec)?, Some(d)),
    };
    trace.timings.gram += clock.elapsed().as_secs_f64();

    let mut a = init_coefficients(sys.k_dd.view(), cfg.n_atoms, cfg.seed)?;
    let diag_sum = sys.k_yy_diag.sum();

    let clock = Instant::now();
    let (mut b, mut c) = sys.projections(a.view());
    let (mut z, w) = kernel_omp_precomputed(b.view(), c.view(), sys.k_yy_diag.view(), cfg.sparsity);
    trace.warnings.coding_ridge += w;
    trace.timings.coding += clock.elapsed().as_secs_f64();
    trace
        .errors
        .push(normalize_error(trace_objective(diag_sum, b.view(), c.view(), &z), m, n));

    let moves_d = update != Update::Fixed && cfg.grad_steps > 0 && cfg.learning_rate > 0.0;
    // column-major copy: DᵀY and the linear-term products run faster on it
    let y_cols = if moves_d || update == Update::Mixed {
        let mut y_cols = Array2::<f64>::zeros(y.dim().f());
        y_cols.assign(&y);
        y_cols
    } else {
        Array2::zeros((0, 0))
    };
    let energies: Array1<f64> = if update == Update::Mixed {
        y_cols.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect()
    } else {
        Array1::zeros(0)
    };

    let renormalize_d = update == Update::Mixed && cfg.normalize_d;
    let mut x: Option<SparseCode> = None;

    for it in 0..cfg.iters {
        if it > 0 {
            let clock = Instant::now();
            let (code, w) = kernel_omp_precomputed(b.view(), c.view(), sys.k_yy_diag.view(), cfg.sparsity);
            z = code;
            trace.warnings.coding_ridge += w;
            trace.timings.coding += clock.elapsed().as_secs_f64();
        }

        let clock = Instant::now();
        let stats = sweep_system(&sys, &mut a, &mut z);
        trace.warnings.unused_atoms += stats.unused_atoms;
        trace.warnings.degenerate_atoms += stats.degenerate_atoms;
        trace.timings.sweep += clock.elapsed().as_secs_f64();

        if moves_d {
            let clock = Instant::now();
            let (b, c) = sys.projections(a.view());
            trace
                .sweep_errors
                .push(normalize_error(trace_objective(diag_sum, b.view(), c.view(), &z), m, n));
            trace.timings.sweep += clock.elapsed().as_secs_f64();

            let d = d.as_mut().expect("optimized variants own their kernel vectors");
            let linear_term = if update == Update::Mixed {
                let clock = Instant::now();
                let code = linear_code(d, sys.inner_dy(), energies.view(), cfg.linear_sparsity)?;
                let term = (cfg.lambda != 0.0).then(|| LinearTerm::from_code(y_cols.view(), &code));
                x = Some(code);
                trace.timings.linear_coding += clock.elapsed().as_secs_f64();
                term
            } else {
                None
            };
            let w_mat = a.dot(&z.to_dense());
            for step in 0..cfg.grad_steps {
                let clock = Instant::now();
                let mut g = sys.gradients(y, d.view(), w_mat.view());
                if let Some(term) = &linear_term {
                    term.add_gradient(&mut g, d.view(), cfg.lambda);
                }
                if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                    return Err(RkdlError::NonFinite(format!(
                        "gradient entry {} of kernel vector {} at iteration {it}, step {step}",
                        pos % g.nrows(),
                        pos / g.nrows()
                    )));
                }
                d.scaled_add(-cfg.learning_rate, &g);
                trace.timings.gradient += clock.elapsed().as_secs_f64();

                // normalization below refreshes anyway
                if !(renormalize_d && step + 1 == cfg.grad_steps) {
                    let clock = Instant::now();
                    sys.refresh(y_cols.view(), d.view()).map_err(|e| diverged(e, it))?;
                    trace.timings.gram += clock.elapsed().as_secs_f64();
                }
            }
            if renormalize_d {
                let clock = Instant::now();
                normalize_columns(d)?;
                sys.refresh(y_cols.view(), d.view()).map_err(|e| diverged(e, it))?;
                trace.timings.gram += clock.elapsed().as_secs_f64();
            }
            trace.warnings.degenerate_atoms += renormalize_atoms(&sys, &mut a, &mut z);
        }

        let clock = Instant::now();
        (b, c) = sys.projections(a.view());
        trace.timings.coding += clock.elapsed().as_secs_f64();
        trace
            .errors
            .push(normalize_error(trace_objective(diag_sum, b.view(), c.view(), &z), m, n));
        trace
            .atom_norm_deviation
            .push(b.diag().iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max));
    }
    trace.warnings.gram_ridge = sys.ridged;

    let linear = if update == Update::Mixed {
        let d = d.as_ref().expect("mixed variant owns its kernel vectors");
        let clock = Instant::now();
        let code = match x {
            Some(code) if !moves_d => code,
            _ => linear_code(d, sys.inner_dy(), energies.view(), cfg.linear_sparsity)?,
        };
        trace.timings.linear_coding += clock.elapsed().as_secs_f64();
        Some(code)
    } else {
        None
    };

    let kernel_vectors = match d {
        Some(d) => {
            let normalized = update == Update::Mixed && cfg.normalize_d && moves_d;
            Dictionary { atoms: d, normalized }
        }
        None => Dictionary::new(y.to_owned()),
    };
    Ok((
        TrainOutput {
            model: KernelDictionary {
                a,
                d: kernel_vectors,
                spec: *spec,
            },
            code: z,
            trace,
        },
        linear,
    ))
}

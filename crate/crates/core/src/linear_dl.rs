//! Linear dictionary learning by alternating OMP coding and AK-SVD atom
//! updates.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RkdlError};
use crate::sparse_coding::{omp_batch, SparseCode};

/// Linear dictionary, one atom per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub atoms: Array2<f64>,
    pub normalized: bool,
}

impl Dictionary {
    /// Wraps `atoms` without touching them.
    pub fn new(atoms: Array2<f64>) -> Self {
        Dictionary {
            atoms,
            normalized: false,
        }
    }

    /// Normalizes every column to unit Euclidean norm. Zero columns are
    /// rejected.
    pub fn normalized(mut atoms: Array2<f64>) -> Result<Self> {
        normalize_columns(&mut atoms)?;
        Ok(Dictionary {
            atoms,
            normalized: true,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    /// Largest deviation of a column norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        max_norm_deviation(&self.atoms)
    }
}

fn max_norm_deviation(m: &Array2<f64>) -> f64 {
    m.axis_iter(Axis(1))
        .map(|c| (c.dot(&c).sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Seeded permutation of `0..n`.
pub(crate) fn seeded_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

pub(crate) fn normalize_columns(m: &mut Array2<f64>) -> Result<()> {
    for (j, mut c) in m.axis_iter_mut(Axis(1)).enumerate() {
        let n = c.dot(&c).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(RkdlError::Precondition(format!(
                "column {j} has norm {n} and cannot be normalized"
            )));
        }
        c /= n;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlConfig {
    pub n_atoms: usize,
    pub sparsity: usize,
    pub iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DlConfig {
    pub fn validate(&self, signal_dim: usize) -> Result<()> {
        if self.n_atoms == 0 || self.sparsity == 0 {
            return Err(RkdlError::InvalidParameter(
                "n_atoms and sparsity must be positive".into(),
            ));
        }
        if self.sparsity > self.n_atoms || self.sparsity > signal_dim {
            return Err(RkdlError::InvalidParameter(format!(
                "sparsity {} exceeds n_atoms {} or signal dimension {}",
                self.sparsity, self.n_atoms, signal_dim
            )));
        }
        Ok(())
    }
}

/// Initial dictionary drawn from the data, with provenance.
#[derive(Debug, Clone)]
pub struct InitDictionary {
    pub dictionary: Dictionary,
    /// Index in `Y` of the signal each atom was taken from.
    pub source_columns: Vec<usize>,
    /// Pairs of atoms that coincide exactly (duplicate signals in `Y`).
    pub coincident: Vec<(usize, usize)>,
}

/// Samples `n_atoms` distinct (nonzero) columns of `y` without replacement
/// with a seeded RNG and normalizes them.
pub fn init_dictionary(y: ArrayView2<'_, f64>, n_atoms: usize, seed: u64) -> Result<InitDictionary> {
    let n = y.ncols();
    if n_atoms == 0 || n < n_atoms {
        return Err(RkdlError::InvalidParameter(format!(
            "cannot draw {n_atoms} atoms from {n} signals"
        )));
    }
    let source_columns: Vec<usize> = seeded_indices(n, seed)
        .into_iter()
        .filter(|&s| y.column(s).iter().any(|&v| v != 0.0))
        .take(n_atoms)
        .collect();
    if source_columns.len() < n_atoms {
        return Err(RkdlError::Precondition(format!(
            "only {} nonzero signals available for {n_atoms} atoms",
            source_columns.len()
        )));
    }
    let dictionary = Dictionary::normalized(y.select(Axis(1), &source_columns))?;
    let mut coincident = Vec::new();
    for i in 0..n_atoms {
        for j in (i + 1)..n_atoms {
            if dictionary.atoms.column(i) == dictionary.atoms.column(j) {
                coincident.push((i, j));
            }
        }
    }
    Ok(InitDictionary {
        dictionary,
        source_columns,
        coincident,
    })
}

/// Output of linear dictionary learning.
#[derive(Debug, Clone)]
pub struct DlOutput {
    pub dictionary: Dictionary,
    pub code: SparseCode,
    /// `‖Y − DX‖_F` after the initial coding and after every iteration.
    pub errors: Vec<f64>,
    /// Largest atom-norm deviation from 1 after every iteration.
    pub norm_deviation: Vec<f64>,
    /// Atoms re-seeded because no signal used them.
    pub replaced_atoms: usize,
}

/// AK-SVD from a seeded data-sampled initialization.
pub fn aksvd_train(y: ArrayView2<'_, f64>, cfg: &DlConfig) -> Result<DlOutput> {
    cfg.validate(y.nrows())?;
    if y.iter().all(|&v| v == 0.0) {
        return Err(RkdlError::Precondition("training signals are all zero".into()));
    }
    let init = init_dictionary(y, cfg.n_atoms, cfg.seed)?;
    aksvd_train_from(y, init.dictionary, cfg)
}

/// AK-SVD starting from a given dictionary (normalized on entry).
pub fn aksvd_train_from(y: ArrayView2<'_, f64>, init: Dictionary, cfg: &DlConfig) -> Result<DlOutput> {
    cfg.validate(y.nrows())?;
    if init.signal_dim() != y.nrows() || init.n_atoms() != cfg.n_atoms {
        return Err(RkdlError::DimensionMismatch {
            context: "initial dictionary shape",
            expected: cfg.n_atoms,
            actual: init.n_atoms(),
        });
    }
    let mut d = init.atoms;
    normalize_columns(&mut d)?;

    let mut code = omp_batch(d.view(), y, cfg.sparsity)?;
    let mut errors = vec![residual_norm(y, &d, &code)];
    let mut replaced_atoms = 0;

    let mut norm_deviation = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        // the first pass reuses the code of the initial dictionary
        if it > 0 {
            code = omp_batch(d.view(), y, cfg.sparsity)?;
        }
        replaced_atoms += aksvd_sweep(y, &mut d, &mut code);
        errors.push(residual_norm(y, &d, &code));
        norm_deviation.push(max_norm_deviation(&d));
    }

    Ok(DlOutput {
        dictionary: Dictionary {
            atoms: d,
            normalized: true,
        },
        code,
        errors,
        norm_deviation,
        replaced_atoms,
    })
}

/// One pass of AK-SVD atom updates in ascending order. Returns the number
/// of unused atoms that were re-seeded.
pub(crate) fn aksvd_sweep(y: ArrayView2<'_, f64>, d: &mut Array2<f64>, code: &mut SparseCode) -> usize {
    let mut residual = residual_matrix(y, d.view(), code);
    let rows = code.row_entries();
    let mut replaced = 0;
    let mut taken: Vec<usize> = Vec::new();

    for (j, entries) in rows.iter().enumerate() {
        if entries.is_empty() {
            // re-seed from the worst represented signal not already used
            let worst = residual
                .axis_iter(Axis(1))
                .enumerate()
                .filter(|(s, _)| !taken.contains(s))
                .map(|(s, r)| (s, r.dot(&r)))
                .fold(None, |acc: Option<(usize, f64)>, (s, e)| match acc {
                    Some((_, best)) if e <= best => acc,
                    _ => Some((s, e)),
                });
            if let Some((s, _)) = worst {
                let sig = y.column(s);
                let n = sig.dot(&sig).sqrt();
                if n > 0.0 {
                    d.column_mut(j).assign(&(&sig / n));
                    taken.push(s);
                    replaced += 1;
                }
            }
            continue;
        }

        let signals: Vec<usize> = entries.iter().map(|&(s, _)| s).collect();
        let x: Array1<f64> = entries
            .iter()
            .map(|&(s, k)| code.column(s).values[k])
            .collect();
        // F = E_S + d_j x_jᵀ
        let mut f = residual.select(Axis(1), &signals);
        let dj = d.column(j).to_owned();
        for (c, mut col) in f.axis_iter_mut(Axis(1)).enumerate() {
            col.scaled_add(x[c], &dj);
        }
        let atom = f.dot(&x);
        let norm = atom.dot(&atom).sqrt();
        if !(norm > 0.0) {
            continue;
        }
        let atom = atom / norm;
        let new_x = f.t().dot(&atom);
        for (c, &(s, k)) in entries.iter().enumerate() {
            code.columns_mut()[s].values[k] = new_x[c];
            let mut rc = residual.column_mut(s);
            rc.assign(&f.column(c));
            rc.scaled_add(-new_x[c], &atom);
        }
        d.column_mut(j).assign(&atom);
    }
    replaced
}

/// `‖Y − DX‖_F`.
pub fn residual_norm(y: ArrayView2<'_, f64>, d: &Array2<f64>, code: &SparseCode) -> f64 {
    let r = residual_matrix(y, d.view(), code);
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `Y − DX` using the sparsity of `X`.
pub(crate) fn residual_matrix(y: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>, code: &SparseCode) -> Array2<f64> {
    let mut r = Array2::zeros(y.dim().f());
    r.assign(&y);
    for (mut rc, col) in r.axis_iter_mut(Axis(1)).zip(code.columns()) {
        for (&i, &v) in col.support.iter().zip(&col.values) {
            rc.scaled_add(-v, &d.column(i));
        }
    }
    r
}

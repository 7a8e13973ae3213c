//! Signal loaders: MNIST IDX files, CIFAR-10 binary batches, numeric CSV
//! and seeded synthetic generators.
//!
//! Every loader returns one signal per column.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RkdlError};
use crate::linear_dl::Dictionary;
use crate::sparse_coding::{SparseCode, SparseColumn};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const CIFAR_RECORD_BYTES: usize = 3073;
pub const CIFAR_PIXELS: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Divide raw byte intensities by 255.
    #[default]
    Unit01,
    /// Scale every signal to unit Euclidean norm.
    PerColumnL2,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grayscale {
    /// Unweighted mean of the three colour planes.
    #[default]
    Mean,
    /// ITU-R BT.601 luma weights.
    Luminance,
}

/// Whether a CSV file stores one signal per row or per column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    #[default]
    SignalsAsRows,
    SignalsAsColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Cifar10 {
        batches: Vec<PathBuf>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        layout: CsvLayout,
    },
    /// Sparse combinations of planted unit-norm atoms plus Gaussian noise.
    Synthetic {
        m: usize,
        n: usize,
        n_planted: usize,
        sparsity: usize,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Digit-like images in `[0, 1]`: each one superimposes a few random
    /// pen strokes drawn from a shared stroke vocabulary.
    SyntheticStrokes {
        side: usize,
        n: usize,
        vocabulary: usize,
        strokes_per_image: usize,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: DataSource,
    #[serde(default)]
    pub label_filter: Option<u8>,
    #[serde(default)]
    pub max_signals: Option<usize>,
    #[serde(default)]
    pub normalize: Normalization,
    #[serde(default)]
    pub grayscale: Grayscale,
}

impl DatasetSpec {
    pub fn new(source: DataSource) -> Self {
        DatasetSpec {
            source,
            label_filter: None,
            max_signals: None,
            normalize: Normalization::Unit01,
            grayscale: Grayscale::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let labeled = matches!(self.source, DataSource::Idx { .. } | DataSource::Cifar10 { .. });
        if self.label_filter.is_some() && !labeled {
            return Err(RkdlError::InvalidParameter(
                "label_filter is only valid for labeled sources".into(),
            ));
        }
        Ok(())
    }
}

/// Training signals, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub values: Array2<f64>,
    pub provenance: String,
}

impl SignalMatrix {
    pub fn new(values: Array2<f64>, provenance: impl Into<String>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(RkdlError::InvalidParameter("signal matrix has no signals".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(RkdlError::NonFinite(format!(
                "signal entry ({}, {})",
                pos / values.ncols(),
                pos % values.ncols()
            )));
        }
        Ok(SignalMatrix {
            values,
            provenance: provenance.into(),
        })
    }

    /// Signal dimension `m`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of signals `N`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// Loads the signals described by `spec`.
pub fn load(spec: &DatasetSpec) -> Result<SignalMatrix> {
    spec.validate()?;
    match &spec.source {
        DataSource::Idx { images, labels } => load_idx(images, labels, spec),
        DataSource::Cifar10 { batches } => load_cifar10(batches, spec),
        DataSource::Csv { path, layout } => load_csv(path, *layout, spec),
        DataSource::Synthetic {
            m,
            n,
            n_planted,
            sparsity,
            noise_sigma,
            seed,
        } => {
            let (signals, _, _) = synth(*m, *n, *n_planted, *sparsity, *seed, *noise_sigma)?;
            let mut sig = finish_without_scaling(signals.values, spec)?;
            sig.provenance = signals.provenance;
            Ok(sig)
        }
        DataSource::SyntheticStrokes {
            side,
            n,
            vocabulary,
            strokes_per_image,
            noise_sigma,
            seed,
        } => {
            let values = synth_strokes(*side, *n, *vocabulary, *strokes_per_image, *noise_sigma, *seed)?;
            let provenance = format!("synthetic strokes {side}x{side}, N={n}, seed={seed}");
            let mut sig = finish_without_scaling(values, spec)?;
            sig.provenance = provenance;
            Ok(sig)
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| RkdlError::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| RkdlError::format(path, format!("truncated header at offset {offset}")))
}

/// Parsed IDX image file: pixel bytes, image count and per-image size.
struct IdxImages {
    pixels: Vec<u8>,
    count: usize,
    size: usize,
}

fn parse_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(RkdlError::format(
            path,
            format!("bad magic number {magic} at offset 0, expected {IDX_IMAGES_MAGIC}"),
        ));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let size = rows * cols;
    let expected = 16 + count * size;
    if bytes.len() != expected {
        return Err(RkdlError::format(
            path,
            format!("expected {expected} bytes for {count} images of {rows}x{cols}, found {}", bytes.len()),
        ));
    }
    Ok(IdxImages {
        pixels: bytes[16..].to_vec(),
        count,
        size,
    })
}

/// Reads an IDX label file (magic 2049).
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(RkdlError::format(
            path,
            format!("bad magic number {magic} at offset 0, expected {IDX_LABELS_MAGIC}"),
        ));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() != 8 + count {
        return Err(RkdlError::format(
            path,
            format!("expected {} bytes for {count} labels, found {}", 8 + count, bytes.len()),
        ));
    }
    Ok(bytes[8..].to_vec())
}

/// Loads MNIST-style IDX images and labels; each image becomes one column
/// with its pixels in storage (row-major) order.
pub fn load_idx(images_path: &Path, labels_path: &Path, spec: &DatasetSpec) -> Result<SignalMatrix> {
    let images = parse_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != images.count {
        return Err(RkdlError::format(
            labels_path,
            format!("{} labels for {} images", labels.len(), images.count),
        ));
    }
    let selected = select_records(&labels, spec);
    let mut values = Array2::<f64>::zeros((images.size, selected.len()));
    for (c, &r) in selected.iter().enumerate() {
        let px = &images.pixels[r * images.size..(r + 1) * images.size];
        for (i, &p) in px.iter().enumerate() {
            values[[i, c]] = p as f64;
        }
    }
    let provenance = format!(
        "idx {} (label filter {:?}, {} signals)",
        images_path.display(),
        spec.label_filter,
        selected.len()
    );
    finish(values, spec, provenance)
}

fn select_records(labels: &[u8], spec: &DatasetSpec) -> Vec<usize> {
    let iter = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| spec.label_filter.is_none_or(|f| f == l))
        .map(|(i, _)| i);
    match spec.max_signals {
        Some(k) => iter.take(k).collect(),
        None => iter.collect(),
    }
}

/// Loads CIFAR-10 binary batches, converting every record to a 1024-pixel
/// grayscale column.
pub fn load_cifar10(batch_paths: &[PathBuf], spec: &DatasetSpec) -> Result<SignalMatrix> {
    if batch_paths.is_empty() {
        return Err(RkdlError::InvalidParameter("no CIFAR-10 batch files given".into()));
    }
    let mut columns: Vec<[f64; CIFAR_PIXELS]> = Vec::new();
    let limit = spec.max_signals.unwrap_or(usize::MAX);
    'files: for path in batch_paths {
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            let records = bytes.len() / CIFAR_RECORD_BYTES;
            return Err(RkdlError::format(
                path,
                format!(
                    "size {} is not a multiple of {CIFAR_RECORD_BYTES}; expected {} bytes for {} records",
                    bytes.len(),
                    (records + 1) * CIFAR_RECORD_BYTES,
                    records + 1
                ),
            ));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            if columns.len() >= limit {
                break 'files;
            }
            let label = record[0];
            if spec.label_filter.is_some_and(|f| f != label) {
                continue;
            }
            let (r, rest) = record[1..].split_at(CIFAR_PIXELS);
            let (g, b) = rest.split_at(CIFAR_PIXELS);
            let mut px = [0.0; CIFAR_PIXELS];
            for i in 0..CIFAR_PIXELS {
                let (rv, gv, bv) = (r[i] as f64, g[i] as f64, b[i] as f64);
                px[i] = match spec.grayscale {
                    Grayscale::Mean => (rv + gv + bv) / 3.0,
                    Grayscale::Luminance => 0.299 * rv + 0.587 * gv + 0.114 * bv,
                };
            }
            columns.push(px);
        }
    }
    let mut values = Array2::<f64>::zeros((CIFAR_PIXELS, columns.len()));
    for (c, px) in columns.iter().enumerate() {
        for (i, &v) in px.iter().enumerate() {
            values[[i, c]] = v;
        }
    }
    let provenance = format!(
        "cifar-10 {} batch file(s) (label filter {:?}, {} signals)",
        batch_paths.len(),
        spec.label_filter,
        columns.len()
    );
    finish(values, spec, provenance)
}

/// Loads a headerless numeric CSV.
pub fn load_csv(path: &Path, layout: CsvLayout, spec: &DatasetSpec) -> Result<SignalMatrix> {
    let raw = read_csv_matrix(path)?;
    let mut values = match layout {
        CsvLayout::SignalsAsRows => raw.reversed_axes(),
        CsvLayout::SignalsAsColumns => raw,
    };
    if let Some(k) = spec.max_signals {
        if k < values.ncols() {
            values = values.slice(ndarray::s![.., ..k]).to_owned();
        }
    }
    let values = values.as_standard_layout().into_owned();
    finish_without_scaling(values, spec).map(|mut s| {
        s.provenance = format!("csv {}", path.display());
        s
    })
}

/// Reads a headerless numeric CSV as a row-major matrix.
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RkdlError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| RkdlError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(RkdlError::format(
                path,
                format!("row {r} has {} fields, expected {}", record.len(), width.unwrap()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                RkdlError::format(path, format!("non-numeric cell {field:?} at row {r}, column {c}"))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((rows, width), data)
        .map_err(|e| RkdlError::format(path, e.to_string()))
}

/// Writes a matrix as headerless CSV, one matrix row per line. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv_matrix(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| RkdlError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    for row in m.axis_iter(Axis(0)) {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| RkdlError::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
    }
    writer.flush().map_err(|e| RkdlError::io(path, e))
}

fn finish(mut values: Array2<f64>, spec: &DatasetSpec, provenance: String) -> Result<SignalMatrix> {
    match spec.normalize {
        Normalization::None => {}
        Normalization::Unit01 => values.mapv_inplace(|v| v / 255.0),
        Normalization::PerColumnL2 => l2_columns(&mut values),
    }
    SignalMatrix::new(values, provenance)
}

/// Normalization for sources that are not byte images: `Unit01` is a
/// no-op there.
fn finish_without_scaling(mut values: Array2<f64>, spec: &DatasetSpec) -> Result<SignalMatrix> {
    if spec.normalize == Normalization::PerColumnL2 {
        l2_columns(&mut values);
    }
    SignalMatrix::new(values, "")
}

fn l2_columns(values: &mut Array2<f64>) {
    for mut c in values.axis_iter_mut(Axis(1)) {
        let n = c.dot(&c).sqrt();
        if n > 0.0 {
            c /= n;
        }
    }
}

/// Planted sparse model: `Y = D*X* + noise` with `n_planted` unit-norm
/// Gaussian atoms and exactly `s` standard-normal coefficients per signal.
pub fn synth(
    m: usize,
    n: usize,
    n_planted: usize,
    s: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<(SignalMatrix, Dictionary, SparseCode)> {
    if s == 0 || s > n_planted || m == 0 || n == 0 {
        return Err(RkdlError::InvalidParameter(format!(
            "synthetic model needs 1 <= s <= n_planted (s={s}, n_planted={n_planted}), m, n > 0"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Array2::from_shape_simple_fn((m, n_planted), || rng.sample::<f64, _>(StandardNormal));
    let dict = Dictionary::normalized(raw)?;
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        let mut support = sample(&mut rng, n_planted, s).into_vec();
        support.sort_unstable();
        let values = (0..s).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        columns.push(SparseColumn { support, values });
    }
    let code = SparseCode::from_columns(n_planted, columns)?;
    let mut y = dict.atoms.dot(&code.to_dense());
    if noise_sigma > 0.0 {
        y.mapv_inplace(|v| v + noise_sigma * rng.sample::<f64, _>(StandardNormal));
    }
    let signals = SignalMatrix::new(y, format!("synthetic planted m={m}, N={n}, n={n_planted}, s={s}, seed={seed}"))?;
    Ok((signals, dict, code))
}

/// Digit-like synthetic images (`side²` pixels in `[0, 1]`): a vocabulary of
/// random thick line segments, and each image overlays
/// `strokes_per_image` of them with random intensities.
pub fn synth_strokes(
    side: usize,
    n: usize,
    vocabulary: usize,
    strokes_per_image: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    if side < 4 || n == 0 || strokes_per_image == 0 || strokes_per_image > vocabulary {
        return Err(RkdlError::InvalidParameter(
            "synthetic strokes need side >= 4, n > 0 and 1 <= strokes_per_image <= vocabulary".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = side * side;
    let lo = side as f64 * 0.15;
    let hi = side as f64 * 0.85;
    let strokes: Vec<Vec<f64>> = (0..vocabulary)
        .map(|_| {
            let (x0, y0) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
            let (x1, y1) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
            let width = rng.random_range(0.8..1.6);
            let mut img = vec![0.0; m];
            for r in 0..side {
                for c in 0..side {
                    let dist = segment_distance(c as f64, r as f64, x0, y0, x1, y1);
                    img[r * side + c] = (1.0 - (dist / width).powi(2)).max(0.0);
                }
            }
            img
        })
        .collect();
    let mut values = Array2::<f64>::zeros((m, n));
    for mut col in values.axis_iter_mut(Axis(1)) {
        for k in sample(&mut rng, vocabulary, strokes_per_image).into_iter() {
            let intensity = rng.random_range(0.6..1.0);
            for (v, s) in col.iter_mut().zip(&strokes[k]) {
                *v += intensity * s;
            }
        }
        for v in col.iter_mut() {
            let noisy = if noise_sigma > 0.0 {
                *v + noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                *v
            };
            *v = noisy.clamp(0.0, 1.0);
        }
    }
    Ok(values)
}

fn segment_distance(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkdl_core::datasets::{
    load, read_csv_matrix, read_idx_labels, synth, synth_strokes, write_csv_matrix, CsvLayout, DataSource,
    DatasetSpec, Grayscale, Normalization,
};
use rkdl_core::RkdlError;
use tempfile::TempDir;

/// Writes an MNIST-layout image/label pair with `count` 28×28 images.
fn write_idx(dir: &Path, labels: &[u8], seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Vec::new();
    img.extend_from_slice(&2051u32.to_be_bytes());
    img.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    img.extend_from_slice(&28u32.to_be_bytes());
    img.extend_from_slice(&28u32.to_be_bytes());
    for _ in 0..labels.len() * 784 {
        img.push(rng.random());
    }
    let mut lab = Vec::new();
    lab.extend_from_slice(&2049u32.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    let ip = dir.join("train-images-idx3-ubyte");
    let lp = dir.join("train-labels-idx1-ubyte");
    fs::write(&ip, img).unwrap();
    fs::write(&lp, lab).unwrap();
    (ip, lp)
}

fn random_labels(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..10u8)).collect()
}

fn idx_spec(images: PathBuf, labels: PathBuf) -> DatasetSpec {
    DatasetSpec::new(DataSource::Idx { images, labels })
}

#[test]
fn idx_label_filter_matches_independent_histogram() {
    let dir = TempDir::new().unwrap();
    let labels = random_labels(600, 1);
    let (ip, lp) = write_idx(dir.path(), &labels, 2);

    // histogram straight from the label file bytes
    let raw = fs::read(&lp).unwrap();
    let mut hist: HashMap<u8, usize> = HashMap::new();
    for &b in &raw[8..] {
        *hist.entry(b).or_default() += 1;
    }

    for digit in [0u8, 5, 9] {
        let mut spec = idx_spec(ip.clone(), lp.clone());
        spec.label_filter = Some(digit);
        let sig = load(&spec).unwrap();
        assert_eq!(sig.len(), hist[&digit]);
        assert_eq!(sig.dim(), 784);
    }
    assert_eq!(read_idx_labels(&lp).unwrap(), labels);
}

#[test]
fn idx_pixels_land_in_columns_scaled_to_unit_interval() {
    let dir = TempDir::new().unwrap();
    let labels = vec![3, 5, 5, 1];
    let (ip, lp) = write_idx(dir.path(), &labels, 3);
    let bytes = fs::read(&ip).unwrap();
    let mut spec = idx_spec(ip, lp);
    spec.label_filter = Some(5);
    let sig = load(&spec).unwrap();
    assert_eq!(sig.len(), 2);
    // second image of the file is the first label-5 record
    for i in [0usize, 17, 783] {
        assert_eq!(sig.values[[i, 0]], bytes[16 + 784 + i] as f64 / 255.0);
        assert_eq!(sig.values[[i, 1]], bytes[16 + 2 * 784 + i] as f64 / 255.0);
    }

    spec.normalize = Normalization::None;
    let raw = load(&spec).unwrap();
    assert_eq!(raw.values[[17, 0]], bytes[16 + 784 + 17] as f64);

    spec.max_signals = Some(1);
    assert_eq!(load(&spec).unwrap().len(), 1);
}

#[test]
fn idx_bad_magic_is_reported_with_offset() {
    let dir = TempDir::new().unwrap();
    let (ip, lp) = write_idx(dir.path(), &[1, 2], 4);
    let mut bytes = fs::read(&ip).unwrap();
    bytes[..4].copy_from_slice(&2049u32.to_be_bytes());
    fs::write(&ip, bytes).unwrap();
    let err = load(&idx_spec(ip, lp)).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, RkdlError::Format { .. }));
    assert!(msg.contains("bad magic number 2049 at offset 0"), "{msg}");
}

#[test]
fn idx_truncation_and_count_mismatch_fail() {
    let dir = TempDir::new().unwrap();
    let (ip, lp) = write_idx(dir.path(), &[1, 2, 3], 5);
    let bytes = fs::read(&ip).unwrap();
    fs::write(&ip, &bytes[..bytes.len() - 10]).unwrap();
    assert!(load(&idx_spec(ip.clone(), lp.clone())).unwrap_err().to_string().contains("expected"));

    fs::write(&ip, &bytes).unwrap();
    let mut lab = fs::read(&lp).unwrap();
    lab[4..8].copy_from_slice(&2u32.to_be_bytes());
    lab.pop();
    fs::write(&lp, lab).unwrap();
    let msg = load(&idx_spec(ip, lp)).unwrap_err().to_string();
    assert!(msg.contains("2 labels for 3 images"), "{msg}");
}

#[test]
fn missing_file_is_an_io_error() {
    let spec = idx_spec("/nonexistent/images".into(), "/nonexistent/labels".into());
    assert!(matches!(load(&spec).unwrap_err(), RkdlError::Io { .. }));
}

/// CIFAR-10 binary batch: label byte then 1024 R, 1024 G, 1024 B bytes.
fn write_cifar(path: &Path, labels: &[u8], seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = Vec::with_capacity(labels.len() * 3073);
    for &l in labels {
        bytes.push(l);
        for _ in 0..3072 {
            bytes.push(rng.random());
        }
    }
    fs::write(path, &bytes).unwrap();
    bytes
}

#[test]
fn cifar_label_filter_counts_across_batches() {
    let dir = TempDir::new().unwrap();
    let mut paths = Vec::new();
    let mut zeros = 0;
    for b in 0..3 {
        // 10 records per class, shuffled
        let mut labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(b);
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        zeros += labels.iter().filter(|&&l| l == 0).count();
        let p = dir.path().join(format!("data_batch_{}.bin", b + 1));
        write_cifar(&p, &labels, 10 + b);
        paths.push(p);
    }
    let mut spec = DatasetSpec::new(DataSource::Cifar10 { batches: paths });
    spec.label_filter = Some(0);
    let sig = load(&spec).unwrap();
    assert_eq!(sig.len(), zeros);
    assert_eq!(sig.len(), 30);
    assert_eq!(sig.dim(), 1024);
    assert!(sig.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn cifar_grayscale_conversions() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("batch.bin");
    let bytes = write_cifar(&p, &[4, 0], 7);
    let mut spec = DatasetSpec::new(DataSource::Cifar10 { batches: vec![p] });
    spec.normalize = Normalization::None;
    let mean = load(&spec).unwrap();
    spec.grayscale = Grayscale::Luminance;
    let luma = load(&spec).unwrap();
    for (c, rec) in [0usize, 1].iter().enumerate() {
        let base = rec * 3073 + 1;
        for i in [0usize, 500, 1023] {
            let (r, g, b) = (bytes[base + i] as f64, bytes[base + 1024 + i] as f64, bytes[base + 2048 + i] as f64);
            assert!((mean.values[[i, c]] - (r + g + b) / 3.0).abs() < 1e-12);
            assert!((luma.values[[i, c]] - (0.299 * r + 0.587 * g + 0.114 * b)).abs() < 1e-12);
        }
    }
}

#[test]
fn cifar_partial_record_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("batch.bin");
    let bytes = write_cifar(&p, &[1, 2], 8);
    fs::write(&p, &bytes[..3073 + 100]).unwrap();
    let msg = load(&DatasetSpec::new(DataSource::Cifar10 { batches: vec![p] })).unwrap_err().to_string();
    assert!(msg.contains("not a multiple of 3073"), "{msg}");
}

#[test]
fn csv_layouts_and_filters() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("y.csv");
    fs::write(&p, "1,2,3\n4,5,6\n").unwrap();
    let rows = load(&DatasetSpec::new(DataSource::Csv {
        path: p.clone(),
        layout: CsvLayout::SignalsAsRows,
    }))
    .unwrap();
    assert_eq!((rows.dim(), rows.len()), (3, 2));
    assert_eq!(rows.values[[2, 1]], 6.0);

    let mut spec = DatasetSpec::new(DataSource::Csv {
        path: p.clone(),
        layout: CsvLayout::SignalsAsColumns,
    });
    let cols = load(&spec).unwrap();
    assert_eq!((cols.dim(), cols.len()), (2, 3));
    assert_eq!(cols.values[[1, 0]], 4.0);

    spec.label_filter = Some(1);
    assert!(load(&spec).is_err());

    fs::write(&p, "1,2\n3\n").unwrap();
    assert!(read_csv_matrix(&p).is_err());
    fs::write(&p, "1,x\n").unwrap();
    assert!(read_csv_matrix(&p).unwrap_err().to_string().contains("non-numeric"));
}

#[test]
fn per_column_normalization() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("y.csv");
    fs::write(&p, "3,4\n0,2\n").unwrap();
    let mut spec = DatasetSpec::new(DataSource::Csv {
        path: p,
        layout: CsvLayout::SignalsAsRows,
    });
    spec.normalize = Normalization::PerColumnL2;
    let sig = load(&spec).unwrap();
    assert_eq!(sig.values.column(0).to_vec(), vec![0.6, 0.8]);
    assert_eq!(sig.values.column(1).to_vec(), vec![0.0, 1.0]);
}

#[test]
fn non_finite_csv_values_are_rejected() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("y.csv");
    fs::write(&p, "1,NaN\n").unwrap();
    let spec = DatasetSpec::new(DataSource::Csv {
        path: p,
        layout: CsvLayout::SignalsAsRows,
    });
    assert!(load(&spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip_is_bit_identical(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 12)
    ) {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("m.csv");
        let m = Array2::from_shape_vec((3, 4), values).unwrap();
        write_csv_matrix(&p, m.view()).unwrap();
        let back = read_csv_matrix(&p).unwrap();
        prop_assert_eq!(back.dim(), (3, 4));
        for (a, b) in m.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn planted_model_is_exact_and_deterministic() {
    let (y, d, x) = synth(10, 50, 6, 3, 4, 0.0).unwrap();
    let recon = d.view().dot(&x.to_dense());
    assert!((&recon - &y.values).iter().all(|v| v.abs() < 1e-12));
    assert!(x.columns().iter().all(|c| c.support.len() == 3));
    assert!(d.max_norm_deviation() < 1e-12);
    let (y2, _, _) = synth(10, 50, 6, 3, 4, 0.0).unwrap();
    assert_eq!(y.values, y2.values);
    let (y3, _, _) = synth(10, 50, 6, 3, 5, 0.0).unwrap();
    assert_ne!(y.values, y3.values);
}

#[test]
fn synthetic_source_is_not_rescaled() {
    let spec = DatasetSpec::new(DataSource::Synthetic {
        m: 6,
        n: 20,
        n_planted: 4,
        sparsity: 2,
        noise_sigma: 0.0,
        seed: 1,
    });
    let sig = load(&spec).unwrap();
    let (y, _, _) = synth(6, 20, 4, 2, 1, 0.0).unwrap();
    assert_eq!(sig.values, y.values);
}

#[test]
fn stroke_images_are_in_unit_range_and_seeded() {
    let a = synth_strokes(12, 30, 8, 3, 0.05, 2).unwrap();
    assert_eq!(a.dim(), (144, 30));
    assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(a.columns().into_iter().all(|c| c.iter().any(|&v| v > 0.5)));
    assert_eq!(a, synth_strokes(12, 30, 8, 3, 0.05, 2).unwrap());
    assert_ne!(a, synth_strokes(12, 30, 8, 3, 0.05, 3).unwrap());
}

#[test]
fn dataset_spec_round_trips_through_json() {
    let mut spec = DatasetSpec::new(DataSource::Idx {
        images: "a".into(),
        labels: "b".into(),
    });
    spec.label_filter = Some(5);
    let text = serde_json::to_string(&spec).unwrap();
    assert!(text.contains("\"kind\":\"idx\""));
    let back: DatasetSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    let minimal: DatasetSpec =
        serde_json::from_str(r#"{"source": {"kind": "synthetic_strokes", "side": 8, "n": 5, "vocabulary": 4, "strokes_per_image": 2}}"#)
            .unwrap();
    assert_eq!(minimal.normalize, Normalization::Unit01);
}

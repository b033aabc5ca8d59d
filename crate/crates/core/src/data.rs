//! Synthetic datasets and their CSV form.
//!
//! CSV layout: a header row `x0,…,x{n-1},label` (the label column is omitted
//! for unlabeled data) and one sample per row.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{AnalyticManifold, EmbeddedCircle};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if dim == 0 || features.len() % dim != 0 {
            return Err(Error::Dataset(format!(
                "{} values do not split into rows of {dim}",
                features.len()
            )));
        }
        let rows = features.len() / dim;
        if let Some(l) = &labels {
            if l.len() != rows {
                return Err(Error::Dataset(format!(
                    "{} labels for {rows} samples",
                    l.len()
                )));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, i: usize) -> Tensor {
        Tensor::vector(self.row(i).to_vec())
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    /// Rows `indices` stacked into a `[len, dim]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor::from_raw(vec![indices.len(), self.dim], data).expect("rows have dim values")
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            features: self.batch(indices).into_data(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Seeded shuffle split into `(train, held_out)` index sets.
    pub fn split_indices(&self, held_out_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((self.len() as f64) * held_out_fraction).round() as usize;
        let n_test = n_test.min(self.len().saturating_sub(1));
        let test = idx.split_off(self.len() - n_test);
        (idx, test)
    }

    /// Per-coordinate mean, used for mean-imputation baselines.
    pub fn mean(&self) -> Tensor {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (a, v) in m.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let n = self.len().max(1) as f64;
        Tensor::vector(m.into_iter().map(|v| v / n).collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            if let Some(l) = self.label(i) {
                rec.push(l.to_string());
            }
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        let label_col = header.iter().position(|h| h == "label");
        let dim = header.len() - usize::from(label_col.is_some());
        let mut features = Vec::new();
        let mut labels = label_col.map(|_| Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            for (col, field) in rec.iter().enumerate() {
                if Some(col) == label_col {
                    let l = field.trim().parse::<usize>().map_err(|_| {
                        Error::Dataset(format!("row {row}: bad label {field:?}"))
                    })?;
                    labels.as_mut().unwrap().push(l);
                } else {
                    features.push(field.trim().parse::<f64>().map_err(|_| {
                        Error::Dataset(format!("row {row}, column {col}: bad value {field:?}"))
                    })?);
                }
            }
        }
        Dataset::new(dim, features, labels)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Dataset(format!("{}: {e}", path.display()))
}

/// Points on an embedded unit circle labeled by angular sector.
///
/// Angles are uniform on `[-π, π)`; sector `c` covers
/// `[-π + c·2π/classes, -π + (c+1)·2π/classes)`.
pub fn circle_dataset(
    circle: &EmbeddedCircle,
    count: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Dataset("zero samples requested".into()));
    }
    if classes == 0 {
        return Err(Error::Dataset("need at least one class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = circle.ambient_dim();
    let mut features = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let theta: f64 = rng.random_range(-PI..PI);
        let sector = (((theta + PI) / TAU) * classes as f64).floor() as usize;
        labels.push(sector.min(classes - 1));
        let x = circle.chart(&[theta]);
        features.extend(x.into_iter().map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v + noise * e
        }));
    }
    Dataset::new(n, features, Some(labels))
}

/// Two Gaussian blobs at `±separation/2` along a random unit direction.
pub fn blobs_dataset(dim: usize, count: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Dataset("zero samples requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let len = crate::tensor::norm(&dir);
    let dir: Vec<f64> = dir.iter().map(|v| v / len).collect();
    let mut features = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let sign = if label == 1 { 0.5 } else { -0.5 };
        for d in &dir {
            let e: f64 = rng.sample(StandardNormal);
            features.push(sign * separation * d + e);
        }
        labels.push(label);
    }
    Dataset::new(dim, features, Some(labels))
}

pub const SHAPE_SIDE: usize = 8;

/// 8×8 images of hollow squares (label 0) and plus-shaped crosses (label 1)
/// at random positions and sizes, with additive Gaussian pixel noise.
pub fn shapes_dataset(count: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Dataset("zero samples requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SHAPE_SIDE * SHAPE_SIDE;
    let mut features = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let mut img = vec![0.0; n];
        let intensity = rng.random_range(0.7..1.0);
        // below size 5 squares and crosses overlap too much for a centroid rule
        let size = rng.random_range(5..=7usize);
        let top = rng.random_range(0..=SHAPE_SIDE - size);
        let left = rng.random_range(0..=SHAPE_SIDE - size);
        for r in 0..size {
            for c in 0..size {
                let on = if label == 0 {
                    r == 0 || c == 0 || r == size - 1 || c == size - 1
                } else {
                    r == size / 2 || c == size / 2
                };
                if on {
                    img[(top + r) * SHAPE_SIDE + left + c] = intensity;
                }
            }
        }
        for v in &mut img {
            let e: f64 = rng.sample(StandardNormal);
            *v += noise * e;
        }
        features.extend(img);
        labels.push(label);
    }
    Dataset::new(n, features, Some(labels))
}

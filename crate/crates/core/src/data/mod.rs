//! Gross training set handling: loading, synthetic generation, stratified
//! train/validation splitting and mini-batch iteration.

mod batch;
mod csv_io;
mod split;
mod synthetic;

pub use batch::BatchIterator;
pub use csv_io::{load_csv, write_csv};
pub use split::{sample_split, SplitPair};
pub use synthetic::{blob_centroid, make_synthetic, SyntheticKind};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};

/// An immutable labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    name: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::InvalidDataset("class_count must be positive".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if labels.len() < class_count {
            return Err(Error::InvalidDataset(format!(
                "{} samples cannot cover {class_count} classes",
                labels.len()
            )));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::InvalidLabel {
                index,
                label,
                class_count,
            });
        }
        if features.as_slice().iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidDataset("NaN feature".into()));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows `indices`, in the given order, as a labeled batch.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Dataset> {
        let batch = self.batch(indices);
        Dataset::new(name, batch.inputs, batch.labels, self.class_count)
    }

    /// Indices of each class, ascending.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Replaces the labels of `round(fraction * n)` distinct samples with a
    /// uniformly chosen different class.
    pub fn with_label_noise(&self, fraction: f64, seed: u64) -> Result<Dataset> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidDataset(format!(
                "label noise fraction must be in [0, 1], got {fraction}"
            )));
        }
        if self.class_count < 2 {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = (fraction * self.len() as f64).round() as usize;
        let mut labels = self.labels.clone();
        for i in index::sample(&mut rng, self.len(), count).into_vec() {
            let shift = rng.random_range(1..self.class_count);
            labels[i] = (labels[i] + shift) % self.class_count;
        }
        Dataset::new(self.name.clone(), self.features.clone(), labels, self.class_count)
    }
}

/// Layout of image-shaped feature rows, stored as `(height, width, channels)`
/// row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// Mirrors an image-shaped feature row left to right in place.
pub fn flip_horizontal(row: &mut [f64], shape: ImageShape) -> Result<()> {
    let expected = shape.height * shape.width * shape.channels;
    if row.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "image row length",
            expected,
            actual: row.len(),
        });
    }
    let stride = shape.width * shape.channels;
    for line in row.chunks_mut(stride) {
        for x in 0..shape.width / 2 {
            let mirror = shape.width - 1 - x;
            for c in 0..shape.channels {
                line.swap(x * shape.channels + c, mirror * shape.channels + c);
            }
        }
    }
    Ok(())
}

/// Flips each row of `batch` with probability one half.
pub fn random_flip<R: Rng>(batch: &mut Batch, shape: ImageShape, rng: &mut R) -> Result<()> {
    for i in 0..batch.inputs.rows() {
        if rng.random_bool(0.5) {
            flip_horizontal(batch.inputs.row_mut(i), shape)?;
        }
    }
    Ok(())
}

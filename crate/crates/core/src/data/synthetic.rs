//! Two-dimensional toy datasets.
//!
//! | kind        | classes | class `k` generator                                          |
//! |-------------|---------|--------------------------------------------------------------|
//! | `blobs`     | any     | centroid `2 (cos 2πk/C, sin 2πk/C)` + `N(0, σ²)` per axis     |
//! | `two_moons` | 2       | `t ~ U[0, π]`; k=0: `(cos t, sin t)`, k=1: `(1 - cos t, 0.5 - sin t)`, + `N(0, σ²)` per axis |
//! | `ring`      | any     | angle `a ~ U[0, 2π)`, radius `k + 1 + N(0, σ²)`               |
//!
//! Sample `i` belongs to class `i mod C`, so class counts differ by at most one.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Blobs,
    TwoMoons,
    Ring,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Blobs => "blobs",
            SyntheticKind::TwoMoons => "two_moons",
            SyntheticKind::Ring => "ring",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "blobs" => Ok(SyntheticKind::Blobs),
            "two_moons" => Ok(SyntheticKind::TwoMoons),
            "ring" => Ok(SyntheticKind::Ring),
            other => Err(format!("unknown synthetic kind '{other}'")),
        }
    }
}

pub fn blob_centroid(class: usize, class_count: usize) -> [f64; 2] {
    let angle = 2.0 * PI * class as f64 / class_count as f64;
    [2.0 * angle.cos(), 2.0 * angle.sin()]
}

pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    class_count: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count == 0 || n < class_count {
        return Err(Error::InvalidDataset(format!(
            "need n >= class_count >= 1, got n={n}, class_count={class_count}"
        )));
    }
    if kind == SyntheticKind::TwoMoons && class_count != 2 {
        return Err(Error::InvalidDataset(format!(
            "two_moons requires 2 classes, got {class_count}"
        )));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidDataset(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % class_count;
        let point = match kind {
            SyntheticKind::Blobs => {
                let [cx, cy] = blob_centroid(class, class_count);
                [cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]
            }
            SyntheticKind::TwoMoons => {
                let t = rng.random_range(0.0..=PI);
                let (x, y) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                [x + noise.sample(&mut rng), y + noise.sample(&mut rng)]
            }
            SyntheticKind::Ring => {
                let angle = rng.random_range(0.0..2.0 * PI);
                let radius = class as f64 + 1.0 + noise.sample(&mut rng);
                [radius * angle.cos(), radius * angle.sin()]
            }
        };
        data.extend_from_slice(&point);
        labels.push(class);
    }
    Dataset::new(kind.name(), Matrix::from_vec(n, 2, data), labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_balanced() {
        let ds = make_synthetic(SyntheticKind::Blobs, 100, 4, 0.5, 1).unwrap();
        let counts: Vec<usize> = ds.class_indices().iter().map(Vec::len).collect();
        assert_eq!(counts, vec![25, 25, 25, 25]);
        let uneven = make_synthetic(SyntheticKind::Ring, 103, 4, 0.1, 1).unwrap();
        let counts: Vec<usize> = uneven.class_indices().iter().map(Vec::len).collect();
        assert_eq!(counts, vec![26, 26, 26, 25]);
    }

    #[test]
    fn zero_noise_blobs_sit_on_centroids() {
        let ds = make_synthetic(SyntheticKind::Blobs, 30, 3, 0.0, 7).unwrap();
        for i in 0..ds.len() {
            let c = blob_centroid(ds.labels()[i], 3);
            assert_eq!(ds.features().row(i), &c);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in [SyntheticKind::Blobs, SyntheticKind::TwoMoons, SyntheticKind::Ring] {
            let a = make_synthetic(kind, 64, 2, 0.3, 5).unwrap();
            let b = make_synthetic(kind, 64, 2, 0.3, 5).unwrap();
            let c = make_synthetic(kind, 64, 2, 0.3, 6).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.features(), c.features());
        }
    }

    #[test]
    fn two_moons_needs_two_classes() {
        assert!(make_synthetic(SyntheticKind::TwoMoons, 30, 3, 0.1, 0).is_err());
        assert!(make_synthetic(SyntheticKind::Blobs, 2, 3, 0.1, 0).is_err());
    }

    #[test]
    fn ring_radius_tracks_class_without_noise() {
        let ds = make_synthetic(SyntheticKind::Ring, 40, 4, 0.0, 2).unwrap();
        for i in 0..ds.len() {
            let r = ds.features().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - (ds.labels()[i] + 1) as f64).abs() < 1e-12);
        }
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// One task's training/validation partition of the gross set. Both index
/// lists are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub val_ratio: f64,
    pub split_seed: u64,
}

/// Stratified random split.
///
/// The validation set has exactly `round(val_ratio * n)` samples. Per-class
/// quotas are apportioned by largest remainder (ties to the lower class), so
/// each class contributes `val_ratio * n_k` rounded up or down. Within a class
/// the chosen samples are a seeded uniform shuffle prefix.
pub fn sample_split(gross: &Dataset, val_ratio: f64, split_seed: u64) -> Result<SplitPair> {
    if !(val_ratio > 0.0 && val_ratio < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "val_ratio must be in (0, 1), got {val_ratio}"
        )));
    }
    let n = gross.len();
    let target = (val_ratio * n as f64).round() as usize;
    if target == 0 {
        return Err(Error::InvalidSplit(format!(
            "val_ratio {val_ratio} of {n} samples gives an empty validation set"
        )));
    }
    if target >= n {
        return Err(Error::InvalidSplit(format!(
            "val_ratio {val_ratio} of {n} samples leaves no training data"
        )));
    }

    let classes = gross.class_indices();
    let exact: Vec<f64> = classes.iter().map(|c| val_ratio * c.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    // Stable sort keeps lower class first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).expect("finite remainders")
    });
    for &k in order.iter().take(target - assigned) {
        quota[k] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut val_indices = Vec::with_capacity(target);
    let mut train_indices = Vec::with_capacity(n - target);
    for (members, &q) in classes.iter().zip(&quota) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        val_indices.extend_from_slice(&shuffled[..q]);
        train_indices.extend_from_slice(&shuffled[q..]);
    }
    val_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(SplitPair {
        train_indices,
        val_indices,
        val_ratio,
        split_seed,
    })
}

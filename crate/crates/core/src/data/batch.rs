use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::seed::{derive_seed, Stream};

/// Endless mini-batch stream over a fixed index set.
///
/// Epoch `e` visits a permutation of the indices seeded by
/// `derive_seed(shuffle_seed, Shuffle, e)`, cut into consecutive batches. The
/// final batch of an epoch may be short.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchIterator {
    indices: Vec<usize>,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
    cursor: usize,
    order: Vec<usize>,
}

impl BatchIterator {
    pub fn new(indices: Vec<usize>, batch_size: usize, shuffle_seed: u64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidDataset("batch iterator over no samples".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidOptimizer("batch_size must be positive".into()));
        }
        let mut it = Self {
            indices,
            batch_size,
            shuffle_seed,
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
        };
        it.reshuffle();
        Ok(it)
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.shuffle_seed, Stream::Shuffle, self.epoch));
        self.order.clone_from(&self.indices);
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }

    pub fn next_batch(&mut self, gross: &Dataset) -> Batch {
        let idx = self.next_indices();
        gross.batch(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_epoch_with_short_tail() {
        let mut it = BatchIterator::new((0..10).collect(), 4, 3).unwrap();
        let sizes: Vec<usize> = (0..6).map(|_| it.next_indices().len()).collect();
        assert_eq!(sizes, vec![4, 4, 2, 4, 4, 2]);
    }

    #[test]
    fn each_epoch_is_a_permutation() {
        let indices: Vec<usize> = (0..37).map(|i| i * 3).collect();
        let mut it = BatchIterator::new(indices.clone(), 5, 11).unwrap();
        let mut epochs = Vec::new();
        for _ in 0..3 {
            let mut seen = Vec::new();
            while seen.len() < indices.len() {
                seen.extend(it.next_indices());
            }
            epochs.push(seen.clone());
            seen.sort_unstable();
            assert_eq!(seen, indices);
        }
        assert_ne!(epochs[0], epochs[1]);
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = BatchIterator::new((0..50).collect(), 8, 99).unwrap();
        let mut b = BatchIterator::new((0..50).collect(), 8, 99).unwrap();
        for _ in 0..40 {
            assert_eq!(a.next_indices(), b.next_indices());
        }
    }
}

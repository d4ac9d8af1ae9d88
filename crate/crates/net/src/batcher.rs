//! Smart batching: every batch holds exactly two samples per label.
//!
//! Each epoch shuffles every label's sample pool and emits batches while all
//! labels can still contribute a pair; whatever remains carries over to the
//! next epoch's pool instead of being dropped (the count is reported).

use crate::{NetError, Result};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub struct SmartBatcher {
    /// All sample indices of each label.
    per_label: Vec<Vec<usize>>,
    /// Unconsumed indices carried from earlier epochs.
    carry: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl SmartBatcher {
    /// `labels[i]` is the label of sample `i`; every label in
    /// `0..num_labels` needs at least two samples.
    pub fn new(labels: &[usize], num_labels: usize, seed: u64) -> Result<Self> {
        let mut per_label = vec![Vec::new(); num_labels];
        for (i, &l) in labels.iter().enumerate() {
            per_label[l].push(i);
        }
        for (label, samples) in per_label.iter().enumerate() {
            if samples.len() < 2 {
                return Err(NetError::InsufficientLabelSamples { label, count: samples.len() });
            }
        }
        Ok(Self {
            carry: vec![Vec::new(); num_labels],
            per_label,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn batch_size(&self) -> usize {
        2 * self.per_label.len()
    }

    /// One epoch of batches plus the number of samples left in the carry.
    pub fn epoch(&mut self) -> (Vec<Vec<usize>>, usize) {
        let num_labels = self.per_label.len();
        let mut queues: Vec<Vec<usize>> = Vec::with_capacity(num_labels);
        for l in 0..num_labels {
            let mut fresh = self.per_label[l].clone();
            fresh.shuffle(&mut self.rng);
            let mut q = std::mem::take(&mut self.carry[l]);
            q.extend(fresh);
            queues.push(q);
        }
        let n_batches = queues.iter().map(|q| q.len() / 2).min().unwrap_or(0);
        let mut batches = vec![Vec::with_capacity(2 * num_labels); n_batches];
        for (l, q) in queues.iter_mut().enumerate() {
            let rest = q.split_off(n_batches * 2);
            for (b, pair) in q.chunks_exact(2).enumerate() {
                batches[b].extend_from_slice(pair);
            }
            self.carry[l] = rest;
        }
        let leftover = self.carry.iter().map(Vec::len).sum();
        (batches, leftover)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: &[usize]) -> Vec<usize> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(l, &c)| std::iter::repeat(l).take(c))
            .collect()
    }

    #[test]
    fn batches_have_two_samples_per_label() {
        let labels = labels(&[4, 4, 4, 4, 4, 4]);
        let mut batcher = SmartBatcher::new(&labels, 6, 1).unwrap();
        let (batches, leftover) = batcher.epoch();
        assert_eq!(batches.len(), 2);
        assert_eq!(leftover, 0);
        for batch in &batches {
            assert_eq!(batch.len(), 12);
            let mut hist = vec![0usize; 6];
            for &i in batch {
                hist[labels[i]] += 1;
            }
            assert!(hist.iter().all(|&h| h == 2));
        }
    }

    #[test]
    fn deficient_label_is_named() {
        let labels = vec![0, 0, 1, 1, 2, 2, 3];
        let err = SmartBatcher::new(&labels, 4, 0).unwrap_err();
        assert!(matches!(err, NetError::InsufficientLabelSamples { label: 3, count: 1 }));
    }

    #[test]
    fn same_seed_gives_identical_batch_sequences() {
        let labels = labels(&[6, 6, 6]);
        let mut a = SmartBatcher::new(&labels, 3, 42).unwrap();
        let mut b = SmartBatcher::new(&labels, 3, 42).unwrap();
        for _ in 0..3 {
            assert_eq!(a.epoch(), b.epoch());
        }
        let mut c = SmartBatcher::new(&labels, 3, 43).unwrap();
        assert_ne!(a.epoch().0, c.epoch().0);
    }

    #[test]
    fn leftovers_carry_into_the_next_epoch() {
        // label 0 has 5 samples: its odd one is never dropped, only carried
        let labels = labels(&[5, 4]);
        let mut batcher = SmartBatcher::new(&labels, 2, 7).unwrap();
        let (batches, leftover) = batcher.epoch();
        assert_eq!(batches.len(), 2);
        assert_eq!(leftover, 1);
        // next epoch: label 0 queues 1 + 5 = 6, label 1 queues 4; the batch
        // count is limited by label 1's two pairs, so label 0 carries 2
        let (batches, leftover) = batcher.epoch();
        assert_eq!(batches.len(), 2);
        assert_eq!(leftover, 2);
    }
}

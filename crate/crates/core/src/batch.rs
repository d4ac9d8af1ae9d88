//! Labelled embedding batches.
//!
//! An [`EmbeddingBatch`] holds an `N x D` matrix of embedding vectors and a
//! length-`N` vector of integer labels in `[0, num_labels)`. The metric
//! losses additionally require *smart-batch* structure: every label present
//! in the batch appears exactly twice, so each sample has exactly one
//! same-label partner to act as its positive.

use crate::matrix::{norm, Matrix};
use crate::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub vectors: Matrix,
    pub labels: Vec<usize>,
    pub num_labels: usize,
}

impl EmbeddingBatch {
    /// Build a batch, validating label range and shape agreement.
    pub fn new(vectors: Matrix, labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        if num_labels < 2 {
            return Err(CoreError::DimensionError(format!(
                "num_labels must be >= 2, got {num_labels}"
            )));
        }
        if labels.len() != vectors.rows() {
            return Err(CoreError::DimensionError(format!(
                "{} labels for {} vectors",
                labels.len(),
                vectors.rows()
            )));
        }
        for &l in &labels {
            if l >= num_labels {
                return Err(CoreError::LabelOutOfRange { label: l, num_labels });
            }
        }
        Ok(Self { vectors, labels, num_labels })
    }

    /// Row-normalised copy of the batch. Errors on a zero row.
    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            vectors: crate::loss::normalize(&self.vectors)?,
            labels: self.labels.clone(),
            num_labels: self.num_labels,
        })
    }

    /// True when every row has unit norm within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (0..self.vectors.rows()).all(|i| (norm(self.vectors.row(i)) - 1.0).abs() <= tol)
    }

    /// Smart-batch pairing: for each label present, the indices of its first
    /// and second occurrence, ordered by first occurrence.
    ///
    /// Errors with `DegenerateBatch` when a label does not appear exactly
    /// twice or fewer than two labels are present.
    pub fn smart_pairs(&self) -> Result<Vec<LabelPair>> {
        let mut pairs: Vec<LabelPair> = Vec::new();
        for (idx, &label) in self.labels.iter().enumerate() {
            match pairs.iter_mut().find(|p| p.label == label) {
                None => pairs.push(LabelPair { label, first: idx, second: usize::MAX }),
                Some(p) if p.second == usize::MAX => p.second = idx,
                Some(p) => {
                    return Err(CoreError::DegenerateBatch {
                        reason: format!(
                            "label {} appears more than twice (third at index {})",
                            p.label, idx
                        ),
                    })
                }
            }
        }
        if let Some(p) = pairs.iter().find(|p| p.second == usize::MAX) {
            return Err(CoreError::DegenerateBatch {
                reason: format!("label {} has no positive partner", p.label),
            });
        }
        if pairs.len() < 2 {
            return Err(CoreError::DegenerateBatch {
                reason: "fewer than two distinct labels".into(),
            });
        }
        Ok(pairs)
    }

    /// The same-label partner of sample `idx` in a smart batch.
    pub fn partner_of(&self, idx: usize, pairs: &[LabelPair]) -> usize {
        let p = pairs.iter().find(|p| p.label == self.labels[idx]).unwrap();
        if p.first == idx {
            p.second
        } else {
            p.first
        }
    }
}

/// One label's (first, second) sample indices inside a smart batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelPair {
    pub label: usize,
    pub first: usize,
    pub second: usize,
}

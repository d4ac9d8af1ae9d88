//! Central finite-difference verification of analytic gradients.
//!
//! Differences are taken on the *raw* (pre-normalisation) batch coordinates,
//! so the normalisation Jacobian is exercised on both the analytic and the
//! numeric path.

use crate::batch::EmbeddingBatch;
use crate::loss::LossOutput;
use crate::matrix::Matrix;
use crate::Result;

/// Central-difference gradient estimate of `loss_fn` at `batch`, per raw
/// coordinate. `h` must lie in `[1e-7, 1e-3]`.
pub fn finite_diff_gradient<F>(loss_fn: F, batch: &EmbeddingBatch, h: f64) -> Result<Matrix>
where
    F: Fn(&EmbeddingBatch) -> Result<LossOutput>,
{
    assert!((1e-7..=1e-3).contains(&h), "step h = {h} outside [1e-7, 1e-3]");
    let mut grads = Matrix::zeros(batch.vectors.rows(), batch.vectors.cols());
    let mut probe = batch.clone();
    for i in 0..batch.vectors.rows() {
        for j in 0..batch.vectors.cols() {
            let orig = batch.vectors.get(i, j);
            probe.vectors.set(i, j, orig + h);
            let plus = loss_fn(&probe)?.value;
            probe.vectors.set(i, j, orig - h);
            let minus = loss_fn(&probe)?.value;
            probe.vectors.set(i, j, orig);
            grads.set(i, j, (plus - minus) / (2.0 * h));
        }
    }
    Ok(grads)
}

/// Worst-case relative error between two gradients, with near-zero entries
/// (below `abs_floor`) compared absolutely.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, abs_floor: f64) -> f64 {
    assert_eq!(analytic.rows(), numeric.rows());
    assert_eq!(analytic.cols(), numeric.cols());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs());
            let diff = (a - n).abs();
            if denom < abs_floor {
                diff
            } else {
                diff / denom
            }
        })
        .fold(0.0, f64::max)
}

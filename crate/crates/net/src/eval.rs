//! Prediction post-processing and test-split metrics.
//!
//! Raw regression outputs are optionally exponentially smoothed (the filter
//! state resets at every recording boundary, since recordings are
//! independent scenes), then rounded half-away-from-zero and clamped to the
//! label range. `accuracy_pm1` additionally counts predictions one count
//! away from the truth.

use crate::network::ConvNet;
use crate::{NetError, Result};
use lar_core::smoothing::SmoothingState;
use lar_radar::dataset::{Dataset, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub accuracy_pm1: f64,
    /// `confusion[true_label][predicted_label]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_samples: usize,
}

fn round_and_clamp(raw: f64, num_labels: usize) -> usize {
    let rounded = raw.round().max(0.0);
    (rounded as usize).min(num_labels - 1)
}

/// Predict integer counts for one time-ordered frame sequence.
///
/// With smoothing enabled the raw predictions pass through the filter before
/// rounding; `smooth_rounded` switches to the alternative order (round, then
/// smooth, then round again).
pub fn predict(
    model: &ConvNet,
    frames: &[&[f32]],
    smoothing: Option<&mut SmoothingState>,
    smooth_rounded: bool,
) -> Result<Vec<usize>> {
    let num_labels = model.cfg.num_labels;
    let mut raw = Vec::with_capacity(frames.len());
    for frame in frames {
        raw.push(model.predict_raw(frame)?);
    }
    let series: Vec<f64> = match smoothing {
        None => raw,
        Some(state) => raw
            .into_iter()
            .map(|x| {
                let input = if smooth_rounded { round_and_clamp(x, num_labels) as f64 } else { x };
                state.update(input)
            })
            .collect(),
    };
    Ok(series.into_iter().map(|x| round_and_clamp(x, num_labels)).collect())
}

/// Metrics from already-computed predictions.
pub fn metrics_from_predictions(
    predictions: &[usize],
    labels: &[usize],
    num_labels: usize,
) -> Result<MetricsReport> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(NetError::EmptySplit);
    }
    let mut confusion = vec![vec![0usize; num_labels]; num_labels];
    let mut exact = 0usize;
    let mut near = 0usize;
    for (&p, &t) in predictions.iter().zip(labels) {
        confusion[t][p] += 1;
        if p == t {
            exact += 1;
        }
        if p.abs_diff(t) <= 1 {
            near += 1;
        }
    }
    let n = predictions.len();
    Ok(MetricsReport {
        accuracy: exact as f64 / n as f64,
        accuracy_pm1: near as f64 / n as f64,
        confusion,
        n_samples: n,
    })
}

/// Evaluate a split. `smoothing_alpha = Some(alpha)` enables exponential
/// smoothing, reset at each recording boundary.
pub fn evaluate(
    model: &ConvNet,
    dataset: &Dataset,
    split: Split,
    smoothing_alpha: Option<f64>,
    smooth_rounded: bool,
) -> Result<MetricsReport> {
    let recordings = dataset.split_recordings(split);
    if recordings.is_empty() {
        return Err(NetError::EmptySplit);
    }
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for rec_idx in recordings {
        let rec = &dataset.recordings[rec_idx];
        let frames: Vec<&[f32]> = (0..rec.n_frames).map(|f| rec.frame(f)).collect();
        let preds = match smoothing_alpha {
            None => predict(model, &frames, None, smooth_rounded)?,
            Some(alpha) => {
                let mut state = SmoothingState::new(alpha)?;
                predict(model, &frames, Some(&mut state), smooth_rounded)?
            }
        };
        let label = dataset.manifest[rec_idx].label;
        labels.extend(std::iter::repeat(label).take(preds.len()));
        predictions.extend(preds);
    }
    metrics_from_predictions(&predictions, &labels, dataset.num_labels())
}

impl MetricsReport {
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true_label");
        for p in 0..self.confusion.len() {
            out.push_str(&format!(",pred_{p}"));
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            out.push_str(&t.to_string());
            for &c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

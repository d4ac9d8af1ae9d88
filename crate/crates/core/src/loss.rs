//! The four metric losses and their hand-derived gradients.
//!
//! All losses operate on the *angles* between embedding vectors: inputs are
//! normalised internally, so for unit vectors `f_i . f_j = cos(theta)`. The
//! reported gradients are taken with respect to the raw (pre-normalisation)
//! input coordinates, i.e. they include the normalisation Jacobian
//! `(I - u u^T) / ||x||` per row. This makes the analytic gradients directly
//! comparable against finite differences on the raw coordinates, and directly
//! usable for backpropagation into a projection layer.
//!
//! Loss forms (natural logarithm throughout):
//!
//! ```text
//! triplet        (1/N_t) sum_t max(0, Ep^2 - En^2 + m)
//! mc-n-pair      (1/N)   sum_a log(1 + sum_n exp(f_a.f_n - f_a.f_p))
//! constellation  (1/N)   sum_a log(1 + sum_{n in K labels} exp(f_a.f_n - f_a.f_p))
//! lar            (1/N_a) sum_a log(1 + sum_n exp(log(D_l) f_a.f_n - f_a.f_p))
//! ```
//!
//! where `D_l = min(|t_a - t_n|, |L - |t_a - t_n||)` is the circular label
//! distance. Every sample serves once as anchor with its same-label partner
//! as positive, so the two orderings of each label pair are averaged and all
//! losses are invariant under sample permutation. Negatives are always all
//! samples of other labels, visited in ascending index order. Every
//! `log(1 + sum exp(.))` is evaluated with a max-shifted log-sum-exp so no
//! intermediate overflows.

use crate::batch::EmbeddingBatch;
use crate::matrix::{dot, norm, Matrix};
use crate::{CoreError, Result};

/// Which objective produced a [`LossOutput`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Triplet,
    McNPair,
    Constellation,
    Lar,
    Mse,
    Combined,
}

/// A scalar loss value with the gradient of the loss w.r.t. every input
/// vector entry (same shape as the batch's vectors).
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Matrix,
    pub kind: LossKind,
}

/// Distance margin for the triplet loss, in squared-Euclidean units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletMargin(f64);

impl TripletMargin {
    pub fn new(m: f64) -> Result<Self> {
        if m > 0.0 && m.is_finite() {
            Ok(Self(m))
        } else {
            Err(CoreError::DimensionError(format!("margin must be positive, got {m}")))
        }
    }

    pub fn get(&self) -> f64 {
        self.0
    }
}

/// Row-normalise a matrix to unit Euclidean norm, preserving direction.
pub fn normalize(vectors: &Matrix) -> Result<Matrix> {
    let mut out = vectors.clone();
    for i in 0..out.rows() {
        let r = norm(out.row(i));
        if r <= 1e-12 {
            return Err(CoreError::ZeroVector { row: i });
        }
        for v in out.row_mut(i) {
            *v /= r;
        }
    }
    Ok(out)
}

/// Circular distance between two labels out of `num_labels`:
/// `min(|t_a - t_n|, |L - |t_a - t_n||)`. Symmetric, in `[1, L/2]`.
pub fn label_distance(t_a: usize, t_n: usize, num_labels: usize) -> Result<usize> {
    if t_a == t_n {
        return Err(CoreError::EqualLabels { label: t_a });
    }
    for &t in &[t_a, t_n] {
        if t >= num_labels {
            return Err(CoreError::LabelOutOfRange { label: t, num_labels });
        }
    }
    let d = t_a.abs_diff(t_n);
    Ok(d.min(num_labels - d))
}

/// `log(1 + sum_j exp(s_j))` with max-shift, plus the softmax-style weights
/// `sigma_j = exp(s_j) / (1 + sum_k exp(s_k))` needed by the gradients.
fn log1p_sum_exp(scores: &[f64]) -> (f64, Vec<f64>) {
    let m = scores.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    let mut denom = (-m).exp();
    let mut shifted = Vec::with_capacity(scores.len());
    for &s in scores {
        let e = (s - m).exp();
        shifted.push(e);
        denom += e;
    }
    let value = m + denom.ln();
    for e in &mut shifted {
        *e /= denom;
    }
    (value, shifted)
}

/// Chain a gradient w.r.t. unit vectors back through row normalisation.
fn chain_through_normalization(raw: &Matrix, unit: &Matrix, grad_unit: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(raw.rows(), raw.cols());
    for i in 0..raw.rows() {
        let r = norm(raw.row(i));
        let u = unit.row(i);
        let g = grad_unit.row(i);
        let gu = dot(g, u);
        let o = out.row_mut(i);
        for j in 0..u.len() {
            o[j] = (g[j] - gu * u[j]) / r;
        }
    }
    out
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// Triplet loss over every (anchor, positive, negative) triple a smart batch
/// can form. `Ep`, `En` are Euclidean distances between unit vectors; each
/// hinge is `max(0, Ep^2 - En^2 + m)` and the result is the mean over
/// triples. Gradients are the exact subgradient (zero where a hinge is
/// inactive).
pub fn triplet_loss(batch: &EmbeddingBatch, margin: TripletMargin) -> Result<LossOutput> {
    let pairs = batch.smart_pairs()?;
    let unit = normalize(&batch.vectors)?;
    let n = batch.labels.len();
    let m = margin.get();

    let mut grad_unit = Matrix::zeros(n, unit.cols());
    let mut total = 0.0;
    let mut n_triples = 0usize;

    for a in 0..n {
        let p = batch.partner_of(a, &pairs);
        let fa = unit.row(a);
        let fp = unit.row(p);
        let ep2 = squared_distance(fa, fp);
        for neg in 0..n {
            if batch.labels[neg] == batch.labels[a] {
                continue;
            }
            let fn_ = unit.row(neg);
            let en2 = squared_distance(fa, fn_);
            let hinge = ep2 - en2 + m;
            n_triples += 1;
            if hinge > 0.0 {
                total += hinge;
                // d(Ep^2 - En^2)/d fa = 2(fn - fp); d/d fp = -2(fa - fp);
                // d/d fn = 2(fa - fn).
                let ga = grad_unit.row_mut(a);
                axpy(ga, 2.0, fn_);
                axpy(ga, -2.0, fp);
                let gp = grad_unit.row_mut(p);
                axpy(gp, -2.0, fa);
                axpy(gp, 2.0, fp);
                let gn = grad_unit.row_mut(neg);
                axpy(gn, 2.0, fa);
                axpy(gn, -2.0, fn_);
            }
        }
    }
    if n_triples == 0 {
        return Err(CoreError::DegenerateBatch { reason: "no (anchor, positive, negative) triple can be formed".into() });
    }
    let scale = 1.0 / n_triples as f64;
    total *= scale;
    for g in grad_unit.data_mut() {
        *g *= scale;
    }
    let grads = chain_through_normalization(&batch.vectors, &unit, &grad_unit);
    Ok(LossOutput { value: total, grads, kind: LossKind::Triplet })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Multiclass-N-Pair loss: every sample serves once as anchor, its same-label
/// partner is the positive, and all samples of other labels are negatives.
pub fn mc_n_pair_loss(batch: &EmbeddingBatch) -> Result<LossOutput> {
    softmax_family(batch, LossKind::McNPair, NegativeWeights::Unit, None)
}

/// Constellation loss: like Mc-N-Pair but each anchor only uses negatives
/// from the `k` negative labels circularly closest to the anchor's label
/// (ties broken by ascending label value).
pub fn constellation_loss(batch: &EmbeddingBatch, k: usize) -> Result<LossOutput> {
    softmax_family(batch, LossKind::Constellation, NegativeWeights::Unit, Some(k))
}

/// Label-Aware Ranked loss: the exponent of each negative term is scaled by
/// `log(D_l)` where `D_l` is the circular distance between the anchor's and
/// the negative's label, so far-away labels are pushed harder.
pub fn lar_loss(batch: &EmbeddingBatch) -> Result<LossOutput> {
    lar_loss_with_offset(batch, 0.0)
}

/// LAR with an experimental offset inside the multiplier: `log(D_l + offset)`.
/// The default offset of 0 reproduces the plain LAR loss, where adjacent
/// labels (`D_l = 1`) contribute angle-independent terms.
pub fn lar_loss_with_offset(batch: &EmbeddingBatch, multiplier_offset: f64) -> Result<LossOutput> {
    softmax_family(batch, LossKind::Lar, NegativeWeights::LogLabelDistance { multiplier_offset }, None)
}

enum NegativeWeights {
    /// Every negative exponent is `f_a.f_n - f_a.f_p`.
    Unit,
    /// Negative exponents are `log(D_l + offset) * f_a.f_n - f_a.f_p`.
    LogLabelDistance { multiplier_offset: f64 },
}

/// Shared skeleton for the three `log(1 + sum exp(.))` losses.
fn softmax_family(
    batch: &EmbeddingBatch,
    kind: LossKind,
    weights: NegativeWeights,
    constellation_k: Option<usize>,
) -> Result<LossOutput> {
    let pairs = batch.smart_pairs()?;
    let unit = normalize(&batch.vectors)?;
    let n = batch.labels.len();

    // Every sample serves once as anchor with its partner as positive, so
    // both orderings of each label pair are averaged and the value is
    // invariant under sample permutation. The per-label-pair mean of the
    // two orderings is the same number.
    let anchors: Vec<usize> = (0..n).collect();

    if let Some(k) = constellation_k {
        let available = pairs.len() - 1;
        if k == 0 || k > available {
            return Err(CoreError::BadK { k, available });
        }
    }

    let mut grad_unit = Matrix::zeros(n, unit.cols());
    let mut total = 0.0;

    for &a in &anchors {
        let label_a = batch.labels[a];
        let p = batch.partner_of(a, &pairs);
        let fa = unit.row(a);
        let ap = dot(fa, unit.row(p));

        let allowed = constellation_k.map(|k| nearest_negative_labels(label_a, &pairs, batch.num_labels, k));

        // Fixed negative order: ascending sample index.
        let mut negatives: Vec<usize> = Vec::with_capacity(n);
        let mut scores: Vec<f64> = Vec::with_capacity(n);
        let mut wvals: Vec<f64> = Vec::with_capacity(n);
        for neg in 0..n {
            let label_n = batch.labels[neg];
            if label_n == label_a {
                continue;
            }
            if let Some(ref lab) = allowed {
                if !lab.contains(&label_n) {
                    continue;
                }
            }
            let w = match weights {
                NegativeWeights::Unit => 1.0,
                NegativeWeights::LogLabelDistance { multiplier_offset } => {
                    let d = label_distance(label_a, label_n, batch.num_labels)?;
                    (d as f64 + multiplier_offset).ln()
                }
            };
            negatives.push(neg);
            wvals.push(w);
            scores.push(w * dot(fa, unit.row(neg)) - ap);
        }
        if negatives.is_empty() {
            return Err(CoreError::DegenerateBatch { reason: format!("anchor {a} has no negatives") });
        }

        let (value, sigmas) = log1p_sum_exp(&scores);
        total += value;

        // d value / d fa = sum_j sigma_j (w_j fn_j - fp); d/d fn_j = sigma_j w_j fa;
        // d/d fp = -(sum_j sigma_j) fa.
        let sigma_sum: f64 = sigmas.iter().sum();
        for ((&neg, &sig), &w) in negatives.iter().zip(&sigmas).zip(&wvals) {
            axpy(grad_unit.row_mut(a), sig * w, unit.row(neg));
            axpy(grad_unit.row_mut(neg), sig * w, unit.row(a));
        }
        axpy(grad_unit.row_mut(a), -sigma_sum, unit.row(p));
        axpy(grad_unit.row_mut(p), -sigma_sum, unit.row(a));
    }

    let scale = 1.0 / anchors.len() as f64;
    total *= scale;
    for g in grad_unit.data_mut() {
        *g *= scale;
    }
    if !total.is_finite() {
        return Err(CoreError::NonFinite { context: format!("{kind:?} loss value") });
    }
    let grads = chain_through_normalization(&batch.vectors, &unit, &grad_unit);
    Ok(LossOutput { value: total, grads, kind })
}

/// The `k` negative labels circularly closest to `anchor_label`, ties broken
/// by ascending label value. Only labels present in the batch are candidates.
fn nearest_negative_labels(
    anchor_label: usize,
    pairs: &[crate::batch::LabelPair],
    num_labels: usize,
    k: usize,
) -> Vec<usize> {
    let mut cands: Vec<(usize, usize)> = pairs
        .iter()
        .map(|p| p.label)
        .filter(|&l| l != anchor_label)
        .map(|l| (label_distance(anchor_label, l, num_labels).unwrap(), l))
        .collect();
    cands.sort_unstable();
    cands.into_iter().take(k).map(|(_, l)| l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smart_batch(rows: &[&[f64]], labels: &[usize], num_labels: usize) -> EmbeddingBatch {
        EmbeddingBatch::new(Matrix::from_rows(rows).unwrap(), labels.to_vec(), num_labels).unwrap()
    }

    #[test]
    fn normalize_scales_and_preserves_direction() {
        let m = Matrix::from_rows(&[&[3.0, 4.0]]).unwrap();
        let u = normalize(&m).unwrap();
        assert!((u.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((u.get(0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_keeps_unit_rows() {
        let m = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        let u = normalize(&m).unwrap();
        assert_eq!(u, m);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let m = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(normalize(&m).unwrap_err(), CoreError::ZeroVector { row: 1 });
    }

    #[test]
    fn label_distance_wraps_circularly() {
        assert_eq!(label_distance(0, 5, 6).unwrap(), 1);
        assert_eq!(label_distance(1, 4, 6).unwrap(), 3);
        assert_eq!(label_distance(0, 2, 6).unwrap(), 2);
        assert!(matches!(label_distance(3, 3, 6), Err(CoreError::EqualLabels { label: 3 })));
    }

    #[test]
    fn label_distance_symmetric_and_in_range() {
        for l in 2..=64usize {
            for a in 0..l {
                for b in 0..l {
                    if a == b {
                        continue;
                    }
                    let d = label_distance(a, b, l).unwrap();
                    assert_eq!(d, label_distance(b, a, l).unwrap());
                    assert!(d >= 1 && d <= l / 2, "d={d} a={a} b={b} l={l}");
                }
            }
        }
    }

    #[test]
    fn triplet_margin_when_positive_equals_negative() {
        // anchor == positive == negative location: Ep = En = 0, hinge = m.
        let b = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]],
            &[0, 0, 1, 1],
            2,
        );
        let out = triplet_loss(&b, TripletMargin::new(1.0).unwrap()).unwrap();
        assert!((out.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triplet_clamps_when_negative_is_far() {
        let b = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], &[-1.0, 0.0]],
            &[0, 0, 1, 1],
            2,
        );
        // Ep^2 = 0, En^2 = 4, hinge = 0 - 4 + 1 < 0 for every triple.
        let out = triplet_loss(&b, TripletMargin::new(1.0).unwrap()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mc_n_pair_identical_embeddings_closed_form() {
        // All dot products equal -> each anchor contributes log(1 + K_neg).
        let rows: Vec<&[f64]> = vec![&[0.6, 0.8]; 6];
        let b = smart_batch(&rows, &[0, 0, 1, 1, 2, 2], 3);
        let out = mc_n_pair_loss(&b).unwrap();
        let k_neg = 4.0_f64;
        assert!((out.value - (1.0 + k_neg).ln()).abs() < 1e-12);
    }

    #[test]
    fn mc_n_pair_aligned_anchor_opposed_negatives() {
        let b = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], &[-1.0, 0.0]],
            &[0, 0, 1, 1],
            2,
        );
        // Every anchor: exponent = -1 - 1 = -2 for both negatives.
        let out = mc_n_pair_loss(&b).unwrap();
        let expected = (1.0 + 2.0 * (-2.0_f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
    }

    #[test]
    fn constellation_identical_embeddings() {
        let rows: Vec<&[f64]> = vec![&[1.0, 0.0]; 8];
        let b = smart_batch(&rows, &[0, 0, 1, 1, 2, 2, 3, 3], 4);
        // K=3 labels, two samples each -> 6 negative terms of exp(0).
        let out = constellation_loss(&b, 3).unwrap();
        assert!((out.value - 7.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constellation_bad_k() {
        let rows: Vec<&[f64]> = vec![&[1.0, 0.0]; 4];
        let b = smart_batch(&rows, &[0, 0, 1, 1], 2);
        assert!(matches!(constellation_loss(&b, 2), Err(CoreError::BadK { k: 2, available: 1 })));
        assert!(constellation_loss(&b, 1).is_ok());
    }

    #[test]
    fn constellation_selection_is_circular_and_tie_broken() {
        let sel = nearest_negative_labels(
            2,
            &[0, 1, 2, 3, 4, 5]
                .map(|l| crate::batch::LabelPair { label: l, first: 0, second: 0 })
                .to_vec(),
            6,
            3,
        );
        // distances from 2: label 1 -> 1, label 3 -> 1, label 0 -> 2, label 4 -> 2, label 5 -> 3
        assert_eq!(sel, vec![1, 3, 0]);
    }

    #[test]
    fn lar_adjacent_label_term_is_angle_independent() {
        // D_l = 1 -> multiplier log(1) = 0: the negative's angle is irrelevant.
        let base = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]],
            &[0, 0, 1, 1],
            6,
        );
        let moved = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[-0.6, 0.8], &[-0.6, 0.8]],
            &[0, 0, 1, 1],
            6,
        );
        let a = lar_loss(&base).unwrap().value;
        let b = lar_loss(&moved).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lar_identical_embeddings_closed_form() {
        let rows: Vec<&[f64]> = vec![&[1.0, 0.0]; 12];
        let b = smart_batch(&rows, &[0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5], 6);
        let out = lar_loss(&b).unwrap();
        // Each anchor sees two samples of every other label; all cosines are 1.
        let mut inner = 0.0_f64;
        for d in [1usize, 2, 3, 2, 1] {
            inner += 2.0 * ((d as f64).ln() - 1.0).exp();
        }
        let expected = (1.0 + inner).ln();
        assert!((out.value - expected).abs() < 1e-12, "{} vs {expected}", out.value);
    }

    #[test]
    fn lar_offset_restores_neighbor_pressure() {
        let base = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]],
            &[0, 0, 1, 1],
            6,
        );
        let collapsed = smart_batch(
            &[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]],
            &[0, 0, 1, 1],
            6,
        );
        let spread = lar_loss_with_offset(&base, 0.5).unwrap().value;
        let tight = lar_loss_with_offset(&collapsed, 0.5).unwrap().value;
        assert!(spread < tight);
    }
}

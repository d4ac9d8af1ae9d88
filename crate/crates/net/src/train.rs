//! Training under `MSE + lambda * DML` with SGD + momentum.

use crate::batcher::SmartBatcher;
use crate::eval::evaluate;
use crate::network::{ConvNet, NetworkConfig, ParamSet};
use crate::{NetError, Result};
use lar_core::batch::EmbeddingBatch;
use lar_core::loss::{
    constellation_loss, lar_loss_with_offset, mc_n_pair_loss, triplet_loss, TripletMargin,
};
use lar_core::matrix::Matrix;
use lar_radar::dataset::{Dataset, Split};

/// Which metric loss accompanies the MSE term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmlKind {
    None,
    Triplet,
    McNPair,
    Constellation,
    Lar,
}

impl DmlKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DmlKind::None => "none",
            DmlKind::Triplet => "triplet",
            DmlKind::McNPair => "mcnpair",
            DmlKind::Constellation => "constellation",
            DmlKind::Lar => "lar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(DmlKind::None),
            "triplet" => Some(DmlKind::Triplet),
            "mcnpair" => Some(DmlKind::McNPair),
            "constellation" => Some(DmlKind::Constellation),
            "lar" => Some(DmlKind::Lar),
            _ => None,
        }
    }

    pub const ALL: [DmlKind; 5] =
        [DmlKind::None, DmlKind::Triplet, DmlKind::McNPair, DmlKind::Constellation, DmlKind::Lar];
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dml_kind: DmlKind,
    /// Weight of the DML term in the combined objective.
    pub lambda_dml: f64,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Triplet distance margin.
    pub margin: f64,
    /// Negative labels per anchor for the Constellation loss.
    pub constellation_k: usize,
    /// Experimental `log(D + offset)` multiplier offset for LAR.
    pub multiplier_offset: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dml_kind: DmlKind::None,
            lambda_dml: 1.0,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 4,
            seed: 1,
            margin: 1.0,
            constellation_k: 3,
            multiplier_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub mse_term: f64,
    pub dml_term: f64,
    pub test_acc: f64,
    pub test_acc_pm1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRow>,
    /// Samples carried (not dropped) at each epoch boundary.
    pub leftover_counts: Vec<usize>,
    /// SHA-256 of the final checkpoint serialisation.
    pub model_checksum: String,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse_term,dml_term,test_acc,test_acc_pm1\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.mse_term, r.dml_term, r.test_acc, r.test_acc_pm1
            ));
        }
        out
    }
}

/// Evaluate the configured metric loss on raw (pre-normalisation) embeddings.
fn dml_loss(
    cfg: &TrainConfig,
    embeddings: Matrix,
    labels: Vec<usize>,
    num_labels: usize,
) -> Result<Option<lar_core::LossOutput>> {
    if cfg.dml_kind == DmlKind::None {
        return Ok(None);
    }
    let batch = EmbeddingBatch::new(embeddings, labels, num_labels)?;
    let out = match cfg.dml_kind {
        DmlKind::None => unreachable!(),
        DmlKind::Triplet => triplet_loss(&batch, TripletMargin::new(cfg.margin)?)?,
        DmlKind::McNPair => mc_n_pair_loss(&batch)?,
        DmlKind::Constellation => {
            let available = count_distinct(&batch.labels) - 1;
            constellation_loss(&batch, cfg.constellation_k.min(available))?
        }
        DmlKind::Lar => lar_loss_with_offset(&batch, cfg.multiplier_offset)?,
    };
    Ok(Some(out))
}

fn count_distinct(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// One SGD step on a smart batch. Returns `(mse_term, dml_term)`.
pub fn train_step(
    model: &mut ConvNet,
    inputs: &[&[f32]],
    labels: &[usize],
    velocity: &mut ParamSet,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let n = inputs.len();
    debug_assert_eq!(n, labels.len());

    let mut forwards = Vec::with_capacity(n);
    for input in inputs {
        forwards.push(model.forward_cached(input)?);
    }

    // MSE on the raw (unrounded) predictions
    let mut mse = 0.0;
    let mut d_pred = Vec::with_capacity(n);
    for (fwd, &label) in forwards.iter().zip(labels) {
        let err = fwd.prediction - label as f64;
        mse += err * err;
        d_pred.push(2.0 * err / n as f64);
    }
    mse /= n as f64;

    // DML on the raw embedding projections
    let d = model.cfg.embedding_dim;
    let mut emb = Matrix::zeros(n, d);
    for (i, fwd) in forwards.iter().enumerate() {
        emb.row_mut(i).copy_from_slice(&fwd.embedding);
    }
    let dml = dml_loss(cfg, emb, labels.to_vec(), model.cfg.num_labels)?;
    let dml_value = dml.as_ref().map(|o| o.value).unwrap_or(0.0);

    let zero_row = vec![0.0; d];
    let mut grads = ParamSet::zeros(&model.cfg);
    for (i, fwd) in forwards.iter().enumerate() {
        let d_emb: Vec<f64> = match (&dml, cfg.lambda_dml) {
            (Some(out), lambda) if lambda != 0.0 => {
                out.grads.row(i).iter().map(|&g| lambda * g).collect()
            }
            _ => zero_row.clone(),
        };
        model.backward(fwd, &d_emb, d_pred[i], &mut grads);
    }

    // SGD with momentum: v <- mu v + g, w <- w - lr v
    for ((w, v), g) in model
        .params
        .tensors
        .iter_mut()
        .zip(&mut velocity.tensors)
        .zip(&grads.tensors)
    {
        for ((wi, vi), &gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = cfg.momentum * *vi + gi;
            *wi -= cfg.lr * *vi;
        }
    }

    Ok((mse, dml_value))
}

/// Full training run over the dataset's training split. Per epoch, records
/// the mean loss terms and the test-split accuracy (without smoothing).
pub fn train(dataset: &Dataset, net_cfg: &NetworkConfig, cfg: &TrainConfig) -> Result<(ConvNet, TrainReport)> {
    let started = std::time::Instant::now();
    let frames = dataset.split_frames(Split::Train);
    if frames.is_empty() {
        return Err(NetError::EmptySplit);
    }
    let labels: Vec<usize> = frames.iter().map(|&(rec, _)| dataset.manifest[rec].label).collect();

    let mut model = ConvNet::init(net_cfg, cfg.seed)?;
    let mut velocity = ParamSet::zeros(net_cfg);
    let mut batcher = SmartBatcher::new(&labels, dataset.num_labels(), lar_core::derive_seed(cfg.seed, 0xBA7C))?;

    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        leftover_counts: Vec::with_capacity(cfg.epochs),
        model_checksum: String::new(),
        wall_clock_seconds: 0.0,
    };

    for epoch in 0..cfg.epochs {
        let (batches, leftover) = batcher.epoch();
        report.leftover_counts.push(leftover);
        let mut mse_sum = 0.0;
        let mut dml_sum = 0.0;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let inputs: Vec<&[f32]> = batch
                .iter()
                .map(|&k| {
                    let (rec, frame) = frames[k];
                    dataset.recordings[rec].frame(frame)
                })
                .collect();
            let batch_labels: Vec<usize> = batch.iter().map(|&k| labels[k]).collect();
            let (mse, dml) = train_step(&mut model, &inputs, &batch_labels, &mut velocity, cfg)?;
            if !mse.is_finite() || !dml.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    context: format!("mse = {mse}, dml = {dml}"),
                });
            }
            mse_sum += mse;
            dml_sum += dml;
        }
        let steps = batches.len().max(1) as f64;
        let metrics = evaluate(&model, dataset, Split::Test, None, false)?;
        report.epochs.push(EpochRow {
            epoch,
            mse_term: mse_sum / steps,
            dml_term: dml_sum / steps,
            test_acc: metrics.accuracy,
            test_acc_pm1: metrics.accuracy_pm1,
        });
    }

    report.model_checksum = model.checksum();
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Embedding dump rows for the test split: `sample_id,label,e_0..e_{D-1}`.
pub fn embedding_dump(model: &ConvNet, dataset: &Dataset, split: Split) -> Result<String> {
    let d = model.cfg.embedding_dim;
    let mut out = String::from("sample_id,label");
    for k in 0..d {
        out.push_str(&format!(",e_{k}"));
    }
    out.push('\n');
    for rec_idx in dataset.split_recordings(split) {
        let rec = &dataset.recordings[rec_idx];
        let meta = &dataset.manifest[rec_idx];
        for f in 0..rec.n_frames {
            let fwd = model.forward_cached(rec.frame(f))?;
            let norm = fwd.embedding.iter().map(|e| e * e).sum::<f64>().sqrt();
            out.push_str(&format!("rec{:05}_f{:03},{}", meta.recording_id, f, meta.label));
            for e in &fwd.embedding {
                let unit = if norm > 1e-12 { e / norm } else { 0.0 };
                out.push_str(&format!(",{unit}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

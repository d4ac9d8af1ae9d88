//! Full-network gradient verification: central finite differences over every
//! trainable parameter against the hand-derived backward pass, for the pure
//! MSE objective and for MSE combined with each metric loss.

use lar_core::batch::EmbeddingBatch;
use lar_core::loss::{
    constellation_loss, lar_loss, mc_n_pair_loss, triplet_loss, TripletMargin,
};
use lar_core::matrix::Matrix;
use lar_net::network::{ConvNet, NetworkConfig, ParamSet};
use lar_net::DmlKind;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = 1.0;
const MARGIN: f64 = 0.5;
const K: usize = 2;

fn tiny_cfg() -> NetworkConfig {
    NetworkConfig {
        input_channels: 6,
        input_height: 8,
        input_width: 8,
        conv_features: 4,
        embedding_dim: 4,
        num_labels: 3,
    }
}

fn fixture(seed: u64) -> (Vec<Vec<f32>>, Vec<usize>) {
    let cfg = tiny_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = vec![0, 0, 1, 1, 2, 2];
    let inputs = (0..labels.len())
        .map(|_| (0..cfg.input_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    (inputs, labels)
}

/// Combined objective value at the model's current parameters.
fn combined_loss(model: &ConvNet, inputs: &[Vec<f32>], labels: &[usize], kind: DmlKind) -> f64 {
    let n = inputs.len();
    let mut emb = Matrix::zeros(n, model.cfg.embedding_dim);
    let mut mse = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let fwd = model.forward_cached(input).unwrap();
        emb.row_mut(i).copy_from_slice(&fwd.embedding);
        let err = fwd.prediction - labels[i] as f64;
        mse += err * err;
    }
    mse /= n as f64;
    let dml = match kind {
        DmlKind::None => 0.0,
        _ => {
            let batch = EmbeddingBatch::new(emb, labels.to_vec(), model.cfg.num_labels).unwrap();
            match kind {
                DmlKind::Triplet => triplet_loss(&batch, TripletMargin::new(MARGIN).unwrap()).unwrap().value,
                DmlKind::McNPair => mc_n_pair_loss(&batch).unwrap().value,
                DmlKind::Constellation => constellation_loss(&batch, K).unwrap().value,
                DmlKind::Lar => lar_loss(&batch).unwrap().value,
                DmlKind::None => unreachable!(),
            }
        }
    };
    mse + LAMBDA * dml
}

/// Analytic parameter gradients of the combined objective.
fn analytic_grads(model: &ConvNet, inputs: &[Vec<f32>], labels: &[usize], kind: DmlKind) -> ParamSet {
    let n = inputs.len();
    let forwards: Vec<_> = inputs.iter().map(|x| model.forward_cached(x).unwrap()).collect();

    let mut emb = Matrix::zeros(n, model.cfg.embedding_dim);
    for (i, fwd) in forwards.iter().enumerate() {
        emb.row_mut(i).copy_from_slice(&fwd.embedding);
    }
    let demb: Matrix = match kind {
        DmlKind::None => Matrix::zeros(n, model.cfg.embedding_dim),
        _ => {
            let batch = EmbeddingBatch::new(emb, labels.to_vec(), model.cfg.num_labels).unwrap();
            let out = match kind {
                DmlKind::Triplet => triplet_loss(&batch, TripletMargin::new(MARGIN).unwrap()).unwrap(),
                DmlKind::McNPair => mc_n_pair_loss(&batch).unwrap(),
                DmlKind::Constellation => constellation_loss(&batch, K).unwrap(),
                DmlKind::Lar => lar_loss(&batch).unwrap(),
                DmlKind::None => unreachable!(),
            };
            out.grads
        }
    };

    let mut grads = ParamSet::zeros(&model.cfg);
    for (i, fwd) in forwards.iter().enumerate() {
        let d_pred = 2.0 * (fwd.prediction - labels[i] as f64) / n as f64;
        let d_emb: Vec<f64> = demb.row(i).iter().map(|&g| LAMBDA * g).collect();
        model.backward(fwd, &d_emb, d_pred, &mut grads);
    }
    grads
}

fn check_kind(kind: DmlKind) -> f64 {
    let cfg = tiny_cfg();
    let mut model = ConvNet::init(&cfg, 2024).unwrap();
    let (inputs, labels) = fixture(31);

    let analytic = analytic_grads(&model, &inputs, &labels, kind);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for t in 0..model.params.tensors.len() {
        for k in 0..model.params.tensors[t].len() {
            let orig = model.params.tensors[t][k];
            model.params.tensors[t][k] = orig + h;
            let plus = combined_loss(&model, &inputs, &labels, kind);
            model.params.tensors[t][k] = orig - h;
            let minus = combined_loss(&model, &inputs, &labels, kind);
            model.params.tensors[t][k] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = analytic.tensors[t][k];
            let denom = a.abs().max(fd.abs());
            let err = if denom < 1e-7 { (a - fd).abs() } else { (a - fd).abs() / denom };
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn gradcheck_mse_only() {
    let err = check_kind(DmlKind::None);
    assert!(err < 1e-3, "max rel err {err}");
}

#[test]
fn gradcheck_mse_plus_triplet() {
    let err = check_kind(DmlKind::Triplet);
    assert!(err < 1e-3, "max rel err {err}");
}

#[test]
fn gradcheck_mse_plus_mc_n_pair() {
    let err = check_kind(DmlKind::McNPair);
    assert!(err < 1e-3, "max rel err {err}");
}

#[test]
fn gradcheck_mse_plus_constellation() {
    let err = check_kind(DmlKind::Constellation);
    assert!(err < 1e-3, "max rel err {err}");
}

#[test]
fn gradcheck_mse_plus_lar() {
    let err = check_kind(DmlKind::Lar);
    assert!(err < 1e-3, "max rel err {err}");
}

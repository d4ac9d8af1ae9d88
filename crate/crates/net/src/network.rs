//! The convolutional encoder, its two heads, and hand-derived backprop.
//!
//! Layout per sample (channels x height x width, stride-1 same-padded
//! convolutions, 2x2 max pooling after every stage):
//!
//! ```text
//! input  C x H x W
//! conv1 + ReLU -> F x H x W        -> pool -> F x H/2 x W/2
//! conv2 + ReLU -> F x H/2 x W/2    -> pool -> F x H/4 x W/4
//! conv3 + ReLU -> F x H/4 x W/4    -> pool -> F x H/8 x W/8  -> flatten
//! flatten -> regression head: scalar = ReLU(w_h . flat + b_h)
//! flatten -> embedding:       z = W_e . flat + b_e   (D values, raw)
//! ```
//!
//! The raw embedding `z` is handed to the metric losses, which normalise
//! internally and return gradients w.r.t. `z` directly, so no normalisation
//! Jacobian appears in this file. Inner conv loops accumulate rows
//! elementwise (no float reassociation), which keeps results bitwise
//! deterministic while still autovectorizing.

use crate::{NetError, Result};
use lar_core::derive_seed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    /// Feature maps of every conv stage.
    pub conv_features: usize,
    /// Embedding dimension D.
    pub embedding_dim: usize,
    /// Label count; predictions are clamped to `[0, num_labels - 1]`.
    pub num_labels: usize,
}

impl NetworkConfig {
    /// The people-counting default: 6-channel 32 x 64 inputs, 32 feature
    /// maps, 16-dimensional embeddings, six count labels.
    pub fn people_counting() -> Self {
        Self {
            input_channels: 6,
            input_height: 32,
            input_width: 64,
            conv_features: 32,
            embedding_dim: 16,
            num_labels: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_height % 8 != 0 || self.input_width % 8 != 0 {
            return Err(NetError::ShapeMismatch(format!(
                "input {}x{} must be divisible by 8 for three pooling stages",
                self.input_height, self.input_width
            )));
        }
        if self.input_channels == 0 || self.conv_features == 0 || self.embedding_dim == 0 {
            return Err(NetError::ShapeMismatch("zero-sized layer".into()));
        }
        if self.num_labels < 2 {
            return Err(NetError::ShapeMismatch(format!("need >= 2 labels, got {}", self.num_labels)));
        }
        Ok(())
    }

    pub fn flat_len(&self) -> usize {
        self.conv_features * (self.input_height / 8) * (self.input_width / 8)
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_height * self.input_width
    }
}

// Parameter tensor indices inside `ParamSet`.
pub(crate) const W1: usize = 0;
pub(crate) const B1: usize = 1;
pub(crate) const W2: usize = 2;
pub(crate) const B2: usize = 3;
pub(crate) const W3: usize = 4;
pub(crate) const B3: usize = 5;
pub(crate) const WE: usize = 6;
pub(crate) const BE: usize = 7;
pub(crate) const WH: usize = 8;
pub(crate) const BH: usize = 9;

/// All trainable tensors, in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamSet {
    fn shapes(cfg: &NetworkConfig) -> [usize; 10] {
        let f = cfg.conv_features;
        [
            f * cfg.input_channels * 9,
            f,
            f * f * 9,
            f,
            f * f * 9,
            f,
            cfg.embedding_dim * cfg.flat_len(),
            cfg.embedding_dim,
            cfg.flat_len(),
            1,
        ]
    }

    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self { tensors: Self::shapes(cfg).iter().map(|&n| vec![0.0; n]).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct ConvNet {
    pub cfg: NetworkConfig,
    pub params: ParamSet,
}

impl ConvNet {
    /// Seeded He-uniform initialisation. The regression head's bias starts
    /// at the label mid-range so its ReLU is active from the first step.
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::zeros(cfg);
        let fan_in = [
            cfg.input_channels * 9,
            0,
            cfg.conv_features * 9,
            0,
            cfg.conv_features * 9,
            0,
            cfg.flat_len(),
            0,
            cfg.flat_len(),
            0,
        ];
        for (idx, tensor) in params.tensors.iter_mut().enumerate() {
            if fan_in[idx] == 0 {
                continue; // biases start at zero
            }
            let limit = (6.0 / fan_in[idx] as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx as u64));
            for v in tensor.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        params.tensors[BH][0] = (cfg.num_labels - 1) as f64 / 2.0;
        Ok(Self { cfg: cfg.clone(), params })
    }

    pub fn forward_cached(&self, input: &[f32]) -> Result<SampleForward> {
        let cfg = &self.cfg;
        if input.len() != cfg.input_len() {
            return Err(NetError::ShapeMismatch(format!(
                "input has {} values, expected {}",
                input.len(),
                cfg.input_len()
            )));
        }
        let p = &self.params.tensors;
        let f = cfg.conv_features;
        let (h0, w0) = (cfg.input_height, cfg.input_width);
        let (h1, w1) = (h0 / 2, w0 / 2);
        let (h2, w2) = (h1 / 2, w1 / 2);
        let (h3, w3) = (h2 / 2, w2 / 2);

        let x0 = pad_input_f32(input, cfg.input_channels, h0, w0);
        let mut c1 = vec![0.0; f * h0 * w0];
        conv3x3(&x0, cfg.input_channels, h0, w0, &p[W1], &p[B1], &mut c1, f);
        relu(&mut c1);
        let (pool1, arg1) = maxpool2(&c1, f, h0, w0);
        let x1 = pad(&pool1, f, h1, w1);

        let mut c2 = vec![0.0; f * h1 * w1];
        conv3x3(&x1, f, h1, w1, &p[W2], &p[B2], &mut c2, f);
        relu(&mut c2);
        let (pool2, arg2) = maxpool2(&c2, f, h1, w1);
        let x2 = pad(&pool2, f, h2, w2);

        let mut c3 = vec![0.0; f * h2 * w2];
        conv3x3(&x2, f, h2, w2, &p[W3], &p[B3], &mut c3, f);
        relu(&mut c3);
        let (flat, arg3) = maxpool2(&c3, f, h2, w2);
        debug_assert_eq!(flat.len(), f * h3 * w3);

        // heads
        let d = cfg.embedding_dim;
        let mut embedding = vec![0.0; d];
        for (k, e) in embedding.iter_mut().enumerate() {
            let row = &p[WE][k * flat.len()..(k + 1) * flat.len()];
            *e = p[BE][k] + dot4(row, &flat);
        }
        let head_pre = p[BH][0] + dot4(&p[WH], &flat);
        let prediction = head_pre.max(0.0);

        Ok(SampleForward {
            x0,
            c1,
            arg1,
            x1,
            c2,
            arg2,
            x2,
            c3,
            arg3,
            flat,
            embedding,
            head_pre,
            prediction,
        })
    }

    /// Prediction only (no caches) — used by evaluation.
    pub fn predict_raw(&self, input: &[f32]) -> Result<f64> {
        Ok(self.forward_cached(input)?.prediction)
    }

    /// Accumulate parameter gradients for one sample into `grads`, given the
    /// loss gradients w.r.t. the raw embedding and the (pre-ReLU-clamped)
    /// prediction.
    pub fn backward(
        &self,
        fwd: &SampleForward,
        d_embedding: &[f64],
        d_prediction: f64,
        grads: &mut ParamSet,
    ) {
        let cfg = &self.cfg;
        let p = &self.params.tensors;
        let f = cfg.conv_features;
        let (h0, w0) = (cfg.input_height, cfg.input_width);
        let (h1, w1) = (h0 / 2, w0 / 2);
        let (h2, w2) = (h1 / 2, w1 / 2);

        // regression head (ReLU subgradient: zero when the unit is off)
        let d_head_pre = if fwd.head_pre > 0.0 { d_prediction } else { 0.0 };
        let flat_len = fwd.flat.len();
        let mut d_flat = vec![0.0; flat_len];
        if d_head_pre != 0.0 {
            grads.tensors[BH][0] += d_head_pre;
            axpy(&mut grads.tensors[WH], d_head_pre, &fwd.flat);
            axpy(&mut d_flat, d_head_pre, &p[WH]);
        }

        // embedding projection
        for (k, &dz) in d_embedding.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grads.tensors[BE][k] += dz;
            let wrow = &p[WE][k * flat_len..(k + 1) * flat_len];
            let grow = &mut grads.tensors[WE][k * flat_len..(k + 1) * flat_len];
            axpy(grow, dz, &fwd.flat);
            axpy(&mut d_flat, dz, wrow);
        }

        // stage 3
        let mut d_c3 = unpool2(&d_flat, &fwd.arg3, f, h2, w2);
        relu_backward(&mut d_c3, &fwd.c3);
        conv3x3_weight_grad(&fwd.x2, f, h2, w2, &d_c3, f, &mut grads.tensors[W3]);
        bias_grad(&d_c3, f, h2 * w2, &mut grads.tensors[B3]);
        let d_pool2 = conv3x3_input_grad(&d_c3, f, h2, w2, &p[W3], f);

        // stage 2
        let mut d_c2 = unpool2(&d_pool2, &fwd.arg2, f, h1, w1);
        relu_backward(&mut d_c2, &fwd.c2);
        conv3x3_weight_grad(&fwd.x1, f, h1, w1, &d_c2, f, &mut grads.tensors[W2]);
        bias_grad(&d_c2, f, h1 * w1, &mut grads.tensors[B2]);
        let d_pool1 = conv3x3_input_grad(&d_c2, f, h1, w1, &p[W2], f);

        // stage 1 (input gradient not needed)
        let mut d_c1 = unpool2(&d_pool1, &fwd.arg1, f, h0, w0);
        relu_backward(&mut d_c1, &fwd.c1);
        conv3x3_weight_grad(&fwd.x0, cfg.input_channels, h0, w0, &d_c1, f, &mut grads.tensors[W1]);
        bias_grad(&d_c1, f, h0 * w0, &mut grads.tensors[B1]);
    }

    // ----------------------------------------------------------------
    // checkpointing: magic LARM, version, 6 config words, then the
    // parameter tensors as little-endian f32 in ParamSet order
    // ----------------------------------------------------------------

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let cfg = &self.cfg;
        let mut buf = Vec::new();
        buf.extend_from_slice(b"LARM");
        for v in [
            1u32,
            cfg.input_channels as u32,
            cfg.input_height as u32,
            cfg.input_width as u32,
            cfg.conv_features as u32,
            cfg.embedding_dim as u32,
            cfg.num_labels as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for tensor in &self.params.tensors {
            for &v in tensor {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 || &bytes[0..4] != b"LARM" {
            return Err(NetError::Checkpoint("missing LARM magic".into()));
        }
        let word = |i: usize| {
            let mut b = [0u8; 4];
            b.copy_from_slice(&bytes[4 + 4 * i..8 + 4 * i]);
            u32::from_le_bytes(b) as usize
        };
        if word(0) != 1 {
            return Err(NetError::Checkpoint(format!("unsupported version {}", word(0))));
        }
        let cfg = NetworkConfig {
            input_channels: word(1),
            input_height: word(2),
            input_width: word(3),
            conv_features: word(4),
            embedding_dim: word(5),
            num_labels: word(6),
        };
        cfg.validate()?;
        let mut params = ParamSet::zeros(&cfg);
        let mut offset = 32;
        for tensor in &mut params.tensors {
            let need = tensor.len() * 4;
            if bytes.len() < offset + need {
                return Err(NetError::Checkpoint("truncated checkpoint".into()));
            }
            for (k, v) in tensor.iter_mut().enumerate() {
                let mut b = [0u8; 4];
                b.copy_from_slice(&bytes[offset + 4 * k..offset + 4 * k + 4]);
                *v = f32::from_le_bytes(b) as f64;
            }
            offset += need;
        }
        if offset != bytes.len() {
            return Err(NetError::Checkpoint("trailing bytes in checkpoint".into()));
        }
        Ok(Self { cfg, params })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the checkpoint serialisation.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.checkpoint_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-sample forward caches needed by the backward pass.
pub struct SampleForward {
    x0: Vec<f64>,
    c1: Vec<f64>,
    arg1: Vec<u8>,
    x1: Vec<f64>,
    c2: Vec<f64>,
    arg2: Vec<u8>,
    x2: Vec<f64>,
    c3: Vec<f64>,
    arg3: Vec<u8>,
    pub flat: Vec<f64>,
    pub embedding: Vec<f64>,
    pub head_pre: f64,
    pub prediction: f64,
}

// --------------------------------------------------------------------
// kernels
// --------------------------------------------------------------------

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// Dot product with four independent accumulators (fixed order, better ILP).
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zero the incoming gradient wherever the forward activation was clamped.
fn relu_backward(grad: &mut [f64], activated: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Zero-pad a `c x h x w` tensor by one cell on each spatial side.
fn pad(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = &input[(ch * h + y) * w..(ch * h + y) * w + w];
            let dst = &mut out[(ch * ph + y + 1) * pw + 1..(ch * ph + y + 1) * pw + 1 + w];
            dst.copy_from_slice(src);
        }
    }
    out
}

fn pad_input_f32(input: &[f32], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = &input[(ch * h + y) * w..(ch * h + y) * w + w];
            let dst = &mut out[(ch * ph + y + 1) * pw + 1..(ch * ph + y + 1) * pw + 1 + w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s as f64;
            }
        }
    }
    out
}

/// Same-padded 3x3 convolution. `pin` is the padded input
/// (`c_in x (h+2) x (w+2)`), `out` is `c_out x h x w`.
fn conv3x3(
    pin: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out: &mut [f64],
    c_out: usize,
) {
    let (ph, pw) = (h + 2, w + 2);
    debug_assert_eq!(pin.len(), c_in * ph * pw);
    debug_assert_eq!(out.len(), c_out * h * w);
    for oc in 0..c_out {
        let out_oc = &mut out[oc * h * w..(oc + 1) * h * w];
        out_oc.fill(bias[oc]);
        for ic in 0..c_in {
            let pin_ic = &pin[ic * ph * pw..(ic + 1) * ph * pw];
            let w_base = (oc * c_in + ic) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weights[w_base + ky * 3 + kx];
                    for y in 0..h {
                        let src = &pin_ic[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let dst = &mut out_oc[y * w..y * w + w];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

/// dW accumulation: `dw[oc][ic][ky][kx] += sum_{y,x} dout[oc][y][x] * pin[ic][y+ky][x+kx]`.
fn conv3x3_weight_grad(
    pin: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    dout: &[f64],
    c_out: usize,
    dw: &mut [f64],
) {
    let (ph, pw) = (h + 2, w + 2);
    for oc in 0..c_out {
        let dout_oc = &dout[oc * h * w..(oc + 1) * h * w];
        for ic in 0..c_in {
            let pin_ic = &pin[ic * ph * pw..(ic + 1) * ph * pw];
            let w_base = (oc * c_in + ic) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let src = &pin_ic[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let d = &dout_oc[y * w..y * w + w];
                        acc += dot4(d, src);
                    }
                    dw[w_base + ky * 3 + kx] += acc;
                }
            }
        }
    }
}

fn bias_grad(dout: &[f64], c_out: usize, plane: usize, db: &mut [f64]) {
    for oc in 0..c_out {
        let mut acc = 0.0;
        for &v in &dout[oc * plane..(oc + 1) * plane] {
            acc += v;
        }
        db[oc] += acc;
    }
}

/// Input gradient of the same-padded convolution: scatter each dout row into
/// a padded buffer, then crop the interior.
fn conv3x3_input_grad(
    dout: &[f64],
    c_out: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    c_in: usize,
) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut padded = vec![0.0; c_in * ph * pw];
    for oc in 0..c_out {
        let dout_oc = &dout[oc * h * w..(oc + 1) * h * w];
        for ic in 0..c_in {
            let w_base = (oc * c_in + ic) * 9;
            let pad_ic = &mut padded[ic * ph * pw..(ic + 1) * ph * pw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weights[w_base + ky * 3 + kx];
                    for y in 0..h {
                        let dst = &mut pad_ic[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let src = &dout_oc[y * w..y * w + w];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    // crop interior
    let mut din = vec![0.0; c_in * h * w];
    for ic in 0..c_in {
        for y in 0..h {
            let src = &padded[(ic * ph + y + 1) * pw + 1..(ic * ph + y + 1) * pw + 1 + w];
            din[(ic * h + y) * w..(ic * h + y) * w + w].copy_from_slice(src);
        }
    }
    din
}

/// 2x2 max pooling with stride 2; returns the pooled tensor and the argmax
/// corner (dy * 2 + dx) of every output cell for gradient routing.
fn maxpool2(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u8>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    let mut arg = vec![0u8; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            let top = &input[(ch * h + 2 * y) * w..(ch * h + 2 * y) * w + w];
            let bot = &input[(ch * h + 2 * y + 1) * w..(ch * h + 2 * y + 1) * w + w];
            let orow = &mut out[(ch * oh + y) * ow..(ch * oh + y) * ow + ow];
            let arow = &mut arg[(ch * oh + y) * ow..(ch * oh + y) * ow + ow];
            for x in 0..ow {
                let cand = [top[2 * x], top[2 * x + 1], bot[2 * x], bot[2 * x + 1]];
                let mut best = 0usize;
                for k in 1..4 {
                    if cand[k] > cand[best] {
                        best = k;
                    }
                }
                orow[x] = cand[best];
                arow[x] = best as u8;
            }
        }
    }
    (out, arg)
}

/// Route pooled gradients back to the argmax positions.
fn unpool2(dout: &[f64], arg: &[u8], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut din = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let k = (ch * oh + y) * ow + x;
                let corner = arg[k] as usize;
                let (dy, dx) = (corner / 2, corner % 2);
                din[(ch * h + 2 * y + dy) * w + 2 * x + dx] = dout[k];
            }
        }
    }
    din
}

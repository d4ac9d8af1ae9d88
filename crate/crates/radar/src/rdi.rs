//! Windowed 2D FFT processing and the 6-channel network input.
//!
//! Conventions: Hamming windows along both the sample and the chirp
//! dimension, unnormalised forward DFTs, positive-frequency half of the
//! range axis (the input is real, so the negative half is redundant), and
//! an fft-shifted Doppler axis with zero velocity at bin `N_C / 2`.

use crate::{RadarError, RawFrame, Result};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// One antenna's complex range-Doppler image, `(N_S/2) x N_C`, row-major
/// with the Doppler axis contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl RangeDopplerImage {
    #[inline]
    pub fn at(&self, range_bin: usize, doppler_bin: usize) -> Complex64 {
        self.data[range_bin * self.width + doppler_bin]
    }

    /// (range_bin, doppler_bin) of the largest magnitude.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_mag = -1.0;
        for r in 0..self.height {
            for d in 0..self.width {
                let m = self.at(r, d).norm_sqr();
                if m > best_mag {
                    best_mag = m;
                    best = (r, d);
                }
            }
        }
        best
    }
}

/// Per-antenna range-Doppler images of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RdiSet {
    pub images: Vec<RangeDopplerImage>,
}

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Full (uncropped, unshifted) windowed 2D spectra, one `N_S x N_C` complex
/// matrix per antenna. Exposed so energy-conservation checks can see the
/// whole spectrum.
pub fn range_doppler_full(frame: &RawFrame) -> Vec<Vec<Complex64>> {
    let (n_s, n_c) = (frame.n_samples, frame.n_chirps);
    let w_s = hamming(n_s);
    let w_c = hamming(n_c);
    let mut planner = FftPlanner::new();
    let fft_s = planner.plan_fft_forward(n_s);
    let fft_c = planner.plan_fft_forward(n_c);

    let mut out = Vec::with_capacity(frame.n_antennas);
    for a in 0..frame.n_antennas {
        let mut m = vec![Complex64::default(); n_s * n_c];
        for s in 0..n_s {
            let row = frame.chirp_row(a, s);
            for c in 0..n_c {
                m[s * n_c + c] = Complex64::new(row[c] * w_s[s] * w_c[c], 0.0);
            }
        }
        // FFT along the sample axis (strided columns)
        let mut col = vec![Complex64::default(); n_s];
        for c in 0..n_c {
            for s in 0..n_s {
                col[s] = m[s * n_c + c];
            }
            fft_s.process(&mut col);
            for s in 0..n_s {
                m[s * n_c + c] = col[s];
            }
        }
        // FFT along the chirp axis (contiguous rows)
        for s in 0..n_s {
            fft_c.process(&mut m[s * n_c..(s + 1) * n_c]);
        }
        out.push(m);
    }
    out
}

/// Windowed 2D FFT of an (MTI-filtered) frame: keeps the positive half of
/// the range axis and centres the Doppler axis.
pub fn range_doppler(frame: &RawFrame) -> RdiSet {
    let (n_s, n_c) = (frame.n_samples, frame.n_chirps);
    let half = n_s / 2;
    let full = range_doppler_full(frame);
    let images = full
        .into_iter()
        .map(|m| {
            let mut data = vec![Complex64::default(); half * n_c];
            for s in 0..half {
                for c in 0..n_c {
                    data[s * n_c + (c + n_c / 2) % n_c] = m[s * n_c + c];
                }
            }
            RangeDopplerImage { height: half, width: n_c, data }
        })
        .collect();
    RdiSet { images }
}

/// Real multi-channel tensor, `channels x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ChannelTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Interleave the real and imaginary parts of three antennas into the
/// 6-channel layout `[Re(a0), Im(a0), Re(a1), Im(a1), Re(a2), Im(a2)]`.
/// Standardization is a separate, dataset-level step ([`ChannelStats`]).
pub fn to_network_input(rdi: &RdiSet) -> Result<ChannelTensor> {
    if rdi.images.len() != 3 {
        return Err(RadarError::ChannelMismatch { got: rdi.images.len() });
    }
    let (h, w) = (rdi.images[0].height, rdi.images[0].width);
    let mut out = ChannelTensor::zeros(6, h, w);
    for (a, img) in rdi.images.iter().enumerate() {
        debug_assert_eq!((img.height, img.width), (h, w));
        let re = out.channel_mut(2 * a);
        for (dst, src) in re.iter_mut().zip(&img.data) {
            *dst = src.re;
        }
        let im = out.channel_mut(2 * a + 1);
        for (dst, src) in im.iter_mut().zip(&img.data) {
            *dst = src.im;
        }
    }
    Ok(out)
}

/// Rebuild the complex images from a (pre-standardization) channel tensor.
pub fn from_network_input(tensor: &ChannelTensor) -> Result<RdiSet> {
    if tensor.channels % 2 != 0 {
        return Err(RadarError::ChannelMismatch { got: tensor.channels });
    }
    let images = (0..tensor.channels / 2)
        .map(|a| {
            let re = tensor.channel(2 * a);
            let im = tensor.channel(2 * a + 1);
            let data = re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect();
            RangeDopplerImage { height: tensor.height, width: tensor.width, data }
        })
        .collect();
    Ok(RdiSet { images })
}

/// Per-channel mean/standard deviation, computed on the training split only
/// and then applied to every split.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn compute<'a>(tensors: impl Iterator<Item = &'a ChannelTensor>, channels: usize) -> Self {
        let mut count = vec![0u64; channels];
        let mut sum = vec![0.0f64; channels];
        let mut sum_sq = vec![0.0f64; channels];
        for t in tensors {
            for c in 0..channels {
                for &v in t.channel(c) {
                    count[c] += 1;
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
        }
        let mean: Vec<f64> = (0..channels).map(|c| sum[c] / count[c].max(1) as f64).collect();
        let std: Vec<f64> = (0..channels)
            .map(|c| {
                let var = sum_sq[c] / count[c].max(1) as f64 - mean[c] * mean[c];
                var.max(0.0).sqrt().max(1e-12)
            })
            .collect();
        Self { mean, std }
    }

    pub fn standardize(&self, tensor: &mut ChannelTensor) {
        for c in 0..tensor.channels {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in tensor.channel_mut(c) {
                *v = (*v - m) / s;
            }
        }
    }
}

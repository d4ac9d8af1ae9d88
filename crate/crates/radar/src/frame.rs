//! Beat-signal frame synthesis, MTI filtering, and slow-time dataframes.

use crate::{RadarConfig, RadarError, Result, TargetScene};
use lar_core::derive_seed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Constant Tx/Rx leakage offset added to every sample; removed exactly by
/// the MTI filter.
pub const LEAKAGE_OFFSET: f64 = 0.3;

/// One frame of real ADC samples, `n_antennas x N_S x N_C`, laid out so the
/// chirps of a fixed (antenna, sample) pair are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub n_antennas: usize,
    pub n_samples: usize,
    pub n_chirps: usize,
    pub data: Vec<f64>,
}

impl RawFrame {
    pub fn zeros(n_antennas: usize, n_samples: usize, n_chirps: usize) -> Self {
        Self { n_antennas, n_samples, n_chirps, data: vec![0.0; n_antennas * n_samples * n_chirps] }
    }

    #[inline]
    pub fn idx(&self, antenna: usize, sample: usize, chirp: usize) -> usize {
        (antenna * self.n_samples + sample) * self.n_chirps + chirp
    }

    /// The chirp row of a fixed (antenna, sample) pair.
    pub fn chirp_row(&self, antenna: usize, sample: usize) -> &[f64] {
        let start = (antenna * self.n_samples + sample) * self.n_chirps;
        &self.data[start..start + self.n_chirps]
    }

    pub fn chirp_row_mut(&mut self, antenna: usize, sample: usize) -> &mut [f64] {
        let start = (antenna * self.n_samples + sample) * self.n_chirps;
        &mut self.data[start..start + self.n_chirps]
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Synthesize the de-ramped beat signal of `scene` at `frame_index`.
///
/// Per target the model is a sinusoid at beat frequency `2 B R / (c T_c)`
/// along the samples, with a slow-time phase that advances by
/// `4 pi f_c v T_c / c` per chirp (evaluated at the frame's absolute time)
/// plus a micro-motion phase term, and a per-antenna phase offset
/// `pi a sin(angle)` from the target azimuth (half-wavelength array).
/// A constant leakage offset and seeded white noise complete the frame.
///
/// Micro-motion frequency and phase are derived deterministically from
/// (`seed`, target index), so consecutive frames of one recording share a
/// coherent motion; the noise stream is derived from (`seed`, `frame_index`).
pub fn synth_frame(
    scene: &TargetScene,
    config: &RadarConfig,
    frame_index: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<RawFrame> {
    config.validate()?;
    scene.validate(config)?;

    let mut frame = RawFrame::zeros(config.n_antennas, config.n_samples, config.n_chirps);
    frame.data.fill(LEAKAGE_OFFSET);

    let frame_time = frame_index as f64 / config.frame_rate;
    let four_pi_over_lambda = 4.0 * PI / config.wavelength();

    for (t_idx, target) in scene.targets.iter().enumerate() {
        let mut micro_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF00D + t_idx as u64));
        let micro_freq: f64 = micro_rng.gen_range(0.7..1.5);
        let micro_phase: f64 = micro_rng.gen_range(0.0..2.0 * PI);

        let beat = config.beat_frequency(target.range);
        let range_phase = four_pi_over_lambda * target.range;

        // per-chirp slow-time phase (velocity drift + micro-motion)
        let mut chirp_phase = vec![0.0; config.n_chirps];
        for (c, phase) in chirp_phase.iter_mut().enumerate() {
            let t_abs = frame_time + c as f64 * config.chirp_duration;
            let displacement = target.radial_velocity * t_abs
                + target.micro_motion_amplitude * (2.0 * PI * micro_freq * t_abs + micro_phase).sin();
            *phase = four_pi_over_lambda * displacement;
        }

        for a in 0..config.n_antennas {
            let antenna_phase = PI * a as f64 * target.angle.sin();
            for s in 0..config.n_samples {
                let fast_phase =
                    2.0 * PI * beat * s as f64 / config.sample_rate() + range_phase + antenna_phase;
                let row = frame.chirp_row_mut(a, s);
                for (c, v) in row.iter_mut().enumerate() {
                    *v += target.amplitude * (fast_phase + chirp_phase[c]).cos();
                }
            }
        }
    }

    if noise_sigma > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0A15E + frame_index as u64));
        for v in &mut frame.data {
            let n: f64 = noise_rng.sample(StandardNormal);
            *v += noise_sigma * n;
        }
    }

    Ok(frame)
}

/// Moving-target indication: per antenna and sample row, subtract the mean
/// across chirps. Removes the Tx/Rx leakage and fully static returns.
pub fn mti_filter(frame: &RawFrame) -> RawFrame {
    let mut out = frame.clone();
    for a in 0..frame.n_antennas {
        for s in 0..frame.n_samples {
            let row = out.chirp_row_mut(a, s);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            for v in row {
                *v -= mean;
            }
        }
    }
    out
}

/// Build a slow-time dataframe from exactly `N_C` consecutive frames: each
/// frame is integrated over its chirps into one length-`N_S` vector and the
/// `N_C` vectors are stacked column-wise, giving a frame of the same shape
/// whose slow-time axis spans `N_C` frame periods instead of one frame.
pub fn slow_time_dataframe(frames: &[RawFrame]) -> Result<RawFrame> {
    let first = frames.first().ok_or(RadarError::WrongFrameCount { expected: 1, got: 0 })?;
    let n_c = first.n_chirps;
    if frames.len() != n_c {
        return Err(RadarError::WrongFrameCount { expected: n_c, got: frames.len() });
    }
    let mut out = RawFrame::zeros(first.n_antennas, first.n_samples, n_c);
    for (k, f) in frames.iter().enumerate() {
        debug_assert_eq!((f.n_antennas, f.n_samples, f.n_chirps), (first.n_antennas, first.n_samples, n_c));
        for a in 0..f.n_antennas {
            for s in 0..f.n_samples {
                let sum: f64 = f.chirp_row(a, s).iter().sum();
                let i = out.idx(a, s, k);
                out.data[i] = sum;
            }
        }
    }
    Ok(out)
}

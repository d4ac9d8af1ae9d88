//! FMCW waveform and frame geometry.

use crate::{RadarError, Result};

/// Speed of light (m/s).
pub const C0: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    /// Samples per chirp (fast time), power of two.
    pub n_samples: usize,
    /// Chirps per frame (slow time), power of two.
    pub n_chirps: usize,
    /// Receive antennas.
    pub n_antennas: usize,
    /// Sweep bandwidth (Hz).
    pub bandwidth: f64,
    /// Duration of one chirp (s).
    pub chirp_duration: f64,
    /// Carrier frequency (Hz).
    pub carrier_frequency: f64,
    /// Frames per second.
    pub frame_rate: f64,
}

impl Default for RadarConfig {
    /// 60 GHz short-range preset: 64 x 64 frames from 3 antennas at 10 Hz,
    /// ~0.1 m range bins over a ~3.2 m unambiguous range.
    fn default() -> Self {
        Self {
            n_samples: 64,
            n_chirps: 64,
            n_antennas: 3,
            bandwidth: 1.5e9,
            chirp_duration: 1.28e-4,
            carrier_frequency: 60e9,
            frame_rate: 10.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_samples.is_power_of_two() || !self.n_chirps.is_power_of_two() {
            return Err(RadarError::InvalidConfig(format!(
                "n_samples ({}) and n_chirps ({}) must be powers of two",
                self.n_samples, self.n_chirps
            )));
        }
        if self.n_antennas == 0 {
            return Err(RadarError::InvalidConfig("need at least one antenna".into()));
        }
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("chirp_duration", self.chirp_duration),
            ("carrier_frequency", self.carrier_frequency),
            ("frame_rate", self.frame_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RadarError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Fast-time sample rate (Hz).
    pub fn sample_rate(&self) -> f64 {
        self.n_samples as f64 / self.chirp_duration
    }

    /// Carrier wavelength (m).
    pub fn wavelength(&self) -> f64 {
        C0 / self.carrier_frequency
    }

    /// Range covered by one FFT bin: `c / (2 B)`.
    pub fn range_bin_width(&self) -> f64 {
        C0 / (2.0 * self.bandwidth)
    }

    /// Unambiguous range: `N_S/2` positive-frequency bins.
    pub fn max_range(&self) -> f64 {
        self.range_bin_width() * (self.n_samples / 2) as f64
    }

    /// Velocity covered by one Doppler bin: `lambda / (2 N_C T_c)`.
    pub fn velocity_bin_width(&self) -> f64 {
        self.wavelength() / (2.0 * self.n_chirps as f64 * self.chirp_duration)
    }

    /// Unambiguous radial velocity: `+/- lambda / (4 T_c)`.
    pub fn max_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.chirp_duration)
    }

    /// Beat frequency of a target at `range`: `2 B R / (c T_c)`.
    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * self.bandwidth * range / (C0 * self.chirp_duration)
    }
}

//! Synthetic FMCW radar frames and the preprocessing chain that turns them
//! into 6-channel range-Doppler network inputs.
//!
//! The chain mirrors a short-range people-counting front end:
//!
//! ```text
//! point-target scene
//!   -> beat-signal frame  (n_antennas x N_S x N_C real samples)
//!   -> MTI mean removal   (per sample row, across chirps)
//!   -> Hamming windows    (sample and chirp dimension)
//!   -> 2D FFT             (range axis halved, Doppler axis centred)
//!   -> 6-channel tensor   (Re/Im per antenna, standardized per channel)
//! ```
//!
//! A slow-time dataframe of the same shape can be built by integrating each
//! frame over its chirps and stacking `N_C` consecutive frame vectors, which
//! trades update rate for velocity resolution.

pub mod config;
pub mod dataset;
pub mod frame;
pub mod rdi;
pub mod scene;

pub use config::RadarConfig;
pub use frame::{mti_filter, slow_time_dataframe, synth_frame, RawFrame};
pub use rdi::{range_doppler, to_network_input, ChannelStats, ChannelTensor, RdiSet};
pub use scene::{Target, TargetScene};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("invalid radar config: {0}")]
    InvalidConfig(String),

    #[error("target at {range} m exceeds the unambiguous range {max_range} m")]
    RangeAliased { range: f64, max_range: f64 },

    #[error("expected {expected} frames for a slow-time dataframe, got {got}")]
    WrongFrameCount { expected: usize, got: usize },

    #[error("expected 3 antennas for a 6-channel input, got {got}")]
    ChannelMismatch { got: usize },

    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RadarError>;

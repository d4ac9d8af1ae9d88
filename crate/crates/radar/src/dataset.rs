//! Synthetic dataset generation, the on-disk layout, and loading.
//!
//! A dataset directory contains:
//!
//! - `manifest.csv` — `recording_id,label,split,n_frames`, one row per
//!   recording.
//! - `params.txt` — flat `key=value` sidecar with every generation
//!   parameter plus the training-split channel statistics.
//! - `rec_<id>.rdi` — one binary tensor file per recording:
//!   magic `RDI1`, then `u32` channels / height / width / frames (little
//!   endian), then `frames * channels * height * width` little-endian `f32`
//!   values, frame-major, each frame row-major.
//!
//! Recordings are split into train/test at whole-recording granularity
//! (the last 20% of each label's recordings are the test set, so the label
//! histogram is uniform per split). All stored tensors are standardized
//! with per-channel mean/std computed on the training split only.

use crate::frame::{mti_filter, slow_time_dataframe, synth_frame};
use crate::rdi::{range_doppler, to_network_input, ChannelStats, ChannelTensor};
use crate::{RadarConfig, RadarError, Result, TargetScene};
use lar_core::derive_seed;
use lar_core::kv::KvFile;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"RDI1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(RadarError::Format(format!("unknown split {other:?}"))),
        }
    }
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub num_labels: usize,
    pub recordings_per_label: usize,
    pub frames_per_recording: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Append the 6 slow-time channels after the 6 fast-time channels.
    pub include_slow_time: bool,
    pub radar: RadarConfig,
}

impl Default for DatasetParams {
    /// Desk-scale default: 6 labels x 20 recordings x 50 frames = 6000
    /// frames, split 80/20 by recording.
    fn default() -> Self {
        Self {
            num_labels: 6,
            recordings_per_label: 20,
            frames_per_recording: 50,
            noise_sigma: 1.0,
            seed: 1,
            include_slow_time: false,
            radar: RadarConfig::default(),
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        if self.num_labels < 2 {
            return Err(RadarError::InvalidParams(format!(
                "need at least 2 labels, got {}",
                self.num_labels
            )));
        }
        if self.recordings_per_label == 0 || self.frames_per_recording == 0 {
            return Err(RadarError::InvalidParams("recordings and frames must be positive".into()));
        }
        if self.include_slow_time && self.frames_per_recording < self.radar.n_chirps {
            return Err(RadarError::InvalidParams(format!(
                "slow-time channels need at least n_chirps = {} frames per recording, got {}",
                self.radar.n_chirps, self.frames_per_recording
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        if self.include_slow_time {
            12
        } else {
            6
        }
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("num_labels", self.num_labels)
            .set("recordings_per_label", self.recordings_per_label)
            .set("frames_per_recording", self.frames_per_recording)
            .set("noise_sigma", self.noise_sigma)
            .set("seed", self.seed)
            .set("include_slow_time", self.include_slow_time)
            .set("n_samples", self.radar.n_samples)
            .set("n_chirps", self.radar.n_chirps)
            .set("n_antennas", self.radar.n_antennas)
            .set("bandwidth", self.radar.bandwidth)
            .set("chirp_duration", self.radar.chirp_duration)
            .set("carrier_frequency", self.radar.carrier_frequency)
            .set("frame_rate", self.radar.frame_rate);
        kv
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut p = DatasetParams::default();
        let bad = |m: String| RadarError::InvalidParams(m);
        macro_rules! read {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get_parsed($key) {
                    $field = v.map_err(bad)?;
                }
            };
        }
        read!("num_labels", p.num_labels);
        read!("recordings_per_label", p.recordings_per_label);
        read!("frames_per_recording", p.frames_per_recording);
        read!("noise_sigma", p.noise_sigma);
        read!("seed", p.seed);
        read!("include_slow_time", p.include_slow_time);
        read!("n_samples", p.radar.n_samples);
        read!("n_chirps", p.radar.n_chirps);
        read!("n_antennas", p.radar.n_antennas);
        read!("bandwidth", p.radar.bandwidth);
        read!("chirp_duration", p.radar.chirp_duration);
        read!("carrier_frequency", p.radar.carrier_frequency);
        read!("frame_rate", p.radar.frame_rate);
        Ok(p)
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub recording_id: usize,
    pub label: usize,
    pub split: Split,
    pub n_frames: usize,
}

/// A recording's standardized tensors, frame-major `f32`.
#[derive(Debug, Clone)]
pub struct RecordingTensors {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    pub data: Vec<f32>,
}

impl RecordingTensors {
    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.channels * self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }
}

/// Fully loaded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub params: DatasetParams,
    pub manifest: Vec<ManifestEntry>,
    pub recordings: Vec<RecordingTensors>,
}

impl Dataset {
    pub fn num_labels(&self) -> usize {
        self.params.num_labels
    }

    /// Indices of recordings in a split.
    pub fn split_recordings(&self, split: Split) -> Vec<usize> {
        (0..self.manifest.len()).filter(|&i| self.manifest[i].split == split).collect()
    }

    /// Flat (recording, frame) index of every frame in a split.
    pub fn split_frames(&self, split: Split) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in self.split_recordings(split) {
            for f in 0..self.manifest[i].n_frames {
                out.push((i, f));
            }
        }
        out
    }
}

/// Generate a dataset and write it under `dir`. Deterministic by seed: each
/// recording draws its scene and noise from an independent stream derived
/// from (seed, recording id).
pub fn synth_dataset(params: &DatasetParams, dir: &Path) -> Result<Dataset> {
    params.validate()?;
    std::fs::create_dir_all(dir)?;

    let n_rec = params.num_labels * params.recordings_per_label;
    let test_per_label = (params.recordings_per_label as f64 * 0.2).round() as usize;

    let mut manifest = Vec::with_capacity(n_rec);
    let mut all_tensors: Vec<Vec<ChannelTensor>> = Vec::with_capacity(n_rec);

    for label in 0..params.num_labels {
        for r in 0..params.recordings_per_label {
            let recording_id = label * params.recordings_per_label + r;
            let split = if r >= params.recordings_per_label - test_per_label {
                Split::Test
            } else {
                Split::Train
            };
            let rec_seed = derive_seed(params.seed, recording_id as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(rec_seed);
            let scene = TargetScene::random_occupants(label, &params.radar, &mut rng);

            let mut raw_frames = Vec::with_capacity(params.frames_per_recording);
            for f in 0..params.frames_per_recording {
                raw_frames.push(synth_frame(&scene, &params.radar, f, params.noise_sigma, rec_seed)?);
            }

            let mut tensors = Vec::with_capacity(params.frames_per_recording);
            for f in 0..params.frames_per_recording {
                let fast = range_doppler(&mti_filter(&raw_frames[f]));
                let mut tensor = to_network_input(&fast)?;
                if params.include_slow_time {
                    let n_c = params.radar.n_chirps;
                    // trailing window ending at f; early frames reuse the
                    // initial window
                    let start = f.saturating_sub(n_c - 1).min(params.frames_per_recording - n_c);
                    let slow_frame = slow_time_dataframe(&raw_frames[start..start + n_c])?;
                    let slow = range_doppler(&mti_filter(&slow_frame));
                    let slow_tensor = to_network_input(&slow)?;
                    let mut combined =
                        ChannelTensor::zeros(12, tensor.height, tensor.width);
                    combined.data[..tensor.data.len()].copy_from_slice(&tensor.data);
                    combined.data[tensor.data.len()..].copy_from_slice(&slow_tensor.data);
                    tensor = combined;
                }
                tensors.push(tensor);
            }

            manifest.push(ManifestEntry {
                recording_id,
                label,
                split,
                n_frames: params.frames_per_recording,
            });
            all_tensors.push(tensors);
        }
    }

    // per-channel statistics from the training split only
    let channels = params.channels();
    let train_tensors = manifest
        .iter()
        .zip(&all_tensors)
        .filter(|(m, _)| m.split == Split::Train)
        .flat_map(|(_, t)| t.iter());
    let stats = ChannelStats::compute(train_tensors, channels);

    let mut recordings = Vec::with_capacity(n_rec);
    for tensors in &mut all_tensors {
        let mut data = Vec::with_capacity(tensors.len() * channels * tensors[0].height * tensors[0].width);
        for t in tensors.iter_mut() {
            stats.standardize(t);
            data.extend(t.data.iter().map(|&v| v as f32));
        }
        recordings.push(RecordingTensors {
            channels,
            height: tensors[0].height,
            width: tensors[0].width,
            n_frames: tensors.len(),
            data,
        });
    }

    // write everything
    let mut sidecar = params.to_kv();
    for c in 0..channels {
        sidecar.set(&format!("channel_mean_{c}"), format!("{:?}", stats.mean[c]));
        sidecar.set(&format!("channel_std_{c}"), format!("{:?}", stats.std[c]));
    }
    std::fs::write(dir.join("params.txt"), sidecar.render())?;

    let mut manifest_csv = String::from("recording_id,label,split,n_frames\n");
    for m in &manifest {
        manifest_csv.push_str(&format!(
            "{},{},{},{}\n",
            m.recording_id,
            m.label,
            m.split.as_str(),
            m.n_frames
        ));
    }
    std::fs::write(dir.join("manifest.csv"), manifest_csv)?;

    for (m, rec) in manifest.iter().zip(&recordings) {
        write_recording(&recording_path(dir, m.recording_id), rec)?;
    }

    Ok(Dataset { params: params.clone(), manifest, recordings })
}

pub fn recording_path(dir: &Path, recording_id: usize) -> PathBuf {
    dir.join(format!("rec_{recording_id:05}.rdi"))
}

pub fn write_recording(path: &Path, rec: &RecordingTensors) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + rec.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    for v in [rec.channels, rec.height, rec.width, rec.n_frames] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &rec.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_recording(path: &Path) -> Result<RecordingTensors> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(RadarError::Format(format!("{} is not an RDI1 file", path.display())));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let mut b = [0u8; 4];
        b.copy_from_slice(&bytes[4 + 4 * i..8 + 4 * i]);
        *d = u32::from_le_bytes(b) as usize;
    }
    let [channels, height, width, n_frames] = dims;
    let expected = 20 + channels * height * width * n_frames * 4;
    if bytes.len() != expected {
        return Err(RadarError::Format(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(channels * height * width * n_frames);
    for chunk in bytes[20..].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    Ok(RecordingTensors { channels, height, width, n_frames, data })
}

/// Load a dataset directory written by [`synth_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.csv");
    if !manifest_path.exists() {
        return Err(RadarError::Format(format!("missing manifest: {}", manifest_path.display())));
    }
    let params_text = std::fs::read_to_string(dir.join("params.txt"))?;
    let kv = KvFile::parse(&params_text)
        .map_err(|e| RadarError::Format(format!("params.txt: {e}")))?;
    let params = DatasetParams::from_kv(&kv)?;

    let text = std::fs::read_to_string(&manifest_path)?;
    let mut manifest = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(RadarError::Format(format!("manifest line {}: expected 4 fields", idx + 1)));
        }
        let parse_usize = |s: &str, what: &str| {
            s.trim().parse::<usize>().map_err(|_| {
                RadarError::Format(format!("manifest line {}: bad {what} {s:?}", idx + 1))
            })
        };
        manifest.push(ManifestEntry {
            recording_id: parse_usize(fields[0], "recording_id")?,
            label: parse_usize(fields[1], "label")?,
            split: Split::parse(fields[2].trim())?,
            n_frames: parse_usize(fields[3], "n_frames")?,
        });
    }

    let mut recordings = Vec::with_capacity(manifest.len());
    for m in &manifest {
        recordings.push(read_recording(&recording_path(dir, m.recording_id))?);
    }
    Ok(Dataset { params, manifest, recordings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params() -> DatasetParams {
        DatasetParams {
            num_labels: 3,
            recordings_per_label: 5,
            frames_per_recording: 4,
            noise_sigma: 0.5,
            seed: 7,
            include_slow_time: false,
            radar: RadarConfig { n_samples: 16, n_chirps: 8, ..RadarConfig::default() },
        }
    }

    #[test]
    fn dataset_shape_split_and_histogram() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(&tiny_params(), dir.path()).unwrap();
        assert_eq!(ds.manifest.len(), 15);
        assert_eq!(ds.split_frames(Split::Train).len(), 3 * 4 * 4);
        assert_eq!(ds.split_frames(Split::Test).len(), 3 * 1 * 4);

        // label histogram uniform per split; splits disjoint by recording
        for split in [Split::Train, Split::Test] {
            let mut hist = vec![0usize; 3];
            for i in ds.split_recordings(split) {
                hist[ds.manifest[i].label] += 1;
            }
            assert!(hist.iter().all(|&h| h == hist[0]), "{split:?}: {hist:?}");
        }
        let train = ds.split_recordings(Split::Train);
        let test = ds.split_recordings(Split::Test);
        assert!(train.iter().all(|i| !test.contains(i)));

        // tensors have the documented shape
        let rec = &ds.recordings[0];
        assert_eq!(rec.channels, 6);
        assert_eq!(rec.height, 8); // N_S / 2
        assert_eq!(rec.width, 8); // N_C
        assert_eq!(rec.n_frames, 4);
    }

    #[test]
    fn label_zero_recordings_are_noise_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = tiny_params();
        params.noise_sigma = 0.0;
        let ds = synth_dataset(&params, dir.path()).unwrap();
        // with zero noise and zero targets, MTI removes the leakage exactly,
        // so label-0 recordings are all zero before standardization; after
        // standardization they are a constant per channel
        let rec0 = &ds.recordings[0];
        assert_eq!(ds.manifest[0].label, 0);
        let hw = rec0.height * rec0.width;
        for c in 0..rec0.channels {
            let first = rec0.data[c * hw];
            assert!(rec0.data[c * hw..(c + 1) * hw].iter().all(|&v| v == first));
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical_on_disk() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        synth_dataset(&tiny_params(), dir_a.path()).unwrap();
        synth_dataset(&tiny_params(), dir_b.path()).unwrap();
        for entry in std::fs::read_dir(dir_a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between identical runs");
        }
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(&tiny_params(), dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.manifest, ds.manifest);
        assert_eq!(loaded.params, ds.params);
        for (a, b) in ds.recordings.iter().zip(&loaded.recordings) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn training_split_is_standardized() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(&tiny_params(), dir.path()).unwrap();
        let hw = ds.recordings[0].height * ds.recordings[0].width;
        let channels = ds.recordings[0].channels;
        let mut sum = vec![0.0f64; channels];
        let mut sum_sq = vec![0.0f64; channels];
        let mut count = 0u64;
        for i in ds.split_recordings(Split::Train) {
            let rec = &ds.recordings[i];
            for f in 0..rec.n_frames {
                let frame = rec.frame(f);
                for c in 0..channels {
                    for &v in &frame[c * hw..(c + 1) * hw] {
                        sum[c] += v as f64;
                        sum_sq[c] += (v as f64) * (v as f64);
                    }
                }
                count += hw as u64;
            }
        }
        for c in 0..channels {
            let mean = sum[c] / count as f64;
            let std = (sum_sq[c] / count as f64 - mean * mean).sqrt();
            // f32 storage rounds the exact f64 standardization
            assert!(mean.abs() < 1e-6, "channel {c} mean {mean}");
            assert!((std - 1.0).abs() < 1e-6, "channel {c} std {std}");
        }
    }

    #[test]
    fn slow_time_channels_require_enough_frames() {
        let mut params = tiny_params();
        params.include_slow_time = true; // frames_per_recording = 4 < n_chirps = 8
        assert!(matches!(params.validate(), Err(RadarError::InvalidParams(_))));

        params.frames_per_recording = 8;
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(&params, dir.path()).unwrap();
        assert_eq!(ds.recordings[0].channels, 12);
    }
}

//! Point-target scenes: each occupant is a reflector with a fixed range,
//! a small radial drift, and a sinusoidal micro-motion (breathing / body
//! sway) that keeps it visible after the MTI filter removes static returns.

use crate::{RadarConfig, RadarError, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// Slant range (m).
    pub range: f64,
    /// Radial velocity (m/s); positive is receding.
    pub radial_velocity: f64,
    /// Linear reflection amplitude.
    pub amplitude: f64,
    /// Azimuth angle (rad) driving the per-antenna phase offsets.
    pub angle: f64,
    /// Peak radial displacement of the micro-motion term (m).
    pub micro_motion_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetScene {
    pub targets: Vec<Target>,
}

impl TargetScene {
    pub fn empty() -> Self {
        Self { targets: Vec::new() }
    }

    /// The count label is the number of targets in the scene.
    pub fn count_label(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self, config: &RadarConfig) -> Result<()> {
        for t in &self.targets {
            if t.range < 0.0 || t.range > config.max_range() {
                return Err(RadarError::RangeAliased { range: t.range, max_range: config.max_range() });
            }
        }
        Ok(())
    }

    /// Random occupant scene with `count` targets. Ranges stay inside the
    /// middle of the unambiguous span so window leakage never wraps across
    /// the crop.
    pub fn random_occupants(count: usize, config: &RadarConfig, rng: &mut impl Rng) -> Self {
        let lo = 0.2 * config.max_range();
        let hi = 0.9 * config.max_range();
        let targets = (0..count)
            .map(|_| Target {
                range: rng.gen_range(lo..hi),
                radial_velocity: rng.gen_range(-0.08..0.08),
                amplitude: rng.gen_range(0.7..1.3),
                angle: rng.gen_range(-0.9..0.9),
                micro_motion_amplitude: rng.gen_range(0.0015..0.004),
            })
            .collect();
        Self { targets }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aliased_target_is_rejected() {
        let cfg = RadarConfig::default();
        let scene = TargetScene {
            targets: vec![Target {
                range: cfg.max_range() + 0.5,
                radial_velocity: 0.0,
                amplitude: 1.0,
                angle: 0.0,
                micro_motion_amplitude: 0.0,
            }],
        };
        assert!(matches!(scene.validate(&cfg), Err(RadarError::RangeAliased { .. })));
    }

    #[test]
    fn random_scene_has_requested_count_and_valid_ranges() {
        let cfg = RadarConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scene = TargetScene::random_occupants(4, &cfg, &mut rng);
        assert_eq!(scene.count_label(), 4);
        scene.validate(&cfg).unwrap();
    }
}

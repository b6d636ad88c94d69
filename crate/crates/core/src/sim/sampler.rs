use crate::scenario::{Lane, Role, Scene, ScenarioConfig, ScenarioKind, VehicleState};
use crate::trust::DriverType;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// splitmix64 finalizer over (seed, index, stream).
pub fn derive_seed(seed: u64, index: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform ranges for initial scenes. Gaps are bumper-to-bumper distances
/// relative to the HAV; speed offsets are relative to the HAV's speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSampler {
    pub kind: ScenarioKind,
    pub hav_speed: [f64; 2],
    pub lv_gap: [f64; 2],
    pub lv_speed_offset: [f64; 2],
    pub hv_gap: [f64; 2],
    pub hv_speed_offset: [f64; 2],
    pub tlv_gap: [f64; 2],
    pub tlv_speed_offset: [f64; 2],
}

impl Default for ScenarioSampler {
    fn default() -> Self {
        Self::dlc()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledScenario {
    pub config: ScenarioConfig,
    pub driver: DriverType,
}

impl ScenarioSampler {
    /// Contested discretionary scenes: a follower closing from behind and a
    /// target-lane lead that is slower than the HAV.
    pub fn dlc() -> Self {
        Self {
            kind: ScenarioKind::Dlc,
            hav_speed: [20.0, 26.0],
            lv_gap: [30.0, 60.0],
            lv_speed_offset: [-4.0, 0.0],
            hv_gap: [8.0, 30.0],
            hv_speed_offset: [0.0, 5.0],
            tlv_gap: [15.0, 45.0],
            tlv_speed_offset: [-4.0, -1.0],
        }
    }

    pub fn mlc() -> Self {
        Self {
            kind: ScenarioKind::Mlc,
            ..Self::dlc()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ranges = [
            ("hav_speed", self.hav_speed),
            ("lv_gap", self.lv_gap),
            ("lv_speed_offset", self.lv_speed_offset),
            ("hv_gap", self.hv_gap),
            ("hv_speed_offset", self.hv_speed_offset),
            ("tlv_gap", self.tlv_gap),
            ("tlv_speed_offset", self.tlv_speed_offset),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SimError::Invalid(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if self.hav_speed[0] < 0.0 || self.lv_gap[0] < 0.0 || self.hv_gap[0] < 0.0 || self.tlv_gap[0] < 0.0 {
            return Err(SimError::Invalid("speeds and gaps must be non-negative".into()));
        }
        if self.hav_speed[0] + self.lv_speed_offset[0].min(self.hv_speed_offset[0]).min(self.tlv_speed_offset[0]) < 0.0 {
            return Err(SimError::Invalid("sampled speeds could be negative".into()));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    /// Draws one scene on top of `base` (timing, bounds and policies are
    /// kept) and a follower type that cooperates with probability `p_coop`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        base: &ScenarioConfig,
        p_coop: f64,
        vehicle_length: f64,
    ) -> SampledScenario {
        let v = Self::draw(rng, self.hav_speed);
        let lv_gap = Self::draw(rng, self.lv_gap);
        let lv_v = v + Self::draw(rng, self.lv_speed_offset);
        let hv_gap = Self::draw(rng, self.hv_gap);
        let hv_v = v + Self::draw(rng, self.hv_speed_offset);
        let tlv_gap = Self::draw(rng, self.tlv_gap);
        let tlv_v = v + Self::draw(rng, self.tlv_speed_offset);
        let coop: f64 = rng.random();
        let scene = Scene {
            hav: VehicleState::new(1, Role::Hav, 0.0, Lane::Current, v),
            hv: VehicleState::new(2, Role::Hv, -(hv_gap + vehicle_length), Lane::Target, hv_v),
            lv: VehicleState::new(3, Role::Lv, lv_gap + vehicle_length, Lane::Current, lv_v),
            tlv: VehicleState::new(4, Role::Tlv, tlv_gap + vehicle_length, Lane::Target, tlv_v),
        };
        let mut config = base.clone();
        config.kind = self.kind;
        config.vehicles = scene.vehicles().to_vec();
        let driver = if coop < p_coop {
            DriverType::Cooperative
        } else {
            DriverType::NonCooperative
        };
        SampledScenario { config, driver }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_valid_scenes() {
        let s = ScenarioSampler::dlc();
        s.validate().unwrap();
        let base = crate::sim::tests::open_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut coop = 0;
        for _ in 0..2000 {
            let d = s.sample(&mut rng, &base, 0.8, 5.0);
            let scene = d.config.validate().unwrap();
            assert!(scene.hv.x < scene.hav.x && scene.hav.x < scene.tlv.x);
            coop += usize::from(d.driver == DriverType::Cooperative);
        }
        assert!((coop as f64 / 2000.0 - 0.8).abs() < 0.03);
    }

    #[test]
    fn seeds_differ_by_stream_and_index() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_eq!(derive_seed(5, 7, 1), derive_seed(5, 7, 1));
    }

    #[test]
    fn bad_ranges_rejected() {
        let mut s = ScenarioSampler::dlc();
        s.hv_gap = [10.0, 5.0];
        assert!(s.validate().is_err());
    }
}

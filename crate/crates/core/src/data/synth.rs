use super::{DataError, Dataset, DrivingStyle, RoleAssignment, SchemaMap, TrajectoryRecord, VehicleId};
use crate::disclosure::Policy;
use crate::game::{published, Weights};
use crate::scenario::{
    step_kinematics, surrounding_policy, IdmParams, Lane, Role, Scene, ScenarioConfig, ScenarioKind, SurroundingPolicy,
    VehicleState,
};
use crate::sim::{derive_seed, run_episode, HvDriverModel, Rationality, ScenarioSampler, SimParams};
use crate::trust::DriverType;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Car-following of a follower once the interaction is over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    pub time_headway: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    /// Standard deviation of per-frame acceleration noise (m/s²).
    pub accel_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub events: usize,
    pub kind: ScenarioKind,
    /// Share of conservative (cooperative) followers.
    pub style_mix: f64,
    pub frame_rate: f64,
    pub sampler: ScenarioSampler,
    pub weights: Weights,
    pub tau0: f64,
    pub rationality: Rationality,
    pub policy: Policy,
    /// Episodes not finished within this time are discarded (s).
    pub horizon_s: f64,
    /// Car-following recorded after the lane change completes (s).
    pub trailing_s: f64,
    pub lane_width: f64,
    /// Give up after this many sampled scenes per requested event.
    pub attempts_per_event: usize,
    pub conservative: StyleProfile,
    pub aggressive: StyleProfile,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            events: 100,
            kind: ScenarioKind::Dlc,
            style_mix: 0.5,
            frame_rate: 5.0,
            sampler: ScenarioSampler::dlc(),
            weights: published::MAGIC_DLC,
            tau0: 0.8,
            rationality: Rationality::Strict,
            policy: Policy::Honest,
            horizon_s: 10.0,
            trailing_s: 12.0,
            lane_width: 3.5,
            attempts_per_event: 50,
            conservative: StyleProfile {
                time_headway: 2.0,
                max_accel: 1.0,
                comfort_decel: 1.5,
                accel_noise: 0.1,
            },
            aggressive: StyleProfile {
                time_headway: 0.9,
                max_accel: 2.5,
                comfort_decel: 3.0,
                accel_noise: 0.7,
            },
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.events == 0 {
            return bad("events must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.style_mix) {
            return bad(format!("style_mix must lie in [0, 1], got {}", self.style_mix));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad(format!("frame_rate must be positive, got {}", self.frame_rate));
        }
        if !(0.0..=1.0).contains(&self.tau0) {
            return bad(format!("tau0 must lie in [0, 1], got {}", self.tau0));
        }
        for (name, v) in [("horizon_s", self.horizon_s), ("trailing_s", self.trailing_s), ("lane_width", self.lane_width)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.attempts_per_event == 0 {
            return bad("attempts_per_event must be at least 1".into());
        }
        for p in [self.conservative, self.aggressive] {
            if [p.time_headway, p.max_accel, p.comfort_decel].iter().any(|x| !(x.is_finite() && *x > 0.0))
                || !(p.accel_noise.is_finite() && p.accel_noise >= 0.0)
            {
                return bad(format!("invalid style profile {p:?}"));
            }
        }
        self.weights.validate().map_err(|e| DataError::InvalidConfig(e.to_string()))?;
        self.sampler.validate().map_err(|e| DataError::InvalidConfig(e.to_string()))?;
        HvDriverModel::new(DriverType::Cooperative, self.rationality).map_err(|e| DataError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let cfg: GenConfig = toml::from_str(text).map_err(|e| DataError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub index: usize,
    pub attempt: u64,
    pub driver: DriverType,
    pub style: DrivingStyle,
    pub roles: RoleAssignment,
    pub kind: ScenarioKind,
    pub start_frame: i64,
    pub commit_frame: i64,
    pub crossing_frame: i64,
    pub completion_frame: i64,
    pub end_frame: i64,
}

/// Sidecar with what the generator knows and the recording does not show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub config: GenConfig,
    pub frame_rate: f64,
    /// Ramp zones to hand to event extraction so the scenario kind is
    /// recovered.
    pub ramp_zones: Vec<[f64; 2]>,
    pub attempts: u64,
    pub events: Vec<GroundTruthEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

impl SyntheticDataset {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.dataset.write_csv(&mut w, &SchemaMap::default())?;
        w.flush()?;
        Ok(())
    }

    pub fn truth_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string_pretty(&self.truth)?)
    }

    pub fn write_truth(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        std::fs::write(path, self.truth_json()? + "\n")?;
        Ok(())
    }
}

fn base_config(cfg: &GenConfig) -> ScenarioConfig {
    let placeholder = Scene {
        hav: VehicleState::new(1, Role::Hav, 0.0, Lane::Current, 20.0),
        hv: VehicleState::new(2, Role::Hv, -20.0, Lane::Target, 20.0),
        lv: VehicleState::new(3, Role::Lv, 40.0, Lane::Current, 20.0),
        tlv: VehicleState::new(4, Role::Tlv, 40.0, Lane::Target, 20.0),
    };
    let mut base = ScenarioConfig::new(cfg.kind, placeholder);
    base.dt = 1.0 / cfg.frame_rate;
    base.horizon = (cfg.horizon_s * cfg.frame_rate).round() as usize;
    base
}

const ROLE_ORDER: [Role; 4] = [Role::Hav, Role::Hv, Role::Lv, Role::Tlv];

/// Rolls sampled scenes through the closed-loop simulation and records the
/// ones that end in a completed lane change, followed by a stretch of
/// style-dependent car following. Events occupy disjoint frame blocks and
/// use their own vehicle ids, so neighbours never leak between events.
pub fn generate_synthetic(cfg: &GenConfig, seed: u64) -> Result<SyntheticDataset, DataError> {
    cfg.validate()?;
    let base = base_config(cfg);
    let params = SimParams {
        weights: cfg.weights,
        tau0: cfg.tau0,
        ..SimParams::default()
    };
    let trailing = (cfg.trailing_s * cfg.frame_rate).round() as usize;
    let w = cfg.lane_width;
    let lane_of = |y: f64| (y / w).floor() as i32 + 1;
    let max_attempts = cfg.events as u64 * cfg.attempts_per_event as u64;

    let mut records: Vec<TrajectoryRecord> = Vec::new();
    let mut events = Vec::new();
    let mut next_frame: i64 = 0;
    let mut attempt = 0u64;
    while events.len() < cfg.events {
        if attempt >= max_attempts {
            return Err(DataError::Insufficient(format!(
                "only {} of {} events completed a lane change after {attempt} scenes",
                events.len(),
                cfg.events
            )));
        }
        let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt, 0));
        let mut drawn = cfg.sampler.sample(&mut srng, &base, cfg.style_mix, params.vehicle_length);
        drawn.config.kind = cfg.kind;
        let hv = HvDriverModel::new(drawn.driver, cfg.rationality)?;
        let ep = run_episode(&drawn.config, &params, cfg.policy, &hv, derive_seed(seed, attempt, 1))?;
        let this_attempt = attempt;
        attempt += 1;
        if !ep.completed || ep.collision {
            continue;
        }
        let style = match drawn.driver {
            DriverType::Cooperative => DrivingStyle::Conservative,
            DriverType::NonCooperative => DrivingStyle::Aggressive,
        };
        let profile = match style {
            DrivingStyle::Conservative => cfg.conservative,
            DrivingStyle::Aggressive => cfg.aggressive,
        };

        let mut scenes: Vec<Scene> = ep.trace.iter().map(|r| r.scene).collect();
        scenes.push(ep.final_scene);
        let completion = scenes.len() - 1;
        let mut nrng = ChaCha8Rng::seed_from_u64(derive_seed(seed, this_attempt, 2));
        let noise = Normal::new(0.0, profile.accel_noise).expect("noise sd validated");
        let style_idm = IdmParams {
            time_headway: profile.time_headway,
            max_accel: profile.max_accel,
            comfort_decel: profile.comfort_decel,
            ..base.idm
        };
        let bounds = base.accel_bounds;
        let cf = SurroundingPolicy::CarFollowing;
        for _ in 0..trailing {
            let s = *scenes.last().expect("at least the final scene");
            let a_hav = surrounding_policy(&s.hav, Some(&s.tlv), cf, &base.idm, &bounds);
            let a_hv = bounds.clamp(surrounding_policy(&s.hv, Some(&s.hav), cf, &style_idm, &bounds) + noise.sample(&mut nrng));
            let a_lv = surrounding_policy(&s.lv, None, base.surrounding_policy, &base.idm, &bounds);
            let a_tlv = surrounding_policy(&s.tlv, None, base.surrounding_policy, &base.idm, &bounds);
            let dt = base.dt;
            scenes.push(Scene {
                hav: step_kinematics(&s.hav, a_hav, dt).map_err(crate::sim::SimError::from)?,
                hv: step_kinematics(&s.hv, a_hv, dt).map_err(crate::sim::SimError::from)?,
                lv: step_kinematics(&s.lv, a_lv, dt).map_err(crate::sim::SimError::from)?,
                tlv: step_kinematics(&s.tlv, a_tlv, dt).map_err(crate::sim::SimError::from)?,
            });
        }

        let index = events.len();
        let id_of = |role: Role| -> VehicleId { 4 * index as u64 + 1 + ROLE_ORDER.iter().position(|r| *r == role).unwrap() as u64 };
        let start = next_frame;
        let mut crossing = None;
        for (k, s) in scenes.iter().enumerate() {
            let frame = start + k as i64;
            for role in ROLE_ORDER {
                let st = s.get(role);
                let y = match role {
                    Role::Hav => w * (0.5 + st.lateral_progress),
                    Role::Lv => 0.5 * w,
                    Role::Hv | Role::Tlv => 1.5 * w,
                };
                let lane_id = lane_of(y);
                if role == Role::Hav && lane_id == 2 && crossing.is_none() {
                    crossing = Some(frame);
                }
                records.push(TrajectoryRecord {
                    frame,
                    vehicle_id: id_of(role),
                    x: st.x,
                    y,
                    v: st.v,
                    a: st.a,
                    lane_id,
                    vy: f64::NAN,
                });
            }
        }
        let commit = ep.trace.iter().position(|r| r.committed).unwrap_or(0);
        let end = start + scenes.len() as i64 - 1;
        events.push(GroundTruthEvent {
            index,
            attempt: this_attempt,
            driver: drawn.driver,
            style,
            roles: RoleAssignment {
                hav: id_of(Role::Hav),
                hv: id_of(Role::Hv),
                lv: id_of(Role::Lv),
                tlv: id_of(Role::Tlv),
            },
            kind: cfg.kind,
            start_frame: start,
            commit_frame: start + commit as i64,
            crossing_frame: crossing.expect("a completed maneuver crosses the boundary"),
            completion_frame: start + completion as i64,
            end_frame: end,
        });
        // idle frames between blocks
        next_frame = end + 1 + (cfg.frame_rate.ceil() as i64);
    }

    // lateral velocity from positions, as the loader would derive it
    let mut dataset = Dataset::from_records(records, cfg.frame_rate)?;
    for track in dataset.tracks.values_mut() {
        let t: Vec<f64> = track.records.iter().map(|r| r.frame as f64 / cfg.frame_rate).collect();
        let y: Vec<f64> = track.records.iter().map(|r| r.y).collect();
        let (vy, _) = super::derive_derivatives(&t, &y);
        for (r, vy) in track.records.iter_mut().zip(vy) {
            r.vy = vy;
        }
    }
    let ramp_zones = match cfg.kind {
        ScenarioKind::Mlc => vec![[f64::MIN, f64::MAX]],
        ScenarioKind::Dlc => Vec::new(),
    };
    Ok(SyntheticDataset {
        dataset,
        truth: GroundTruth {
            seed,
            config: cfg.clone(),
            frame_rate: cfg.frame_rate,
            ramp_zones,
            attempts: attempt,
            events,
        },
    })
}

//! Two-lane lane-change scene and longitudinal kinematics.
//!
//! The scene always holds exactly four vehicles: the automated lane changer
//! (`Hav`), the human-driven follower in the target lane (`Hv`), the lead in
//! the current lane (`Lv`) and the lead in the target lane (`Tlv`).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("non-finite kinematic input: {0}")]
    NonFinite(&'static str),
    #[error("timestep must be positive, got {0}")]
    BadTimestep(f64),
    #[error("acceleration command {a} outside bounds [{min}, {max}]")]
    AccelOutOfBounds { a: f64, min: f64, max: f64 },
    #[error("scene must contain exactly one {0} vehicle")]
    RoleCount(Role),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Hav,
    Hv,
    Lv,
    Tlv,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Hav, Role::Hv, Role::Lv, Role::Tlv];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Hav => "HAV",
            Role::Hv => "HV",
            Role::Lv => "LV",
            Role::Tlv => "TLV",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Current,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScenarioKind {
    Mlc,
    Dlc,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Mlc => "MLC",
            ScenarioKind::Dlc => "DLC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurroundingPolicy {
    #[default]
    ConstantSpeed,
    CarFollowing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub role: Role,
    /// Longitudinal position along the driving direction (m).
    pub x: f64,
    pub lane: Lane,
    /// Speed (m/s), never negative.
    pub v: f64,
    /// Acceleration applied over the most recent step (m/s²).
    #[serde(default)]
    pub a: f64,
    /// Completion fraction of the lateral movement; only the HAV moves laterally.
    #[serde(default)]
    pub lateral_progress: f64,
}

impl VehicleState {
    pub fn new(id: u32, role: Role, x: f64, lane: Lane, v: f64) -> Self {
        Self {
            id,
            role,
            x,
            lane,
            v,
            a: 0.0,
            lateral_progress: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for AccelBounds {
    fn default() -> Self {
        Self { min: -4.0, max: 3.0 }
    }
}

impl AccelBounds {
    pub fn check(&self, a: f64) -> Result<f64, ScenarioError> {
        if !a.is_finite() {
            return Err(ScenarioError::NonFinite("acceleration"));
        }
        if a < self.min || a > self.max {
            return Err(ScenarioError::AccelOutOfBounds {
                a,
                min: self.min,
                max: self.max,
            });
        }
        Ok(a)
    }

    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.min, self.max)
    }
}

/// Advances one vehicle by `dt` under constant acceleration `a_cmd`.
///
/// Speed is clamped at zero: if the vehicle would reverse within the step it
/// stops exactly at `x - v²/(2a)` and the stored acceleration becomes the
/// effective average `(v' - v)/dt`.
pub fn step_kinematics(
    state: &VehicleState,
    a_cmd: f64,
    dt: f64,
) -> Result<VehicleState, ScenarioError> {
    if !state.x.is_finite() || !state.v.is_finite() {
        return Err(ScenarioError::NonFinite("state"));
    }
    if !a_cmd.is_finite() {
        return Err(ScenarioError::NonFinite("acceleration"));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ScenarioError::BadTimestep(dt));
    }
    let mut next = *state;
    let v_end = state.v + a_cmd * dt;
    if v_end < 0.0 {
        // a_cmd < 0 here; the stop happens at t = -v/a inside the step
        let stop_dist = if state.v > 0.0 {
            -state.v * state.v / (2.0 * a_cmd)
        } else {
            0.0
        };
        next.x = state.x + stop_dist;
        next.v = 0.0;
        next.a = -state.v / dt;
    } else {
        next.x = state.x + state.v * dt + 0.5 * a_cmd * dt * dt;
        next.v = v_end;
        next.a = a_cmd;
    }
    Ok(next)
}

/// Intelligent-driver-model parameters used by the car-following policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub vehicle_length: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            vehicle_length: 5.0,
        }
    }
}

/// Longitudinal command for a vehicle not controlled by the game.
pub fn surrounding_policy(
    state: &VehicleState,
    lead: Option<&VehicleState>,
    mode: SurroundingPolicy,
    idm: &IdmParams,
    bounds: &AccelBounds,
) -> f64 {
    match mode {
        SurroundingPolicy::ConstantSpeed => 0.0,
        SurroundingPolicy::CarFollowing => {
            let Some(lead) = lead else {
                return 0.0;
            };
            let gap = lead.x - state.x - idm.vehicle_length;
            if gap <= 0.0 {
                return bounds.min;
            }
            let closing = state.v - lead.v;
            let s_star = idm.min_gap
                + (state.v * idm.time_headway
                    + state.v * closing / (2.0 * (idm.max_accel * idm.comfort_decel).sqrt()))
                .max(0.0);
            let free = 1.0 - (state.v / idm.desired_speed).powi(4);
            let a = idm.max_accel * (free - (s_star / gap).powi(2));
            bounds.clamp(a)
        }
    }
}

/// One snapshot of the four-vehicle scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub hav: VehicleState,
    pub hv: VehicleState,
    pub lv: VehicleState,
    pub tlv: VehicleState,
}

impl Scene {
    pub fn from_vehicles(vehicles: &[VehicleState]) -> Result<Self, ScenarioError> {
        let pick = |role: Role| -> Result<VehicleState, ScenarioError> {
            let mut found = vehicles.iter().filter(|v| v.role == role);
            match (found.next(), found.next()) {
                (Some(v), None) => Ok(*v),
                _ => Err(ScenarioError::RoleCount(role)),
            }
        };
        if vehicles.len() != 4 {
            // surfaces the first role that is missing or duplicated
            for role in Role::ALL {
                pick(role)?;
            }
        }
        Ok(Self {
            hav: pick(Role::Hav)?,
            hv: pick(Role::Hv)?,
            lv: pick(Role::Lv)?,
            tlv: pick(Role::Tlv)?,
        })
    }

    pub fn get(&self, role: Role) -> &VehicleState {
        match role {
            Role::Hav => &self.hav,
            Role::Hv => &self.hv,
            Role::Lv => &self.lv,
            Role::Tlv => &self.tlv,
        }
    }

    pub fn get_mut(&mut self, role: Role) -> &mut VehicleState {
        match role {
            Role::Hav => &mut self.hav,
            Role::Hv => &mut self.hv,
            Role::Lv => &mut self.lv,
            Role::Tlv => &mut self.tlv,
        }
    }

    pub fn vehicles(&self) -> [VehicleState; 4] {
        [self.hav, self.hv, self.lv, self.tlv]
    }

    pub fn is_finite(&self) -> bool {
        self.vehicles()
            .iter()
            .all(|v| v.x.is_finite() && v.v.is_finite() && v.a.is_finite())
    }
}

fn default_dt() -> f64 {
    0.2
}
fn default_horizon() -> usize {
    300
}
fn default_lateral_duration() -> f64 {
    3.0
}

/// Everything needed to start one episode. Serialized as TOML with one
/// `[[vehicle]]` table per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_lateral_duration")]
    pub lateral_duration: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub surrounding_policy: SurroundingPolicy,
    #[serde(default)]
    pub accel_bounds: AccelBounds,
    #[serde(default)]
    pub idm: IdmParams,
    #[serde(rename = "vehicle")]
    pub vehicles: Vec<VehicleState>,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, scene: Scene) -> Self {
        Self {
            kind,
            dt: default_dt(),
            horizon: default_horizon(),
            lateral_duration: default_lateral_duration(),
            rng_seed: 0,
            surrounding_policy: SurroundingPolicy::default(),
            accel_bounds: AccelBounds::default(),
            idm: IdmParams::default(),
            vehicles: scene.vehicles().to_vec(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    /// Validates ranges and initial ordering. A horizon of zero is allowed and
    /// yields an empty episode.
    pub fn validate(&self) -> Result<Scene, ScenarioError> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(ScenarioError::BadTimestep(self.dt));
        }
        if !self.lateral_duration.is_finite() || self.lateral_duration <= 0.0 {
            return Err(ScenarioError::Invalid(format!(
                "lateral_duration must be positive, got {}",
                self.lateral_duration
            )));
        }
        let b = self.accel_bounds;
        if !(b.min.is_finite() && b.max.is_finite() && b.min < 0.0 && b.max > 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "acceleration bounds must straddle zero, got [{}, {}]",
                b.min, b.max
            )));
        }
        let scene = Scene::from_vehicles(&self.vehicles)?;
        if !scene.is_finite() {
            return Err(ScenarioError::NonFinite("initial state"));
        }
        for v in scene.vehicles() {
            if v.v < 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "{} has negative speed {}",
                    v.role, v.v
                )));
            }
        }
        if scene.tlv.x <= scene.hv.x {
            return Err(ScenarioError::Invalid(
                "TLV must start ahead of HV in the target lane".into(),
            ));
        }
        if scene.lv.x <= scene.hav.x {
            return Err(ScenarioError::Invalid(
                "LV must start ahead of HAV in the current lane".into(),
            ));
        }
        if scene.hav.lane != Lane::Current
            || scene.lv.lane != Lane::Current
            || scene.hv.lane != Lane::Target
            || scene.tlv.lane != Lane::Target
        {
            return Err(ScenarioError::Invalid(
                "HAV and LV start in the current lane, HV and TLV in the target lane".into(),
            ));
        }
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn car(x: f64, v: f64) -> VehicleState {
        VehicleState::new(1, Role::Hv, x, Lane::Target, v)
    }

    #[test]
    fn zero_acceleration_step() {
        let next = step_kinematics(&car(0.0, 20.0), 0.0, 0.2).unwrap();
        assert_abs_diff_eq!(next.x, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.v, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn braking_step() {
        let next = step_kinematics(&car(0.0, 20.0), -1.0, 0.2).unwrap();
        assert_abs_diff_eq!(next.x, 3.98, epsilon = 1e-12);
        assert_abs_diff_eq!(next.v, 19.8, epsilon = 1e-12);
    }

    #[test]
    fn stop_within_step() {
        // v + a t = 0 at t = 0.1 s, distance v²/(2|a|) = 0.005 m
        let next = step_kinematics(&car(0.0, 0.1), -1.0, 0.2).unwrap();
        assert_eq!(next.v, 0.0);
        assert_abs_diff_eq!(next.x, 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(next.a, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(step_kinematics(&car(0.0, 1.0), f64::NAN, 0.2).is_err());
        assert!(step_kinematics(&car(f64::INFINITY, 1.0), 0.0, 0.2).is_err());
        assert!(step_kinematics(&car(0.0, 1.0), 0.0, 0.0).is_err());
        assert!(AccelBounds::default().check(3.5).is_err());
        assert!(AccelBounds::default().check(-4.0).is_ok());
    }

    #[test]
    fn closed_form_over_random_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = rng.random_range(-500.0..500.0);
            let v = rng.random_range(5.0..35.0);
            let a = rng.random_range(-4.0..3.0);
            let dt = rng.random_range(0.01..0.5);
            let next = step_kinematics(&car(x, v), a, dt).unwrap();
            if v + a * dt >= 0.0 {
                assert!((next.x - (x + v * dt + 0.5 * a * dt * dt)).abs() < 1e-9);
                assert!((next.v - (v + a * dt)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_speed_policy() {
        let s = car(0.0, 20.0);
        let a = surrounding_policy(
            &s,
            None,
            SurroundingPolicy::ConstantSpeed,
            &IdmParams::default(),
            &AccelBounds::default(),
        );
        assert_eq!(a, 0.0);
    }

    #[test]
    fn car_following_free_flow_and_limit() {
        let idm = IdmParams::default();
        let bounds = AccelBounds::default();
        let follower = car(0.0, 20.0);
        let far = VehicleState::new(2, Role::Tlv, 300.0, Lane::Target, 25.0);
        let a = surrounding_policy(&follower, Some(&far), SurroundingPolicy::CarFollowing, &idm, &bounds);
        assert!(a >= 0.0);

        let close = VehicleState::new(2, Role::Tlv, idm.vehicle_length + 0.01, Lane::Target, 10.0);
        let a = surrounding_policy(&follower, Some(&close), SurroundingPolicy::CarFollowing, &idm, &bounds);
        assert!(a <= bounds.min);

        // no lead falls back to zero
        let a = surrounding_policy(&follower, None, SurroundingPolicy::CarFollowing, &idm, &bounds);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn car_following_non_increasing_in_closing_speed() {
        let idm = IdmParams::default();
        let bounds = AccelBounds::default();
        let lead = VehicleState::new(2, Role::Tlv, 40.0, Lane::Target, 20.0);
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let follower = car(0.0, 10.0 + k as f64 * 0.5);
            let a = surrounding_policy(&follower, Some(&lead), SurroundingPolicy::CarFollowing, &idm, &bounds);
            assert!(a <= prev + 1e-12);
            prev = a;
        }
    }

    fn sample_scene() -> Scene {
        Scene {
            hav: VehicleState::new(1, Role::Hav, 0.0, Lane::Current, 22.0),
            hv: VehicleState::new(2, Role::Hv, -20.0, Lane::Target, 24.0),
            lv: VehicleState::new(3, Role::Lv, 40.0, Lane::Current, 21.0),
            tlv: VehicleState::new(4, Role::Tlv, 25.0, Lane::Target, 26.0),
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ScenarioConfig::new(ScenarioKind::Dlc, sample_scene());
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Dlc, sample_scene());
        cfg.vehicles.pop();
        assert!(matches!(cfg.validate(), Err(ScenarioError::RoleCount(Role::Tlv))));

        let mut cfg = ScenarioConfig::new(ScenarioKind::Dlc, sample_scene());
        cfg.vehicles[1].role = Role::Hav;
        assert!(matches!(cfg.validate(), Err(ScenarioError::RoleCount(_))));

        let mut cfg = ScenarioConfig::new(ScenarioKind::Dlc, sample_scene());
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::new(ScenarioKind::Dlc, sample_scene());
        cfg.vehicles[3].x = -30.0;
        assert!(cfg.validate().is_err());
    }
}

//! Closed-loop episodes: stage game, disclosure, follower response, trust
//! update and kinematics, one game stage per simulation step.

mod batch;
mod metrics;
mod sampler;

pub use batch::{run_batch, ArmStats, ArmSummary, BatchConfig, BatchResult, BatchStats, PairRecord, Quantiles};
pub use metrics::{lane_change_time, step_tdtc, tdtc};
pub use sampler::{derive_seed, ScenarioSampler, SampledScenario};

use crate::disclosure::{choose_disclosure, DisclosureEvent, DisclosureState, Policy, Protection};
use crate::game::{build_stage_game, ttc, Column, GameError, GameParams, HavAction, StageGame, Weights};
use crate::scenario::{
    step_kinematics, surrounding_policy, Lane, Role, Scene, ScenarioConfig, ScenarioError, SurroundingPolicy,
    VehicleState,
};
use crate::trust::{classify_action, ActionLabel, CountUpdate, DriverType, LikelihoodTable, TrustBelief, TrustError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error("invalid simulation parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// How sharply the simulated follower responds to payoff differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationality {
    Quantal(f64),
    /// Always the first best response.
    Strict,
    /// Ignores the game: fixed probabilities over (Maintain, Accelerate,
    /// Decelerate). Used to script aggressive or erratic followers.
    Fixed([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvDriverModel {
    pub driver: DriverType,
    pub rationality: Rationality,
}

impl HvDriverModel {
    pub fn new(driver: DriverType, rationality: Rationality) -> Result<Self, SimError> {
        if let Rationality::Quantal(l) = rationality {
            if !(l.is_finite() && l >= 0.0) {
                return Err(SimError::Invalid(format!("lambda must be finite and ≥ 0, got {l}")));
            }
        }
        if let Rationality::Fixed(p) = rationality {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(SimError::Invalid(format!("fixed mix {p:?} is not a distribution")));
            }
        }
        Ok(Self { driver, rationality })
    }

    /// Choice probabilities in row order for one payoff column.
    pub fn probabilities(&self, utilities: &[f64; 3]) -> [f64; 3] {
        match self.rationality {
            Rationality::Strict => {
                let mut best = 0;
                for j in 1..3 {
                    if utilities[j] > utilities[best] {
                        best = j;
                    }
                }
                let mut p = [0.0; 3];
                p[best] = 1.0;
                p
            }
            Rationality::Quantal(lambda) => {
                let m = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w = utilities.map(|u| (lambda * (u - m)).exp());
                let z: f64 = w.iter().sum();
                w.map(|x| x / z)
            }
            Rationality::Fixed(p) => p,
        }
    }
}

/// Samples the follower's reply to `disclosed` from its own type column.
/// Exactly one uniform is drawn per call whatever the rationality, so runs
/// that differ only in policy share their random stream.
pub fn hv_respond<R: Rng + ?Sized>(
    model: &HvDriverModel,
    game: &StageGame,
    disclosed: HavAction,
    rng: &mut R,
) -> ActionLabel {
    let u: f64 = rng.random();
    let col = Column::new(model.driver, disclosed);
    let p = model.probabilities(&game.hv_payoff[col.index()]);
    let mut acc = 0.0;
    for (j, pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return ActionLabel::from_index(j);
        }
    }
    // rounding left u above the last partial sum
    ActionLabel::from_index(p.iter().rposition(|&x| x > 0.0).unwrap_or(0))
}

/// Episode-level settings that are not part of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub weights: Weights,
    pub game: GameParams,
    /// Prior trust that the follower cooperates.
    pub tau0: f64,
    pub likelihoods: LikelihoodTable,
    pub count_update: CountUpdate,
    pub action_threshold: f64,
    pub protection: Protection,
    /// Minimum TTC to the target-lane lead and from the follower before the
    /// HAV commits to the lateral movement (s).
    pub gap_accept_ttc: f64,
    /// Follower TTC below which a maneuver that is at most half done is
    /// called off (s).
    pub abort_ttc: f64,
    pub vehicle_length: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            weights: crate::game::published::MAGIC_DLC,
            game: GameParams::default(),
            tau0: 0.8,
            likelihoods: LikelihoodTable::default(),
            count_update: CountUpdate::default(),
            action_threshold: 1.0,
            protection: Protection::default(),
            gap_accept_ttc: 2.0,
            abort_ttc: 1.0,
            vehicle_length: 5.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        self.weights.validate()?;
        self.likelihoods.validate()?;
        if !(0.0..=1.0).contains(&self.tau0) {
            return Err(SimError::Invalid(format!("tau0 must lie in [0, 1], got {}", self.tau0)));
        }
        let positive = [
            ("action_threshold", self.action_threshold),
            ("gap_accept_ttc", self.gap_accept_ttc),
            ("vehicle_length", self.vehicle_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.abort_ttc.is_finite() && self.abort_ttc >= 0.0) {
            return Err(SimError::Invalid(format!("abort_ttc must be ≥ 0, got {}", self.abort_ttc)));
        }
        if !(self.protection.value.is_finite() && self.protection.value >= 0.0) {
            return Err(SimError::Invalid("protection threshold must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Collision,
    /// The follower overtook the HAV before any maneuver began.
    FollowerPassed,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    /// States at decision time.
    pub scene: Scene,
    /// Equilibrium strategy of the HAV for this stage.
    pub intended: HavAction,
    pub disclosed: HavAction,
    pub deception_active: bool,
    pub event: DisclosureEvent,
    pub hv_action: ActionLabel,
    /// Acceleration the follower actually applied (m/s²).
    pub hv_accel: f64,
    /// Trust used for this decision.
    pub tau: f64,
    pub tau_at_start: Option<f64>,
    pub u_a: f64,
    pub u_h: f64,
    /// Lateral maneuver under way during this step.
    pub committed: bool,
    pub progress_after: f64,
    pub hav_x_after: f64,
    pub hav_v_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeceptionEventRecord {
    pub step: usize,
    pub t: f64,
    pub event: DisclosureEvent,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub policy: Policy,
    pub hv: HvDriverModel,
    pub dt: f64,
    pub lateral_duration: f64,
    pub trace: Vec<TraceRow>,
    pub outcome: Option<Outcome>,
    pub completed: bool,
    pub collision: bool,
    pub lane_change_time: Option<f64>,
    pub min_tdtc: Option<f64>,
    /// Trust before each step plus the value after the last one.
    pub trust: Vec<f64>,
    pub deception_events: Vec<DeceptionEventRecord>,
    pub maneuver_aborts: usize,
    /// States after the last step.
    pub final_scene: Scene,
}

impl EpisodeResult {
    pub fn final_tau(&self) -> f64 {
        *self.trust.last().expect("trust trajectory holds at least the prior")
    }

    pub fn min_tau(&self) -> f64 {
        self.trust.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn protective_terminations(&self) -> usize {
        self.deception_events
            .iter()
            .filter(|e| e.event == DisclosureEvent::ProtectiveTermination)
            .count()
    }

    pub fn deceptive_steps(&self) -> usize {
        self.trace.iter().filter(|r| r.deception_active).count()
    }

    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "t".to_string()];
        for role in Role::ALL {
            for f in ["x", "v", "a"] {
                header.push(format!("{}_{f}", role.to_string().to_lowercase()));
            }
        }
        header.extend(
            [
                "hav_progress",
                "intended",
                "disclosed",
                "deception",
                "event",
                "hv_action",
                "hv_accel",
                "tau",
                "tau_at_start",
                "u_a",
                "u_h",
                "committed",
            ]
            .map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.trace {
            let mut rec = vec![r.step.to_string(), fmt(r.t)];
            for role in Role::ALL {
                let s = r.scene.get(role);
                rec.extend([fmt(s.x), fmt(s.v), fmt(s.a)]);
            }
            rec.push(fmt(r.scene.hav.lateral_progress));
            rec.push(r.intended.to_string());
            rec.push(r.disclosed.to_string());
            rec.push(u8::from(r.deception_active).to_string());
            rec.push(format!("{:?}", r.event));
            rec.push(r.hv_action.to_string());
            rec.push(fmt(r.hv_accel));
            rec.push(fmt(r.tau));
            rec.push(r.tau_at_start.map(fmt).unwrap_or_default());
            rec.push(fmt(r.u_a));
            rec.push(fmt(r.u_h));
            rec.push(u8::from(r.committed).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// IDM acceleration toward `lead`, free-road when there is none.
fn idm_accel(cfg: &ScenarioConfig, me: &VehicleState, lead: Option<&VehicleState>) -> f64 {
    let idm = &cfg.idm;
    match lead {
        Some(l) => surrounding_policy(me, Some(l), SurroundingPolicy::CarFollowing, idm, &cfg.accel_bounds),
        None => {
            let free = 1.0 - (me.v / idm.desired_speed).powi(4);
            cfg.accel_bounds.clamp(idm.max_accel * free)
        }
    }
}

fn occupies_target(hav: &VehicleState) -> bool {
    hav.lateral_progress > 0.0 || hav.lane == Lane::Target
}

fn occupies_current(hav: &VehicleState) -> bool {
    hav.lateral_progress < 1.0 && hav.lane == Lane::Current
}

/// True when any two vehicles sharing a lane overlap longitudinally.
pub fn overlapping(scene: &Scene, length: f64) -> bool {
    let hit = |a: &VehicleState, b: &VehicleState| (a.x - b.x).abs() < length;
    let mut pairs: Vec<(&VehicleState, &VehicleState)> = vec![(&scene.hv, &scene.tlv)];
    if occupies_current(&scene.hav) {
        pairs.push((&scene.hav, &scene.lv));
    }
    if occupies_target(&scene.hav) {
        pairs.push((&scene.hav, &scene.hv));
        pairs.push((&scene.hav, &scene.tlv));
    }
    pairs.into_iter().any(|(a, b)| hit(a, b))
}

/// TTC on the bumper-to-bumper gap rather than between reference points.
fn net_ttc(follower: &VehicleState, leader: &VehicleState, length: f64) -> f64 {
    ttc(follower.x + length, leader.x, follower.v, leader.v)
}

fn gap_acceptable(scene: &Scene, params: &SimParams, min_gap: f64) -> bool {
    let (hav, hv, tlv) = (&scene.hav, &scene.hv, &scene.tlv);
    let l = params.vehicle_length;
    tlv.x - hav.x >= l + min_gap
        && hav.x - hv.x >= l + min_gap
        && net_ttc(hav, tlv, l) > params.gap_accept_ttc
        && net_ttc(hv, hav, l) > params.gap_accept_ttc
}

/// Runs one episode. The random stream is seeded from `seed` alone; the
/// scenario's own `rng_seed` is ignored here so batches control seeding.
pub fn run_episode(
    config: &ScenarioConfig,
    params: &SimParams,
    policy: Policy,
    hv: &HvDriverModel,
    seed: u64,
) -> Result<EpisodeResult, SimError> {
    let mut scene = config.validate()?;
    params.validate()?;
    let dt = config.dt;
    let game_params = GameParams { dt, ..params.game };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut belief = TrustBelief::new(params.tau0, params.likelihoods.clone(), params.count_update)?;
    let mut disclosure = DisclosureState::new(policy, params.protection);
    let required_steps = ((config.lateral_duration / dt) - 1e-9).ceil().max(1.0) as usize;

    let mut result = EpisodeResult {
        seed,
        policy,
        hv: *hv,
        dt,
        lateral_duration: config.lateral_duration,
        trace: Vec::new(),
        outcome: None,
        completed: false,
        collision: false,
        lane_change_time: None,
        min_tdtc: None,
        trust: vec![belief.tau],
        deception_events: Vec::new(),
        maneuver_aborts: 0,
        final_scene: scene,
    };

    let mut committed = false;
    let mut maneuver_steps = 0usize;

    for step in 0..config.horizon {
        let t = step as f64 * dt;
        let tau = belief.tau;
        let game = build_stage_game(&scene, config.kind, tau, params.weights, &game_params)?;
        let eq = crate::game::solve_pbe(&game);

        disclosure = if committed {
            disclosure.reveal(HavAction::LaneChange)
        } else {
            choose_disclosure(&eq, tau, &disclosure)
        };
        if disclosure.last_event != DisclosureEvent::Truthful {
            result.deception_events.push(DeceptionEventRecord {
                step,
                t,
                event: disclosure.last_event,
                tau,
            });
        }

        let action = hv_respond(hv, &game, disclosure.disclosed, &mut rng);

        // follower: chosen action, capped by car-following braking toward
        // whoever is physically ahead of it
        let mut hv_lead = &scene.tlv;
        if occupies_target(&scene.hav) && scene.hav.x > scene.hv.x && scene.hav.x < scene.tlv.x {
            hv_lead = &scene.hav;
        }
        let mut a_hv = game_params.hv_kinematics.accel(action);
        let a_follow = idm_accel(config, &scene.hv, Some(hv_lead));
        if a_follow < 0.0 && a_follow < a_hv {
            a_hv = a_follow;
        }
        let a_hv = config.accel_bounds.clamp(a_hv);

        if !committed {
            let deceived_into_lc = disclosure.deception_active && disclosure.disclosed == HavAction::LaneChange;
            let wants_lc = eq.hav_choice == HavAction::LaneChange || deceived_into_lc;
            if wants_lc && gap_acceptable(&scene, params, config.idm.min_gap) {
                committed = true;
            }
        } else if scene.hav.lateral_progress <= 0.5 && net_ttc(&scene.hv, &scene.hav, params.vehicle_length) < params.abort_ttc {
            committed = false;
            maneuver_steps = 0;
            scene.hav.lateral_progress = 0.0;
            result.maneuver_aborts += 1;
        }

        let a_hav = if committed {
            idm_accel(config, &scene.hav, Some(&scene.lv)).min(idm_accel(config, &scene.hav, Some(&scene.tlv)))
        } else {
            idm_accel(config, &scene.hav, Some(&scene.lv))
        };
        let a_lv = surrounding_policy(&scene.lv, None, config.surrounding_policy, &config.idm, &config.accel_bounds);
        let a_tlv = surrounding_policy(&scene.tlv, None, config.surrounding_policy, &config.idm, &config.accel_bounds);

        let col = Column::new(hv.driver, disclosure.disclosed);
        let mut row = TraceRow {
            step,
            t,
            scene,
            intended: disclosure.intended,
            disclosed: disclosure.disclosed,
            deception_active: disclosure.deception_active,
            event: disclosure.last_event,
            hv_action: action,
            hv_accel: a_hv,
            tau,
            tau_at_start: disclosure.tau_at_start,
            u_a: game.u_hav(col, action),
            u_h: game.u_hv(col, action),
            committed,
            progress_after: 0.0,
            hav_x_after: 0.0,
            hav_v_after: 0.0,
        };

        let mut next = scene;
        next.hav = step_kinematics(&scene.hav, a_hav, dt)?;
        next.hv = step_kinematics(&scene.hv, a_hv, dt)?;
        next.lv = step_kinematics(&scene.lv, a_lv, dt)?;
        next.tlv = step_kinematics(&scene.tlv, a_tlv, dt)?;
        if committed {
            maneuver_steps += 1;
            next.hav.lateral_progress = (maneuver_steps as f64 / required_steps as f64).min(1.0);
            if maneuver_steps >= required_steps {
                next.hav.lateral_progress = 1.0;
                next.hav.lane = Lane::Target;
            }
        }
        row.progress_after = next.hav.lateral_progress;
        row.hav_x_after = next.hav.x;
        row.hav_v_after = next.hav.v;
        result.trace.push(row);

        let label = classify_action(next.hv.a, params.action_threshold)?;
        belief.observe(t + dt, label, next.hv.a);
        result.trust.push(belief.tau);
        scene = next;

        if overlapping(&scene, params.vehicle_length) {
            result.collision = true;
            result.outcome = Some(Outcome::Collision);
            break;
        }
        if scene.hav.lateral_progress >= 1.0 {
            result.completed = true;
            result.outcome = Some(Outcome::Completed);
            break;
        }
        if !committed && scene.hv.x >= scene.hav.x {
            result.outcome = Some(Outcome::FollowerPassed);
            break;
        }
    }
    result.final_scene = scene;
    if result.outcome.is_none() && !result.trace.is_empty() {
        result.outcome = Some(Outcome::Horizon);
    }
    result.lane_change_time = lane_change_time(&result.trace, dt);
    result.min_tdtc = tdtc(&result.trace, config.lateral_duration);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioKind;
    use approx::assert_abs_diff_eq;

    pub(crate) fn open_scene() -> ScenarioConfig {
        let scene = Scene {
            hav: VehicleState::new(1, Role::Hav, 0.0, Lane::Current, 25.0),
            hv: VehicleState::new(2, Role::Hv, -80.0, Lane::Target, 18.0),
            lv: VehicleState::new(3, Role::Lv, 60.0, Lane::Current, 22.0),
            tlv: VehicleState::new(4, Role::Tlv, 120.0, Lane::Target, 30.0),
        };
        ScenarioConfig::new(ScenarioKind::Dlc, scene)
    }

    fn strict(d: DriverType) -> HvDriverModel {
        HvDriverModel::new(d, Rationality::Strict).unwrap()
    }

    #[test]
    fn quantal_arithmetic() {
        let m = HvDriverModel::new(DriverType::Cooperative, Rationality::Quantal(5.0)).unwrap();
        let p = m.probabilities(&[0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(p[2], 5f64.exp() / (5f64.exp() + 2.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.9867, epsilon = 1e-4);
        let u = HvDriverModel::new(DriverType::Cooperative, Rationality::Quantal(0.0)).unwrap();
        for x in u.probabilities(&[3.0, -1.0, 0.2]) {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(HvDriverModel::new(DriverType::Cooperative, Rationality::Quantal(f64::NAN)).is_err());
        assert!(HvDriverModel::new(DriverType::Cooperative, Rationality::Fixed([0.5, 0.6, 0.0])).is_err());
        let f = HvDriverModel::new(DriverType::Cooperative, Rationality::Fixed([0.1, 0.8, 0.1])).unwrap();
        assert_eq!(f.probabilities(&[9.0, 0.0, 0.0]), [0.1, 0.8, 0.1]);
    }

    #[test]
    fn uniform_response_frequencies() {
        let m = HvDriverModel::new(DriverType::NonCooperative, Rationality::Quantal(0.0)).unwrap();
        let game = StageGame::from_tables(0.5, [[0.0; 3]; 4], [[1.0, 0.0, -1.0]; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[hv_respond(&m, &game, HavAction::Yield, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015, "{counts:?}");
        }
    }

    #[test]
    fn strict_matches_equilibrium() {
        let game = build_stage_game(
            &open_scene().validate().unwrap(),
            ScenarioKind::Dlc,
            0.6,
            crate::game::published::MAGIC_DLC,
            &GameParams::default(),
        )
        .unwrap();
        let eq = crate::game::solve_pbe(&game);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for d in [DriverType::Cooperative, DriverType::NonCooperative] {
            for h in HavAction::ALL {
                assert_eq!(hv_respond(&strict(d), &game, h, &mut rng), eq.response(d, h));
            }
        }
    }

    #[test]
    fn open_road_completes_quickly() {
        let cfg = open_scene();
        let r = run_episode(&cfg, &SimParams::default(), Policy::Honest, &strict(DriverType::Cooperative), 1).unwrap();
        assert!(r.completed, "{:?}", r.outcome);
        let t = r.lane_change_time.unwrap();
        assert!(t >= cfg.lateral_duration - 1e-9 && t <= cfg.lateral_duration + 1.0, "{t}");
        assert!(!r.collision);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let mut cfg = open_scene();
        cfg.horizon = 0;
        let r = run_episode(&cfg, &SimParams::default(), Policy::Deceptive, &strict(DriverType::Cooperative), 1).unwrap();
        assert!(r.trace.is_empty());
        assert!(!r.completed);
        assert_eq!(r.lane_change_time, None);
        assert_eq!(r.outcome, None);
    }

    #[test]
    fn episodes_are_deterministic() {
        let cfg = open_scene();
        let m = HvDriverModel::new(DriverType::NonCooperative, Rationality::Quantal(3.0)).unwrap();
        let a = run_episode(&cfg, &SimParams::default(), Policy::Deceptive, &m, 42).unwrap();
        let b = run_episode(&cfg, &SimParams::default(), Policy::Deceptive, &m, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trust_stays_in_bounds() {
        let cfg = open_scene();
        let m = HvDriverModel::new(DriverType::NonCooperative, Rationality::Quantal(0.0)).unwrap();
        for seed in 0..20 {
            let r = run_episode(&cfg, &SimParams::default(), Policy::Deceptive, &m, seed).unwrap();
            assert!(r.trust.iter().all(|t| (0.0..=1.0).contains(t)));
            assert_eq!(r.trust.len(), r.trace.len() + 1);
        }
    }

    #[test]
    fn overlap_rules() {
        let mut s = open_scene().validate().unwrap();
        assert!(!overlapping(&s, 5.0));
        s.hv.x = s.hav.x - 3.0;
        // different lanes until the HAV starts moving across
        assert!(!overlapping(&s, 5.0));
        s.hav.lateral_progress = 0.2;
        assert!(overlapping(&s, 5.0));
        s.hav.lateral_progress = 0.0;
        s.lv.x = s.hav.x + 4.9;
        assert!(overlapping(&s, 5.0));
    }

    #[test]
    fn bad_params_rejected() {
        let p = SimParams { tau0: 1.5, ..SimParams::default() };
        let r = run_episode(&open_scene(), &p, Policy::Honest, &strict(DriverType::Cooperative), 0);
        assert!(matches!(r, Err(SimError::Invalid(_))));
        let mut cfg = open_scene();
        cfg.dt = 0.0;
        let r = run_episode(&cfg, &SimParams::default(), Policy::Honest, &strict(DriverType::Cooperative), 0);
        assert!(matches!(r, Err(SimError::Scenario(_))));
    }

    #[test]
    fn trace_csv_has_row_per_step() {
        let r = run_episode(&open_scene(), &SimParams::default(), Policy::Honest, &strict(DriverType::Cooperative), 0).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), r.trace.len() + 1);
    }
}

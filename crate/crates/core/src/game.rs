//! Single-stage incomplete-information lane-change game.
//!
//! Nature draws the follower type from the HAV's belief, the HAV discloses
//! `LaneChange` or `Yield` on the eHMI, and the follower picks v, v+ or v−.
//! Payoff columns follow the table layout: 1 = cooperative/LC,
//! 2 = cooperative/Yield, 3 = non-cooperative/LC, 4 = non-cooperative/Yield.

use crate::scenario::{step_kinematics, Role, Scene, ScenarioKind};
use crate::trust::{ActionLabel, DriverType};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("trust must lie in [0, 1], got {0}")]
    BadTau(f64),
    #[error("weights must be finite and non-negative: {0:?}")]
    BadWeights(Weights),
    #[error("scene contains non-finite states")]
    NonFiniteScene,
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Kinematics(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_s: f64,
    pub w_e: f64,
    pub w_a: f64,
}

impl Weights {
    pub fn new(w_s: f64, w_e: f64, w_a: f64) -> Result<Self, GameError> {
        let w = Self { w_s, w_e, w_a };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if [self.w_s, self.w_e, self.w_a]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(GameError::BadWeights(*self))
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w_s: self.w_s * k,
            w_e: self.w_e * k,
            w_a: self.w_a * k,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w_s, self.w_e, self.w_a]
    }
}

/// Calibrated weights for the four dataset/scenario combinations.
pub mod published {
    use super::Weights;

    pub const HIGHD_EXID_MLC: Weights = Weights { w_e: 0.292, w_s: 0.734, w_a: 0.429 };
    pub const HIGHD_EXID_DLC: Weights = Weights { w_e: 0.651, w_s: 0.677, w_a: 0.406 };
    pub const MAGIC_MLC: Weights = Weights { w_e: 0.433, w_s: 0.518, w_a: 0.806 };
    pub const MAGIC_DLC: Weights = Weights { w_e: 0.724, w_s: 0.529, w_a: 0.751 };

    pub fn by_name(name: &str) -> Option<Weights> {
        match name.to_ascii_lowercase().replace(['-', '&'], "_").as_str() {
            "highd_exid_mlc" | "highd_mlc" => Some(HIGHD_EXID_MLC),
            "highd_exid_dlc" | "highd_dlc" => Some(HIGHD_EXID_DLC),
            "magic_mlc" => Some(MAGIC_MLC),
            "magic_dlc" => Some(MAGIC_DLC),
            _ => None,
        }
    }
}

/// What the HAV shows on its eHMI. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HavAction {
    LaneChange,
    Yield,
}

impl HavAction {
    pub const ALL: [HavAction; 2] = [HavAction::LaneChange, HavAction::Yield];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Self {
        match self {
            HavAction::LaneChange => HavAction::Yield,
            HavAction::Yield => HavAction::LaneChange,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HavAction::LaneChange => "LC",
            HavAction::Yield => "Yield",
        }
    }
}

impl fmt::Display for HavAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One payoff column: follower type crossed with the disclosed HAV action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub driver: DriverType,
    pub disclosure: HavAction,
}

impl Column {
    pub const ALL: [Column; 4] = [
        Column { driver: DriverType::Cooperative, disclosure: HavAction::LaneChange },
        Column { driver: DriverType::Cooperative, disclosure: HavAction::Yield },
        Column { driver: DriverType::NonCooperative, disclosure: HavAction::LaneChange },
        Column { driver: DriverType::NonCooperative, disclosure: HavAction::Yield },
    ];

    pub fn new(driver: DriverType, disclosure: HavAction) -> Self {
        Self { driver, disclosure }
    }

    /// Zero-based column index (the table's `i - 1`).
    pub fn index(self) -> usize {
        self.driver.index() * 2 + self.disclosure.index()
    }
}

/// Commanded follower acceleration for each action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HvKinematics {
    pub maintain: f64,
    pub accelerate: f64,
    pub decelerate: f64,
}

impl Default for HvKinematics {
    fn default() -> Self {
        Self {
            maintain: 0.0,
            accelerate: 1.5,
            decelerate: -2.0,
        }
    }
}

impl HvKinematics {
    pub fn accel(&self, action: ActionLabel) -> f64 {
        match action {
            ActionLabel::Maintain => self.maintain,
            ActionLabel::Accelerate => self.accelerate,
            ActionLabel::Decelerate => self.decelerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameParams {
    /// Added to the minimum TTC inside the safety exponent.
    pub epsilon: f64,
    /// Projection horizon for payoff evaluation (s).
    pub dt: f64,
    pub hv_kinematics: HvKinematics,
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            dt: 0.2,
            hv_kinematics: HvKinematics::default(),
        }
    }
}

/// Time to collision between a subject and another vehicle:
/// `(x_other - x_subject) / (v_subject - v_other)` when strictly positive,
/// infinite otherwise.
pub fn ttc(x_follower: f64, x_leader: f64, v_follower: f64, v_leader: f64) -> f64 {
    let t = (x_leader - x_follower) / (v_follower - v_leader);
    if t > 0.0 && t.is_finite() {
        t
    } else {
        f64::INFINITY
    }
}

fn relevant_safety_set(subject: Role, disclosure: HavAction) -> &'static [Role] {
    match (subject, disclosure) {
        (Role::Hav, HavAction::LaneChange) => &[Role::Tlv, Role::Hv],
        (Role::Hav, HavAction::Yield) => &[Role::Lv],
        (_, HavAction::LaneChange) => &[Role::Hav],
        (_, HavAction::Yield) => &[Role::Tlv],
    }
}

fn reference_lead(subject: Role, disclosure: HavAction) -> Role {
    match (subject, disclosure) {
        (Role::Hav, HavAction::LaneChange) => Role::Tlv,
        (Role::Hav, HavAction::Yield) => Role::Lv,
        (_, HavAction::LaneChange) => Role::Hav,
        (_, HavAction::Yield) => Role::Tlv,
    }
}

/// Minimum TTC of `subject` over its relevant set for the column.
pub fn min_ttc(subject: Role, scene: &Scene, column: Column) -> f64 {
    let me = scene.get(subject);
    relevant_safety_set(subject, column.disclosure)
        .iter()
        .map(|r| {
            let other = scene.get(*r);
            ttc(me.x, other.x, me.v, other.v)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `exp(-1 / (T_min + eps))`; exactly 1 when no relevant vehicle is on a
/// collision course.
pub fn safety_payoff(subject: Role, scene: &Scene, column: Column, epsilon: f64) -> f64 {
    let t_min = min_ttc(subject, scene, column);
    if t_min.is_infinite() {
        1.0
    } else {
        (-1.0 / (t_min + epsilon)).exp()
    }
}

/// `v_lead - v_subject + a_lead · (x_lead - x_subject)` against the column's
/// reference lead.
pub fn efficiency_payoff(subject: Role, scene: &Scene, column: Column) -> f64 {
    let me = scene.get(subject);
    let lead = scene.get(reference_lead(subject, column.disclosure));
    lead.v - me.v + lead.a * (lead.x - me.x)
}

/// Advances every vehicle one horizon at its current acceleration, except the
/// follower which executes `action`.
pub fn project_scene(scene: &Scene, action: ActionLabel, params: &GameParams) -> Result<Scene, GameError> {
    let mut next = *scene;
    for role in Role::ALL {
        let state = scene.get(role);
        let a = if role == Role::Hv {
            params.hv_kinematics.accel(action)
        } else {
            state.a
        };
        *next.get_mut(role) = step_kinematics(state, a, params.dt)?;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGame {
    pub kind: ScenarioKind,
    pub tau: f64,
    pub weights: Weights,
    pub scene: Scene,
    /// `hav_payoff[i][j]`, column i (0-based), follower action j (0-based).
    pub hav_payoff: [[f64; 3]; 4],
    pub hv_payoff: [[f64; 3]; 4],
}

impl StageGame {
    /// A game with externally supplied payoff tables.
    pub fn from_tables(tau: f64, hav_payoff: [[f64; 3]; 4], hv_payoff: [[f64; 3]; 4]) -> Self {
        Self {
            kind: ScenarioKind::Dlc,
            tau,
            weights: Weights { w_s: 0.0, w_e: 0.0, w_a: 0.0 },
            scene: Scene {
                hav: crate::scenario::VehicleState::new(0, Role::Hav, 0.0, crate::scenario::Lane::Current, 0.0),
                hv: crate::scenario::VehicleState::new(1, Role::Hv, 0.0, crate::scenario::Lane::Target, 0.0),
                lv: crate::scenario::VehicleState::new(2, Role::Lv, 0.0, crate::scenario::Lane::Current, 0.0),
                tlv: crate::scenario::VehicleState::new(3, Role::Tlv, 0.0, crate::scenario::Lane::Target, 0.0),
            },
            hav_payoff,
            hv_payoff,
        }
    }

    pub fn u_hav(&self, column: Column, action: ActionLabel) -> f64 {
        self.hav_payoff[column.index()][action.index()]
    }

    pub fn u_hv(&self, column: Column, action: ActionLabel) -> f64 {
        self.hv_payoff[column.index()][action.index()]
    }

    /// Dumps the 12 (i, j) cells with one-based indices.
    pub fn write_payoff_csv<W: Write>(&self, writer: W) -> Result<(), GameError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "U_A", "U_H"])?;
        for col in Column::ALL {
            for act in ActionLabel::ALL {
                w.write_record([
                    (col.index() + 1).to_string(),
                    (act.index() + 1).to_string(),
                    self.u_hav(col, act).to_string(),
                    self.u_hv(col, act).to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn build_stage_game(
    scene: &Scene,
    kind: ScenarioKind,
    tau: f64,
    weights: Weights,
    params: &GameParams,
) -> Result<StageGame, GameError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(GameError::BadTau(tau));
    }
    weights.validate()?;
    if !scene.is_finite() {
        return Err(GameError::NonFiniteScene);
    }
    if !(params.epsilon.is_finite() && params.epsilon > 0.0) {
        return Err(GameError::BadEpsilon(params.epsilon));
    }
    let efficiency_on = match kind {
        ScenarioKind::Mlc => 0.0,
        ScenarioKind::Dlc => 1.0,
    };
    let mut hav_payoff = [[0.0; 3]; 4];
    let mut hv_payoff = [[0.0; 3]; 4];
    for action in ActionLabel::ALL {
        let projected = project_scene(scene, action, params)?;
        for col in Column::ALL {
            let s_a = safety_payoff(Role::Hav, &projected, col, params.epsilon);
            let e_a = efficiency_payoff(Role::Hav, &projected, col);
            let u_a = weights.w_s * s_a + weights.w_e * e_a * efficiency_on;
            let s_h = safety_payoff(Role::Hv, &projected, col, params.epsilon);
            let e_h = efficiency_payoff(Role::Hv, &projected, col);
            let own = weights.w_s * s_h + weights.w_e * e_h;
            let u_h = match col.driver {
                DriverType::Cooperative => tau * (own + weights.w_a * u_a),
                DriverType::NonCooperative => (1.0 - tau) * own,
            };
            hav_payoff[col.index()][action.index()] = u_a;
            hv_payoff[col.index()][action.index()] = u_h;
        }
    }
    Ok(StageGame {
        kind,
        tau,
        weights,
        scene: *scene,
        hav_payoff,
        hv_payoff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub hav_choice: HavAction,
    /// `hv_response[type][disclosure]`.
    pub hv_response: [[ActionLabel; 2]; 2],
    pub expected_hav_payoff: f64,
    /// Follower payoff at its best response, `[type][disclosure]`.
    pub per_type_hv_payoffs: [[f64; 2]; 2],
    /// Belief-weighted HAV payoff of each disclosure given the responses.
    pub disclosure_values: [f64; 2],
}

impl Equilibrium {
    pub fn response(&self, driver: DriverType, disclosure: HavAction) -> ActionLabel {
        self.hv_response[driver.index()][disclosure.index()]
    }
}

/// First index attaining the maximum, so earlier rows win ties.
fn first_argmax(values: &[f64; 3]) -> usize {
    let mut best = 0;
    for j in 1..3 {
        if values[j] > values[best] {
            best = j;
        }
    }
    best
}

fn disclosure_value(game: &StageGame, disclosure: HavAction, responses: &[[ActionLabel; 2]; 2]) -> f64 {
    let coop = Column::new(DriverType::Cooperative, disclosure);
    let nonc = Column::new(DriverType::NonCooperative, disclosure);
    game.tau * game.u_hav(coop, responses[0][disclosure.index()])
        + (1.0 - game.tau) * game.u_hav(nonc, responses[1][disclosure.index()])
}

fn assemble(game: &StageGame, responses: [[ActionLabel; 2]; 2], hav_choice: HavAction) -> Equilibrium {
    let mut per_type = [[0.0; 2]; 2];
    for col in Column::ALL {
        let (d, h) = (col.driver.index(), col.disclosure.index());
        per_type[d][h] = game.u_hv(col, responses[d][h]);
    }
    let values = [
        disclosure_value(game, HavAction::LaneChange, &responses),
        disclosure_value(game, HavAction::Yield, &responses),
    ];
    Equilibrium {
        hav_choice,
        hv_response: responses,
        expected_hav_payoff: values[hav_choice.index()],
        per_type_hv_payoffs: per_type,
        disclosure_values: values,
    }
}

/// Backward induction: follower best responses per (type, disclosure), then
/// the HAV disclosure maximizing belief-weighted payoff. Ties go to LC and to
/// v before v+ before v−.
pub fn solve_pbe(game: &StageGame) -> Equilibrium {
    let mut responses = [[ActionLabel::Maintain; 2]; 2];
    for col in Column::ALL {
        let j = first_argmax(&game.hv_payoff[col.index()]);
        responses[col.driver.index()][col.disclosure.index()] = ActionLabel::from_index(j);
    }
    let lc = disclosure_value(game, HavAction::LaneChange, &responses);
    let yd = disclosure_value(game, HavAction::Yield, &responses);
    let choice = if yd > lc { HavAction::Yield } else { HavAction::LaneChange };
    assemble(game, responses, choice)
}

/// Exhaustive check of every pure profile: 2 disclosures × 3⁴ contingent
/// follower plans. Among profiles satisfying both optimality conditions,
/// returns the first in (responses, disclosure) lexicographic order.
pub fn brute_force_equilibrium(game: &StageGame) -> Equilibrium {
    let mut best: Option<([usize; 4], usize)> = None;
    for code in 0..81usize {
        let plan = [code / 27 % 3, code / 9 % 3, code / 3 % 3, code % 3];
        let rational = Column::ALL.iter().zip(plan.iter()).all(|(col, &j)| {
            let row = &game.hv_payoff[col.index()];
            row.iter().all(|&u| row[j] >= u)
        });
        if !rational {
            continue;
        }
        let responses = [
            [ActionLabel::from_index(plan[0]), ActionLabel::from_index(plan[1])],
            [ActionLabel::from_index(plan[2]), ActionLabel::from_index(plan[3])],
        ];
        for d in HavAction::ALL {
            let mine = disclosure_value(game, d, &responses);
            let alt = disclosure_value(game, d.other(), &responses);
            if mine >= alt {
                let key = (plan, d.index());
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
                break;
            }
        }
    }
    let (plan, d) = best.expect("a finite pure-strategy game always has a best reply profile");
    let responses = [
        [ActionLabel::from_index(plan[0]), ActionLabel::from_index(plan[1])],
        [ActionLabel::from_index(plan[2]), ActionLabel::from_index(plan[3])],
    ];
    assemble(game, responses, HavAction::ALL[d])
}

/// Follower action carrying the most belief mass under a disclosure, with
/// the row order breaking ties.
pub fn belief_weighted_response(eq: &Equilibrium, disclosure: HavAction, tau: f64) -> ActionLabel {
    let mut mass = [0.0; 3];
    mass[eq.response(DriverType::Cooperative, disclosure).index()] += tau;
    mass[eq.response(DriverType::NonCooperative, disclosure).index()] += 1.0 - tau;
    ActionLabel::from_index(first_argmax(&mass))
}

/// Belief mass of the follower types predicted to decelerate.
pub fn predicted_yield_mass(eq: &Equilibrium, disclosure: HavAction, tau: f64) -> f64 {
    let mut m = 0.0;
    if eq.response(DriverType::Cooperative, disclosure) == ActionLabel::Decelerate {
        m += tau;
    }
    if eq.response(DriverType::NonCooperative, disclosure) == ActionLabel::Decelerate {
        m += 1.0 - tau;
    }
    m
}

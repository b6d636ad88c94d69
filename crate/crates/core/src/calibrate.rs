//! Weight calibration: a genetic algorithm over (w_s, w_e, w_a) whose
//! fitness is how often the equilibrium predicts the follower's recorded
//! action.

use crate::data::{infer_frame_strategies, Dataset, ExtractConfig, InteractionEvent};
use crate::game::{belief_weighted_response, build_stage_game, solve_pbe, GameError, GameParams, HavAction, Weights};
use crate::scenario::{Lane, Role, Scene, ScenarioKind, VehicleState};
use crate::trust::{classify_action, ActionLabel, CountUpdate, LikelihoodTable, TrustBelief, TrustError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum CalibrateError {
    #[error("no events to evaluate")]
    NoEvents,
    #[error("no decision frames in {0} events")]
    NoFrames(usize),
    #[error("need at least {need} events after filtering, found {found}")]
    InsufficientEvents { need: usize, found: usize },
    #[error("invalid calibration config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// How recorded frames are replayed through the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub tau0: f64,
    pub game: GameParams,
    pub likelihoods: LikelihoodTable,
    pub count_update: CountUpdate,
    pub extract: ExtractConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            tau0: 0.8,
            game: GameParams::default(),
            likelihoods: LikelihoodTable::default(),
            count_update: CountUpdate::default(),
            extract: ExtractConfig::default(),
        }
    }
}

/// One decision: the recorded scene, the trust the HAV would hold, the
/// changer's inferred intent as the disclosure, and what the follower did
/// next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionFrame {
    pub frame: i64,
    pub scene: Scene,
    pub tau: f64,
    pub disclosure: HavAction,
    pub observed: ActionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedEvent {
    pub event_id: usize,
    pub kind: ScenarioKind,
    /// Frame interval, used as the game's projection step.
    pub dt: f64,
    pub frames: Vec<DecisionFrame>,
}

fn state(dataset: &Dataset, id: u64, frame: i64, role: Role, lane: Lane) -> Option<VehicleState> {
    let r = dataset.record(id, frame)?;
    let mut s = VehicleState::new(id as u32, role, r.x, lane, r.v.max(0.0));
    s.a = r.a;
    Some(s)
}

/// Decision frames run from the event start through the crossing frame; the
/// observed reply is the follower's label on the following frame. Trust is
/// replayed from `tau0` on the recorded follower labels, so it does not
/// depend on the weights.
pub fn prepare_event(event: &InteractionEvent, dataset: &Dataset, cfg: &ReplayConfig) -> Result<PreparedEvent, CalibrateError> {
    let labels = infer_frame_strategies(event, dataset, &cfg.extract);
    let mut belief = TrustBelief::new(cfg.tau0, cfg.likelihoods.clone(), cfg.count_update)?;
    let mut frames = Vec::new();
    for pair in labels.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        if now.frame > event.crossing_frame {
            break;
        }
        let roles = &event.roles;
        let scene = (|| {
            Some(Scene {
                hav: state(dataset, roles.hav, now.frame, Role::Hav, Lane::Current)?,
                hv: state(dataset, roles.hv, now.frame, Role::Hv, Lane::Target)?,
                lv: state(dataset, roles.lv, now.frame, Role::Lv, Lane::Current)?,
                tlv: state(dataset, roles.tlv, now.frame, Role::Tlv, Lane::Target)?,
            })
        })();
        let observed = classify_action(next.follower_a, cfg.extract.action_threshold)?;
        if let Some(scene) = scene {
            if next.frame == now.frame + 1 {
                frames.push(DecisionFrame {
                    frame: now.frame,
                    scene,
                    tau: belief.tau,
                    disclosure: now.changer_intent,
                    observed,
                });
            }
        }
        belief.observe(next.t, observed, next.follower_a);
    }
    Ok(PreparedEvent {
        event_id: event.id,
        kind: event.kind,
        dt: 1.0 / dataset.frame_rate,
        frames,
    })
}

pub fn prepare_events(
    events: &[InteractionEvent],
    dataset: &Dataset,
    cfg: &ReplayConfig,
) -> Result<Vec<PreparedEvent>, CalibrateError> {
    events.iter().map(|e| prepare_event(e, dataset, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPrediction {
    pub event_id: usize,
    pub frames: Vec<i64>,
    pub predicted: Vec<ActionLabel>,
    pub observed: Vec<ActionLabel>,
    pub correct: usize,
}

impl EventPrediction {
    pub fn tpr(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.correct as f64 / self.frames.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub weights: Weights,
    pub events: Vec<EventPrediction>,
    /// Events without decision frames.
    pub skipped: usize,
    pub correct: usize,
    pub total: usize,
    /// Correct predictions over decision frames.
    pub tpr: f64,
    /// Mean of per-event TPRs.
    pub event_tpr: f64,
}

pub fn predict_event(weights: Weights, event: &PreparedEvent, game: &GameParams) -> Result<EventPrediction, CalibrateError> {
    let game = &GameParams { dt: event.dt, ..*game };
    let mut predicted = Vec::with_capacity(event.frames.len());
    let mut correct = 0;
    for f in &event.frames {
        let g = build_stage_game(&f.scene, event.kind, f.tau, weights, game)?;
        let eq = solve_pbe(&g);
        let p = belief_weighted_response(&eq, f.disclosure, f.tau);
        correct += usize::from(p == f.observed);
        predicted.push(p);
    }
    Ok(EventPrediction {
        event_id: event.event_id,
        frames: event.frames.iter().map(|f| f.frame).collect(),
        predicted,
        observed: event.frames.iter().map(|f| f.observed).collect(),
        correct,
    })
}

pub fn predict_actions(weights: Weights, events: &[PreparedEvent], game: &GameParams) -> Result<Prediction, CalibrateError> {
    if events.is_empty() {
        return Err(CalibrateError::NoEvents);
    }
    weights.validate()?;
    let mut out = Vec::new();
    let mut skipped = 0;
    for e in events {
        if e.frames.is_empty() {
            skipped += 1;
            continue;
        }
        out.push(predict_event(weights, e, game)?);
    }
    if out.is_empty() {
        return Err(CalibrateError::NoFrames(events.len()));
    }
    let correct: usize = out.iter().map(|e| e.correct).sum();
    let total: usize = out.iter().map(|e| e.frames.len()).sum();
    let event_tpr = out.iter().map(EventPrediction::tpr).sum::<f64>() / out.len() as f64;
    Ok(Prediction {
        weights,
        events: out,
        skipped,
        correct,
        total,
        tpr: correct as f64 / total as f64,
        event_tpr,
    })
}

impl Prediction {
    /// `event_id,frame,predicted,observed,correct`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CalibrateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["event_id", "frame", "predicted", "observed", "correct"])?;
        for e in &self.events {
            for i in 0..e.frames.len() {
                w.write_record([
                    e.event_id.to_string(),
                    e.frames[i].to_string(),
                    e.predicted[i].to_string(),
                    e.observed[i].to_string(),
                    u8::from(e.predicted[i] == e.observed[i]).to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Fraction of decision frames where two predictions agree.
pub fn agreement(a: &Prediction, b: &Prediction) -> f64 {
    let mut same = 0;
    let mut total = 0;
    for (x, y) in a.events.iter().zip(&b.events) {
        for (p, q) in x.predicted.iter().zip(&y.predicted) {
            same += usize::from(p == q);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Bounds for (w_s, w_e, w_a).
    pub bounds: [[f64; 2]; 3],
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub tournament: usize,
    pub elitism: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub kind: Option<ScenarioKind>,
    pub min_events: usize,
    /// Individuals placed first in the initial population; the rest is
    /// drawn uniformly within bounds.
    pub initial: Vec<Weights>,
    pub replay: ReplayConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            bounds: [[0.0, 1.5]; 3],
            population: 40,
            generations: 60,
            crossover_rate: 0.9,
            mutation_rate: 0.3,
            mutation_sigma: 0.05,
            tournament: 3,
            elitism: 1,
            split_ratio: 0.8,
            seed: 0,
            kind: Some(ScenarioKind::Dlc),
            min_events: 20,
            initial: Vec::new(),
            replay: ReplayConfig::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrateError> {
        let bad = |m: String| Err(CalibrateError::Invalid(m));
        for [lo, hi] in self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return bad(format!("weight bounds [{lo}, {hi}] must satisfy 0 <= lower < upper"));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.population < 4 {
            return bad(format!("population must be at least 4, got {}", self.population));
        }
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if self.tournament == 0 || self.elitism > self.population {
            return bad("tournament must be positive and elitism at most the population".into());
        }
        for (name, p) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.mutation_sigma.is_finite() && self.mutation_sigma >= 0.0) {
            return bad(format!("mutation_sigma must be non-negative, got {}", self.mutation_sigma));
        }
        if self.initial.len() > self.population {
            return bad("more initial individuals than the population".into());
        }
        Ok(())
    }

    fn clip(&self, g: [f64; 3]) -> Weights {
        let c = |i: usize| g[i].clamp(self.bounds[i][0], self.bounds[i][1]);
        Weights {
            w_s: c(0),
            w_e: c(1),
            w_a: c(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: usize,
    pub split: Split,
    pub frames: usize,
    pub correct: usize,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best: Weights,
    pub train_tpr: f64,
    pub validation_tpr: f64,
    pub train_event_tpr: f64,
    pub validation_event_tpr: f64,
    pub history: Vec<GenerationStats>,
    pub train_events: Vec<usize>,
    pub validation_events: Vec<usize>,
    pub events: Vec<EventRecord>,
    pub warnings: Vec<String>,
}

/// Deterministic train/validation partition of event positions.
pub fn split_events(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if n < 2 {
        return (idx, Vec::new());
    }
    let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn tournament<R: Rng>(rng: &mut R, fitness: &[f64], k: usize) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..k {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Evolves weights that maximise train TPR over prepared events.
pub fn calibrate_prepared(events: &[PreparedEvent], cfg: &CalibrationConfig) -> Result<CalibrationResult, CalibrateError> {
    cfg.validate()?;
    let usable: Vec<&PreparedEvent> = events
        .iter()
        .filter(|e| cfg.kind.is_none_or(|k| e.kind == k))
        .filter(|e| !e.frames.is_empty())
        .collect();
    if usable.len() < cfg.min_events.max(2) {
        return Err(CalibrateError::InsufficientEvents {
            need: cfg.min_events.max(2),
            found: usable.len(),
        });
    }
    let (tr, va) = split_events(usable.len(), cfg.split_ratio, cfg.seed);
    let train: Vec<PreparedEvent> = tr.iter().map(|&i| usable[i].clone()).collect();
    let val: Vec<PreparedEvent> = va.iter().map(|&i| usable[i].clone()).collect();
    let game = cfg.replay.game;
    let fitness_of = |w: &Weights| -> Result<f64, CalibrateError> { Ok(predict_actions(*w, &train, &game)?.tpr) };

    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed));
    let mut pop: Vec<Weights> = cfg.initial.clone();
    while pop.len() < cfg.population {
        let g = [0, 1, 2].map(|i| {
            let [lo, hi] = cfg.bounds[i];
            rng.random_range(lo..hi)
        });
        pop.push(cfg.clip(g));
    }
    let noise = Normal::new(0.0, cfg.mutation_sigma.max(f64::MIN_POSITIVE)).expect("sigma validated");
    let mut history = Vec::with_capacity(cfg.generations);
    let mut best_so_far = (f64::NEG_INFINITY, pop[0]);
    let mut last_fitness = Vec::new();
    for generation in 0..cfg.generations {
        let fitness: Vec<f64> = pop.par_iter().map(fitness_of).collect::<Result<_, _>>()?;
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        let top = order[0];
        if fitness[top] > best_so_far.0 {
            best_so_far = (fitness[top], pop[top]);
        }
        history.push(GenerationStats {
            generation,
            best: fitness[top],
            mean: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best_so_far: best_so_far.0,
        });
        last_fitness = fitness.clone();
        if generation + 1 == cfg.generations {
            break;
        }
        let mut next: Vec<Weights> = order[..cfg.elitism].iter().map(|&i| pop[i]).collect();
        while next.len() < cfg.population {
            let a = pop[tournament(&mut rng, &fitness, cfg.tournament)].as_array();
            let b = pop[tournament(&mut rng, &fitness, cfg.tournament)].as_array();
            let mut child = a;
            if rng.random::<f64>() < cfg.crossover_rate {
                for (i, c) in child.iter_mut().enumerate() {
                    if rng.random::<bool>() {
                        *c = b[i];
                    }
                }
            }
            for c in child.iter_mut() {
                if rng.random::<f64>() < cfg.mutation_rate {
                    *c += if cfg.mutation_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                }
            }
            next.push(cfg.clip(child));
        }
        pop = next;
    }
    let mut warnings = Vec::new();
    if last_fitness.iter().all(|f| *f == last_fitness[0]) {
        warnings.push(format!("every individual in the final generation has fitness {}", last_fitness[0]));
    }
    let best = best_so_far.1;
    let ptr = predict_actions(best, &train, &game)?;
    let pva = predict_actions(best, &val, &game)?;
    let mut records = Vec::new();
    for (p, split) in [(&ptr, Split::Train), (&pva, Split::Validation)] {
        for e in &p.events {
            records.push(EventRecord {
                event_id: e.event_id,
                split,
                frames: e.frames.len(),
                correct: e.correct,
                tpr: e.tpr(),
            });
        }
    }
    records.sort_by_key(|r| r.event_id);
    Ok(CalibrationResult {
        best,
        train_tpr: ptr.tpr,
        validation_tpr: pva.tpr,
        train_event_tpr: ptr.event_tpr,
        validation_event_tpr: pva.event_tpr,
        history,
        train_events: train.iter().map(|e| e.event_id).collect(),
        validation_events: val.iter().map(|e| e.event_id).collect(),
        events: records,
        warnings,
    })
}

fn derive(seed: u64) -> u64 {
    crate::sim::derive_seed(seed, 0, 7)
}

/// Extracts events from `dataset`, replays them and calibrates.
pub fn calibrate(dataset: &Dataset, cfg: &CalibrationConfig) -> Result<CalibrationResult, CalibrateError> {
    let ex = crate::data::extract_events(dataset, &cfg.replay.extract);
    let prepared = prepare_events(&ex.events, dataset, &cfg.replay)?;
    calibrate_prepared(&prepared, cfg)
}

/// TPR of fixed (e.g. published) weights on prepared events.
pub fn evaluate_reference(weights: Weights, events: &[PreparedEvent], game: &GameParams) -> Result<Prediction, CalibrateError> {
    predict_actions(weights, events, game)
}

impl CalibrationResult {
    /// Validation-split positions of `events`, for comparing predictions.
    pub fn validation_subset<'a>(&self, events: &'a [PreparedEvent]) -> Vec<&'a PreparedEvent> {
        events.iter().filter(|e| self.validation_events.contains(&e.event_id)).collect()
    }
}

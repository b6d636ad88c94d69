use super::sampler::{derive_seed, SampledScenario, ScenarioSampler};
use super::{run_episode, EpisodeResult, HvDriverModel, Outcome, Rationality, SimError, SimParams};
use crate::disclosure::{Policy, Protection};
use crate::game::HavAction;
use crate::scenario::ScenarioConfig;
use crate::trust::{ActionLabel, DriverType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub n: usize,
    pub seed: u64,
    /// Timing, bounds and policies shared by every sampled scene.
    pub base: ScenarioConfig,
    /// Draws a scene per pair; `None` runs every pair on `base` as given.
    pub sampler: Option<ScenarioSampler>,
    /// Forces the follower type instead of drawing it from the prior.
    #[serde(default)]
    pub driver: Option<DriverType>,
    pub params: SimParams,
    pub rationality: Rationality,
    /// Baseline arm and treatment arm, run on the same scene and seed.
    pub arms: [Policy; 2],
    /// Keep full episode results (traces) in memory.
    pub keep_episodes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub policy: Policy,
    pub outcome: Option<Outcome>,
    pub completed: bool,
    pub collision: bool,
    pub lane_change_time: Option<f64>,
    pub min_tdtc: Option<f64>,
    pub final_tau: f64,
    pub min_tau: f64,
    pub deceptive_steps: usize,
    pub protective_terminations: usize,
    pub collapse: bool,
    /// Active deceptive steps and realized decelerations, indexed by the
    /// intended strategy (LC masked as Yield, Yield masked as LC).
    pub deception_steps_by_intent: [usize; 2],
    pub deception_yields_by_intent: [usize; 2],
}

impl ArmSummary {
    fn from_episode(e: &EpisodeResult, protection: &Protection) -> Self {
        let mut steps = [0usize; 2];
        let mut yields = [0usize; 2];
        for r in e.trace.iter().filter(|r| r.deception_active) {
            let i = r.intended.index();
            steps[i] += 1;
            if r.hv_action == ActionLabel::Decelerate {
                yields[i] += 1;
            }
        }
        let terminations = e.protective_terminations();
        let collapse = terminations > 0
            && e
                .trace
                .iter()
                .find_map(|r| r.tau_at_start)
                .is_some_and(|t0| e.final_tau() < protection.threshold(t0));
        Self {
            policy: e.policy,
            outcome: e.outcome,
            completed: e.completed,
            collision: e.collision,
            lane_change_time: e.lane_change_time,
            min_tdtc: e.min_tdtc,
            final_tau: e.final_tau(),
            min_tau: e.min_tau(),
            deceptive_steps: e.deceptive_steps(),
            protective_terminations: terminations,
            collapse,
            deception_steps_by_intent: steps,
            deception_yields_by_intent: yields,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub scenario_seed: u64,
    pub episode_seed: u64,
    pub driver: DriverType,
    pub arms: Option<[ArmSummary; 2]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn from_values(mut v: Vec<f64>) -> Self {
        v.retain(|x| x.is_finite());
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Self {
            count: v.len(),
            min: v[0],
            p10: q(0.1),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p90: q(0.9),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub policy: Policy,
    pub completion_rate: f64,
    pub collision_rate: f64,
    pub lane_change_time: Quantiles,
    pub min_tdtc: Quantiles,
    /// Episodes whose minimum TDTC is infinite.
    pub infinite_tdtc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub pairs: usize,
    pub failed_pairs: usize,
    /// Treatment strictly faster; a non-completed arm counts as infinitely slow.
    pub reduced_lane_change_time: f64,
    pub increased_lane_change_time: f64,
    /// Pairs where both arms committed a maneuver.
    pub tdtc_comparable_pairs: usize,
    /// Strictly larger minimum TDTC in the treatment arm, over comparable pairs.
    pub increased_min_tdtc: f64,
    /// Same count over all pairs.
    pub increased_min_tdtc_all: f64,
    pub decreased_min_tdtc: f64,
    /// Realized yields per active deceptive step, LC masked as Yield.
    pub success_rate_lc_intended: Option<f64>,
    /// Realized yields per active deceptive step, Yield masked as LC.
    pub success_rate_yield_intended: Option<f64>,
    /// Treatment episodes with a protective termination that ended below the
    /// protection threshold.
    pub trust_collapse: f64,
    pub protective_terminations: usize,
    pub arms: [ArmStats; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub records: Vec<PairRecord>,
    pub stats: BatchStats,
    #[serde(skip)]
    pub episodes: Vec<Option<[EpisodeResult; 2]>>,
}

fn lct_key(a: &ArmSummary) -> f64 {
    a.lane_change_time.unwrap_or(f64::INFINITY)
}

fn run_pair(cfg: &BatchConfig, index: usize) -> (PairRecord, Option<[EpisodeResult; 2]>) {
    let scenario_seed = derive_seed(cfg.seed, index as u64, 0);
    let episode_seed = derive_seed(cfg.seed, index as u64, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);
    let mut sampled = match &cfg.sampler {
        Some(s) => s.sample(&mut rng, &cfg.base, cfg.params.tau0, cfg.params.vehicle_length),
        None => {
            let coop: f64 = rng.random();
            SampledScenario {
                config: cfg.base.clone(),
                driver: if coop < cfg.params.tau0 {
                    DriverType::Cooperative
                } else {
                    DriverType::NonCooperative
                },
            }
        }
    };
    if let Some(d) = cfg.driver {
        sampled.driver = d;
    }
    let mut record = PairRecord {
        index,
        scenario_seed,
        episode_seed,
        driver: sampled.driver,
        arms: None,
        error: None,
    };
    let run = || -> Result<[EpisodeResult; 2], SimError> {
        let hv = HvDriverModel::new(sampled.driver, cfg.rationality)?;
        let a = run_episode(&sampled.config, &cfg.params, cfg.arms[0], &hv, episode_seed)?;
        let b = run_episode(&sampled.config, &cfg.params, cfg.arms[1], &hv, episode_seed)?;
        Ok([a, b])
    };
    match run() {
        Ok(eps) => {
            record.arms = Some([ArmSummary::from_episode(&eps[0], &cfg.params.protection),
                ArmSummary::from_episode(&eps[1], &cfg.params.protection),
            ]);
            (record, cfg.keep_episodes.then_some(eps))
        }
        Err(e) => {
            record.error = Some(e.to_string());
            (record, None)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn arm_stats(policy: Policy, arms: &[&ArmSummary]) -> ArmStats {
    let n = arms.len();
    ArmStats {
        policy,
        completion_rate: ratio(arms.iter().filter(|a| a.completed).count(), n),
        collision_rate: ratio(arms.iter().filter(|a| a.collision).count(), n),
        lane_change_time: Quantiles::from_values(arms.iter().filter_map(|a| a.lane_change_time).collect()),
        min_tdtc: Quantiles::from_values(arms.iter().filter_map(|a| a.min_tdtc).collect()),
        infinite_tdtc: arms.iter().filter(|a| a.min_tdtc.is_some_and(f64::is_infinite)).count(),
    }
}

fn summarize(cfg: &BatchConfig, records: &[PairRecord]) -> BatchStats {
    let ok: Vec<&[ArmSummary; 2]> = records.iter().filter_map(|r| r.arms.as_ref()).collect();
    let n = ok.len();
    let reduced = ok.iter().filter(|p| lct_key(&p[1]) < lct_key(&p[0])).count();
    let increased = ok.iter().filter(|p| lct_key(&p[1]) > lct_key(&p[0])).count();
    let comparable: Vec<_> = ok
        .iter()
        .filter_map(|p| Some((p[0].min_tdtc?, p[1].min_tdtc?)))
        .collect();
    let tdtc_up = comparable.iter().filter(|(a, b)| b > a).count();
    let tdtc_down = comparable.iter().filter(|(a, b)| b < a).count();
    let mut steps = [0usize; 2];
    let mut yields = [0usize; 2];
    for p in &ok {
        for i in 0..2 {
            steps[i] += p[1].deception_steps_by_intent[i];
            yields[i] += p[1].deception_yields_by_intent[i];
        }
    }
    let rate = |i: usize| (steps[i] > 0).then(|| yields[i] as f64 / steps[i] as f64);
    let a: Vec<&ArmSummary> = ok.iter().map(|p| &p[0]).collect();
    let b: Vec<&ArmSummary> = ok.iter().map(|p| &p[1]).collect();
    BatchStats {
        pairs: records.len(),
        failed_pairs: records.len() - n,
        reduced_lane_change_time: ratio(reduced, n),
        increased_lane_change_time: ratio(increased, n),
        tdtc_comparable_pairs: comparable.len(),
        increased_min_tdtc: ratio(tdtc_up, comparable.len()),
        increased_min_tdtc_all: ratio(tdtc_up, n),
        decreased_min_tdtc: ratio(tdtc_down, comparable.len()),
        success_rate_lc_intended: rate(HavAction::LaneChange.index()),
        success_rate_yield_intended: rate(HavAction::Yield.index()),
        trust_collapse: ratio(b.iter().filter(|x| x.collapse).count(), n),
        protective_terminations: b.iter().map(|x| x.protective_terminations).sum(),
        arms: [arm_stats(cfg.arms[0], &a), arm_stats(cfg.arms[1], &b)],
    }
}

/// Runs `n` paired episodes. Results are ordered by pair index whatever
/// the execution order; a failing pair is recorded, not fatal.
pub fn run_batch(cfg: &BatchConfig) -> Result<BatchResult, SimError> {
    if cfg.n == 0 {
        return Err(SimError::Invalid("a batch needs at least one pair".into()));
    }
    if let Some(s) = &cfg.sampler {
        s.validate()?;
    }
    cfg.base.validate()?;
    cfg.params.validate()?;
    let out: Vec<(PairRecord, Option<[EpisodeResult; 2]>)> =
        (0..cfg.n).into_par_iter().map(|i| run_pair(cfg, i)).collect();
    let (records, episodes): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let stats = summarize(cfg, &records);
    Ok(BatchResult {
        records,
        stats,
        episodes,
    })
}

impl BatchResult {
    pub fn write_detail_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "pair",
            "scenario_seed",
            "episode_seed",
            "driver",
            "a_outcome",
            "a_lane_change_time",
            "a_min_tdtc",
            "a_final_tau",
            "b_outcome",
            "b_lane_change_time",
            "b_min_tdtc",
            "b_final_tau",
            "b_deceptive_steps",
            "b_protective_terminations",
            "b_collapse",
            "error",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let outcome = |o: Option<Outcome>| o.map(|o| format!("{o:?}")).unwrap_or_default();
        for r in &self.records {
            let mut rec = vec![
                r.index.to_string(),
                r.scenario_seed.to_string(),
                r.episode_seed.to_string(),
                r.driver.to_string(),
            ];
            match &r.arms {
                Some([a, b]) => {
                    rec.extend([
                        outcome(a.outcome),
                        opt(a.lane_change_time),
                        opt(a.min_tdtc),
                        a.final_tau.to_string(),
                        outcome(b.outcome),
                        opt(b.lane_change_time),
                        opt(b.min_tdtc),
                        b.final_tau.to_string(),
                        b.deceptive_steps.to_string(),
                        b.protective_terminations.to_string(),
                        u8::from(b.collapse).to_string(),
                        String::new(),
                    ]);
                }
                None => {
                    rec.extend(std::iter::repeat_n(String::new(), 11));
                    rec.push(r.error.clone().unwrap_or_default());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> BatchConfig {
        BatchConfig {
            n,
            seed: 3,
            base: crate::sim::tests::open_scene(),
            sampler: Some(ScenarioSampler::dlc()),
            driver: None,
            params: SimParams::default(),
            rationality: Rationality::Quantal(3.0),
            arms: [Policy::Honest, Policy::Deceptive],
            keep_episodes: false,
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let c = cfg(40);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_batch(&c).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_batch(&c).unwrap());
        assert_eq!(one.records, four.records);
        assert_eq!(one.stats, four.stats);
    }

    #[test]
    fn fixed_scene_and_driver() {
        let mut c = cfg(10);
        c.sampler = None;
        c.driver = Some(DriverType::NonCooperative);
        c.keep_episodes = true;
        let r = run_batch(&c).unwrap();
        for (rec, eps) in r.records.iter().zip(&r.episodes) {
            assert_eq!(rec.driver, DriverType::NonCooperative);
            let eps = eps.as_ref().unwrap();
            assert_eq!(eps[0].trace[0].scene.vehicles().to_vec(), c.base.vehicles);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(run_batch(&cfg(0)).is_err());
    }
}

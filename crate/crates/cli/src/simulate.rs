//! `simulate`: paired episode batches under the honest and deceptive
//! disclosure policies.

use crate::manifest::{Outputs, Run};
use crate::{load_toml, to_json, CliError};
use lanetrust::disclosure::Policy;
use lanetrust::scenario::{Lane, Role, Scene, ScenarioConfig, ScenarioKind, VehicleState};
use lanetrust::sim::{run_batch, BatchConfig, BatchResult, HvDriverModel, Rationality, ScenarioSampler, SimParams};
use lanetrust::trust::DriverType;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    Honest,
    Deceptive,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    /// A fresh scene per pair from `sampler`.
    Sampled,
    /// Every pair starts from `scenario` as written.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
    pub policy: PolicyChoice,
    pub scenes: SceneMode,
    /// Forces the follower type; drawn from `params.tau0` when absent.
    pub driver: Option<DriverType>,
    pub rationality: Rationality,
    /// Write one trace CSV per episode.
    pub traces: bool,
    pub params: SimParams,
    pub sampler: ScenarioSampler,
    /// Base scene: timing, bounds and surrounding-traffic policy, plus the
    /// vehicles used in fixed mode.
    pub scenario: ScenarioConfig,
}

pub fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::new(
        ScenarioKind::Dlc,
        Scene {
            hav: VehicleState::new(1, Role::Hav, 0.0, Lane::Current, 22.0),
            hv: VehicleState::new(2, Role::Hv, -25.0, Lane::Target, 24.0),
            lv: VehicleState::new(3, Role::Lv, 40.0, Lane::Current, 20.0),
            tlv: VehicleState::new(4, Role::Tlv, 35.0, Lane::Target, 20.0),
        },
    )
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 500,
            seed: 0,
            policy: PolicyChoice::Both,
            scenes: SceneMode::Sampled,
            driver: None,
            rationality: Rationality::Quantal(3.0),
            traces: true,
            params: SimParams::default(),
            sampler: ScenarioSampler::dlc(),
            scenario: default_scenario(),
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        if self.n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        self.params.validate().map_err(|e| bad(&e))?;
        self.sampler.validate().map_err(|e| bad(&e))?;
        self.scenario.validate().map_err(|e| bad(&e))?;
        HvDriverModel::new(DriverType::Cooperative, self.rationality).map_err(|e| bad(&e))?;
        Ok(())
    }

    fn arms(&self) -> [Policy; 2] {
        match self.policy {
            PolicyChoice::Both => [Policy::Honest, Policy::Deceptive],
            PolicyChoice::Honest => [Policy::Honest; 2],
            PolicyChoice::Deceptive => [Policy::Deceptive; 2],
        }
    }

    pub fn batch(&self) -> BatchConfig {
        BatchConfig {
            n: self.n,
            seed: self.seed,
            base: self.scenario.clone(),
            sampler: (self.scenes == SceneMode::Sampled).then(|| self.sampler.clone()),
            driver: self.driver,
            params: self.params.clone(),
            rationality: self.rationality,
            arms: self.arms(),
            keep_episodes: self.traces,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyChoice>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip per-episode trace files.
    #[arg(long)]
    pub no_traces: bool,
    #[arg(long = "out-dir", visible_alias = "out", alias = "out_dir", env = crate::OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<Run, CliError> {
    let (mut cfg, input): (SimulateConfig, _) = load_toml(&args.config)?;
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.no_traces {
        cfg.traces = false;
    }
    let mut run = execute(&cfg)?;
    run.inputs.push(input);
    Ok(run)
}

pub fn trace_path(pair: usize, policy: Policy) -> PathBuf {
    PathBuf::from(format!("traces/pair_{pair:05}_{}.csv", policy.as_str()))
}

#[derive(Serialize)]
struct Summary<'a> {
    policy: PolicyChoice,
    pairs: usize,
    failed_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a lanetrust::sim::BatchStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arm: Option<&'a lanetrust::sim::ArmStats>,
}

pub fn execute(cfg: &SimulateConfig) -> Result<Run, CliError> {
    cfg.validate()?;
    let batch = cfg.batch();
    let result = run_batch(&batch).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut outputs = Outputs::default();
    if cfg.traces {
        write_traces(cfg, &result, &mut outputs)?;
    }
    outputs.add_with("pairs.csv", |w| result.write_detail_csv(w))?;
    let s = &result.stats;
    let both = cfg.policy == PolicyChoice::Both;
    let summary = Summary {
        policy: cfg.policy,
        pairs: s.pairs,
        failed_pairs: s.failed_pairs,
        comparison: both.then_some(s),
        arm: (!both).then_some(&s.arms[0]),
    };
    outputs.add_json("summary.json", &summary)?;

    let mut text = String::new();
    let _ = writeln!(text, "simulated {} pairs ({} failed)", s.pairs, s.failed_pairs);
    for arm in if both { &s.arms[..] } else { &s.arms[..1] } {
        let _ = writeln!(
            text,
            "  {:<9} completion {:.3}  collisions {:.3}  median lane-change time {:.2} s",
            arm.policy.as_str(),
            arm.completion_rate,
            arm.collision_rate,
            arm.lane_change_time.p50
        );
    }
    if both {
        let _ = writeln!(
            text,
            "  deceptive vs honest: faster {:.3}  higher min TDTC {:.3}  protective terminations {}",
            s.reduced_lane_change_time, s.increased_min_tdtc, s.protective_terminations
        );
    }
    if s.failed_pairs > 0 {
        if let Some(e) = result.records.iter().find_map(|r| r.error.as_ref()) {
            eprintln!("warning: {} pairs failed, first error: {e}", s.failed_pairs);
        }
    }
    Ok(Run {
        command: "simulate",
        seed: Some(cfg.seed),
        config: to_json(cfg),
        inputs: Vec::new(),
        outputs,
        summary: text,
    })
}

fn write_traces(cfg: &SimulateConfig, result: &BatchResult, outputs: &mut Outputs) -> Result<(), CliError> {
    let arms = if cfg.policy == PolicyChoice::Both { 2 } else { 1 };
    for (i, eps) in result.episodes.iter().enumerate() {
        let Some(eps) = eps else { continue };
        for e in &eps[..arms] {
            outputs.add_with(trace_path(i, e.policy), |w| e.write_trace_csv(w))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = SimulateConfig::default();
        let text = crate::to_toml(&cfg);
        let back: SimulateConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        back.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<SimulateConfig>("pairs = 3\n").is_err());
    }

    #[test]
    fn single_policy_writes_one_trace_per_pair() {
        let cfg = SimulateConfig {
            n: 3,
            policy: PolicyChoice::Honest,
            ..SimulateConfig::default()
        };
        let run = execute(&cfg).unwrap();
        let traces = run.outputs.paths().filter(|p| p.starts_with("traces")).count();
        assert_eq!(traces, 3);
    }
}

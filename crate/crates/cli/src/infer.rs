//! `infer`: per-driver trust traces and type labels from recorded
//! interactions.

use crate::manifest::{digest_file, InputRole, Outputs, Run};
use crate::{data_error, load_toml, to_json, CliError};
use lanetrust::data::{extract_events, infer_frame_strategies, load_trajectories, ExtractConfig, InteractionEvent, SchemaMap, VehicleId};
use lanetrust::disclosure::Protection;
use lanetrust::trust::{classify_driver_type, deceleration_ratio, ActionLabel, CountUpdate, LikelihoodTable, TrustBelief};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub const TRUST_FILE: &str = "trust.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const DRIVERS_FILE: &str = "drivers.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub frame_rate: f64,
    pub schema: SchemaMap,
    pub extract: ExtractConfig,
    /// Trust at the start of every event.
    pub tau0: f64,
    pub likelihoods: LikelihoodTable,
    pub count_update: CountUpdate,
    /// Threshold rule behind the collapse annotation.
    pub protection: Protection,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            frame_rate: 25.0,
            schema: SchemaMap::default(),
            extract: ExtractConfig::default(),
            tau0: 0.8,
            likelihoods: LikelihoodTable::default(),
            count_update: CountUpdate::default(),
            protection: Protection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    Driver(VehicleId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRun {
    pub data: PathBuf,
    pub selection: Selection,
    pub config: InferConfig,
}

#[derive(Debug, clap::Args)]
#[command(group(clap::ArgGroup::new("who").required(true).args(["driver", "all"])))]
pub struct Args {
    pub data: PathBuf,
    /// Follower vehicle id.
    #[arg(long)]
    pub driver: Option<VehicleId>,
    /// Every follower in the file.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub frame_rate: Option<f64>,
    #[arg(long, visible_alias = "out-dir", alias = "out_dir", env = crate::OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<Run, CliError> {
    let (mut config, input) = match &args.config {
        Some(p) => {
            let (c, i) = load_toml::<InferConfig>(p)?;
            (c, Some(i))
        }
        None => (InferConfig::default(), None),
    };
    if let Some(f) = args.frame_rate {
        config.frame_rate = f;
    }
    let selection = match args.driver {
        Some(id) => Selection::Driver(id),
        None => Selection::All,
    };
    let data = crate::absolute(&args.data)?;
    let mut run = execute(&InferRun { data, selection, config })?;
    run.inputs.extend(input);
    Ok(run)
}

/// Trust replayed over one event, one entry per labelled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub event: usize,
    pub driver: VehicleId,
    pub start_frame: i64,
    pub end_frame: i64,
    /// (frame, t, tau after the observation, action, acceleration)
    pub rows: Vec<(i64, f64, f64, ActionLabel, f64)>,
    pub tau_start: f64,
    pub min_tau: f64,
    pub final_tau: f64,
    pub threshold: f64,
    /// Trust ends below the protection threshold.
    pub collapse: bool,
    /// Trust went below the threshold but ended above it.
    pub recovered: bool,
}

pub fn trace_event(event: &InteractionEvent, ds: &lanetrust::data::Dataset, cfg: &InferConfig) -> Result<EventTrace, CliError> {
    let mut belief = TrustBelief::new(cfg.tau0, cfg.likelihoods, cfg.count_update).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rows = Vec::new();
    for f in infer_frame_strategies(event, ds, &cfg.extract) {
        belief.observe(f.t, f.follower_action, f.follower_a);
        rows.push((f.frame, f.t, belief.tau, f.follower_action, f.follower_a));
    }
    let min_tau = rows.iter().map(|r| r.2).fold(cfg.tau0, f64::min);
    let final_tau = rows.last().map_or(cfg.tau0, |r| r.2);
    let threshold = cfg.protection.threshold(cfg.tau0);
    let collapse = final_tau < threshold;
    Ok(EventTrace {
        event: event.id,
        driver: event.roles.hv,
        start_frame: event.start_frame,
        end_frame: event.end_frame,
        rows,
        tau_start: cfg.tau0,
        min_tau,
        final_tau,
        threshold,
        collapse,
        recovered: min_tau < threshold && !collapse,
    })
}

pub fn execute(r: &InferRun) -> Result<Run, CliError> {
    let cfg = &r.config;
    if !(0.0..=1.0).contains(&cfg.tau0) {
        return Err(CliError::Config(format!("tau0 must lie in [0, 1], got {}", cfg.tau0)));
    }
    cfg.likelihoods.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let rho = cfg.extract.cooperation_ratio;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(CliError::Config(format!("cooperation_ratio must lie in (0, 1), got {rho}")));
    }
    let data_input = digest_file(InputRole::Data, &r.data)?;
    let ds = load_trajectories(&r.data, &cfg.schema, cfg.frame_rate).map_err(data_error)?;
    let ex = extract_events(&ds, &cfg.extract);
    let events: Vec<&InteractionEvent> = match r.selection {
        Selection::All => ex.events.iter().collect(),
        Selection::Driver(id) => {
            let mine: Vec<_> = ex.events.iter().filter(|e| e.roles.hv == id).collect();
            if mine.is_empty() {
                let why = if ds.track(id).is_some() {
                    "never follows a lane change"
                } else {
                    "is not in the dataset"
                };
                return Err(CliError::Runtime(format!("driver {id} {why}")));
            }
            mine
        }
    };
    let traces = events.iter().map(|e| trace_event(e, &ds, cfg)).collect::<Result<Vec<_>, _>>()?;

    let mut by_driver: BTreeMap<VehicleId, Vec<&EventTrace>> = BTreeMap::new();
    for t in &traces {
        by_driver.entry(t.driver).or_default().push(t);
    }

    let mut outputs = Outputs::default();
    outputs.add_with(TRUST_FILE, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["driver", "event", "frame", "t", "tau", "action", "accel"])?;
        for t in &traces {
            for (frame, time, tau, action, a) in &t.rows {
                w.write_record([
                    t.driver.to_string(),
                    t.event.to_string(),
                    frame.to_string(),
                    time.to_string(),
                    tau.to_string(),
                    action.to_string(),
                    a.to_string(),
                ])?;
            }
        }
        w.flush()
    })?;
    outputs.add_with(EVENTS_FILE, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "event", "driver", "start_frame", "end_frame", "frames", "tau_start", "min_tau", "final_tau", "threshold", "collapse", "recovered",
        ])?;
        for t in &traces {
            w.write_record([
                t.event.to_string(),
                t.driver.to_string(),
                t.start_frame.to_string(),
                t.end_frame.to_string(),
                t.rows.len().to_string(),
                t.tau_start.to_string(),
                t.min_tau.to_string(),
                t.final_tau.to_string(),
                t.threshold.to_string(),
                u8::from(t.collapse).to_string(),
                u8::from(t.recovered).to_string(),
            ])?;
        }
        w.flush()
    })?;
    let mut labelled = 0;
    outputs.add_with(DRIVERS_FILE, |w| -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(["driver", "events", "frames", "deceleration_ratio", "driver_type"]).map_err(csv_err)?;
        for (id, ts) in &by_driver {
            let actions: Vec<(f64, ActionLabel)> = ts.iter().flat_map(|t| t.rows.iter().map(|r| (r.1, r.3))).collect();
            let (ratio, label) = match actions.iter().map(|a| a.0).reduce(f64::max) {
                Some(final_t) => {
                    let ratio = deceleration_ratio(&actions, final_t).map_err(|e| CliError::Runtime(e.to_string()))?;
                    let label = classify_driver_type(&actions, final_t, rho).map_err(|e| CliError::Runtime(e.to_string()))?;
                    labelled += 1;
                    (ratio.to_string(), label.to_string())
                }
                None => (String::new(), String::new()),
            };
            w.write_record([id.to_string(), ts.len().to_string(), actions.len().to_string(), ratio, label]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))
    })?;

    let collapses = traces.iter().filter(|t| t.collapse).count();
    let summary = format!(
        "{} events, {} drivers ({} labelled), {} collapses\n",
        traces.len(),
        by_driver.len(),
        labelled,
        collapses
    );
    Ok(Run {
        command: "infer",
        seed: None,
        config: to_json(r),
        inputs: vec![data_input],
        outputs,
        summary,
    })
}

//! `calibrate`: trajectory file in, fitted weights out.

use crate::manifest::{digest_file, InputRole, Outputs, Run};
use crate::{data_error, load_toml, to_json, CliError};
use lanetrust::calibrate::{agreement, calibrate_prepared, predict_actions, prepare_events, CalibrateError, CalibrationConfig, PreparedEvent, Prediction};
use lanetrust::data::{extract_events, load_trajectories, SchemaMap};
use lanetrust::Weights;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;

pub const RESULT_FILE: &str = "calibration.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REFERENCE_FILE: &str = "reference.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Frames per second of the trajectory file.
    pub frame_rate: f64,
    pub schema: SchemaMap,
    pub calibration: CalibrationConfig,
    /// Weights to compare against on the validation events, e.g. the ones a
    /// synthetic dataset was generated with.
    pub reference: Option<Weights>,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            frame_rate: 25.0,
            schema: SchemaMap::default(),
            calibration: CalibrationConfig::default(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRun {
    pub data: PathBuf,
    pub config: CalibrateConfig,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    pub data: PathBuf,
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub frame_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "out-dir", alias = "out_dir", env = crate::OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<Run, CliError> {
    let (mut config, input) = match &args.config {
        Some(p) => {
            let (c, i) = load_toml::<CalibrateConfig>(p)?;
            (c, Some(i))
        }
        None => (CalibrateConfig::default(), None),
    };
    if let Some(f) = args.frame_rate {
        config.frame_rate = f;
    }
    if let Some(s) = args.seed {
        config.calibration.seed = s;
    }
    let data = crate::absolute(&args.data)?;
    let mut run = execute(&CalibrateRun { data, config })?;
    run.inputs.extend(input);
    Ok(run)
}

fn cal_error(e: CalibrateError) -> CliError {
    match e {
        CalibrateError::Invalid(_) => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

#[derive(Serialize)]
struct ReferenceReport {
    weights: Weights,
    validation_tpr: f64,
    /// Share of validation decision frames where the fitted and reference
    /// weights predict the same action.
    validation_agreement: f64,
}

pub fn execute(r: &CalibrateRun) -> Result<Run, CliError> {
    let cfg = &r.config;
    cfg.calibration.validate().map_err(cal_error)?;
    if let Some(w) = cfg.reference {
        w.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let data_input = digest_file(InputRole::Data, &r.data)?;
    let ds = load_trajectories(&r.data, &cfg.schema, cfg.frame_rate).map_err(data_error)?;
    let ex = extract_events(&ds, &cfg.calibration.replay.extract);
    let prepared = prepare_events(&ex.events, &ds, &cfg.calibration.replay).map_err(cal_error)?;
    let result = calibrate_prepared(&prepared, &cfg.calibration).map_err(|e| match e {
        CalibrateError::InsufficientEvents { need, found } => CliError::Runtime(format!(
            "need at least {need} usable events, found {found} ({} extracted, {} without a full set of neighbours, {} too short)",
            ex.events.len(),
            ex.skipped_missing_roles,
            ex.skipped_short
        )),
        e => cal_error(e),
    })?;

    let game = &cfg.calibration.replay.game;
    let ids: BTreeSet<usize> = result.events.iter().map(|e| e.event_id).collect();
    let used: Vec<PreparedEvent> = prepared.iter().filter(|e| ids.contains(&e.event_id)).cloned().collect();
    let fitted = predict_actions(result.best, &used, game).map_err(cal_error)?;
    let val_ids: BTreeSet<usize> = result.validation_events.iter().copied().collect();

    let mut outputs = Outputs::default();
    outputs.add_json(RESULT_FILE, &result)?;
    outputs.add_with(PREDICTIONS_FILE, |w| write_predictions(w, &fitted, &val_ids))?;
    let mut text = format!(
        "calibrated on {} events: w_s {:.4} w_e {:.4} w_a {:.4}, train TPR {:.4}, validation TPR {:.4}\n",
        result.events.len(),
        result.best.w_s,
        result.best.w_e,
        result.best.w_a,
        result.train_tpr,
        result.validation_tpr
    );
    if let Some(reference) = cfg.reference {
        let val: Vec<PreparedEvent> = used.iter().filter(|e| val_ids.contains(&e.event_id)).cloned().collect();
        let a = predict_actions(result.best, &val, game).map_err(cal_error)?;
        let b = predict_actions(reference, &val, game).map_err(cal_error)?;
        let report = ReferenceReport {
            weights: reference,
            validation_tpr: b.tpr,
            validation_agreement: agreement(&a, &b),
        };
        text.push_str(&format!(
            "reference weights: validation TPR {:.4}, agreement with fit {:.4}\n",
            report.validation_tpr, report.validation_agreement
        ));
        outputs.add_json(REFERENCE_FILE, &report)?;
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Run {
        command: "calibrate",
        seed: Some(cfg.calibration.seed),
        config: to_json(r),
        inputs: vec![data_input],
        outputs,
        summary: text,
    })
}

fn write_predictions(w: &mut Vec<u8>, p: &Prediction, validation: &BTreeSet<usize>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["event_id", "split", "frame", "predicted", "observed", "correct"])?;
    for e in &p.events {
        let split = if validation.contains(&e.event_id) { "validation" } else { "train" };
        for i in 0..e.frames.len() {
            w.write_record([
                e.event_id.to_string(),
                split.to_string(),
                e.frames[i].to_string(),
                e.predicted[i].to_string(),
                e.observed[i].to_string(),
                u8::from(e.predicted[i] == e.observed[i]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

//! `gen`: synthetic trajectory datasets with a ground-truth sidecar.

use crate::manifest::{Outputs, Run};
use crate::{data_error, load_toml, to_json, CliError};
use lanetrust::data::{generate_synthetic, GenConfig, SchemaMap};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const TRACKS_FILE: &str = "tracks.csv";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the number of events in the config.
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long = "out-dir", visible_alias = "out", alias = "out_dir", env = crate::OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRun {
    pub seed: u64,
    pub config: GenConfig,
}

pub fn run(args: Args) -> Result<Run, CliError> {
    let (mut config, input): (GenConfig, _) = load_toml(&args.config)?;
    if let Some(n) = args.events {
        config.events = n;
    }
    let mut run = execute(&GenRun { seed: args.seed, config })?;
    run.inputs.push(input);
    Ok(run)
}

pub fn execute(r: &GenRun) -> Result<Run, CliError> {
    r.config.validate().map_err(data_error)?;
    let syn = generate_synthetic(&r.config, r.seed).map_err(data_error)?;
    let mut outputs = Outputs::default();
    outputs.add_with(TRACKS_FILE, |w| syn.dataset.write_csv(w, &SchemaMap::default()))?;
    let truth = syn.truth_json().map_err(data_error)? + "\n";
    outputs.add(TRUTH_FILE, truth.into_bytes());
    let summary = format!(
        "generated {} events ({} vehicles, {} records) in {} attempts\n",
        syn.truth.events.len(),
        syn.dataset.tracks.len(),
        syn.dataset.n_records(),
        syn.truth.attempts
    );
    Ok(Run {
        command: "gen",
        seed: Some(r.seed),
        config: to_json(r),
        inputs: Vec::new(),
        outputs,
        summary,
    })
}

//! Command-line workflows over the `lanetrust` library: batch simulation,
//! calibration, per-driver trust inference and synthetic data generation.
//! Every run writes a manifest from which it can be repeated.

pub mod calibrate;
pub mod gen;
pub mod infer;
pub mod manifest;
pub mod simulate;

use clap::{Parser, Subcommand, ValueEnum};
use manifest::{commit, digest_file, InputFile, InputRole, Run, RunManifest};
use serde::de::DeserializeOwned;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Default output directory when no flag is given.
pub const OUT_DIR_ENV: &str = "LANETRUST_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "lanetrust-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lanetrust", version, about = "Trust-aware lane-change negotiation toolkit")]
pub struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigKind {
    Simulate,
    Calibrate,
    Infer,
    Gen,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run paired honest/deceptive episode batches.
    Simulate(simulate::Args),
    /// Fit payoff weights to recorded trajectories.
    Calibrate(calibrate::Args),
    /// Replay trust over each follower's interactions.
    Infer(infer::Args),
    /// Generate a synthetic trajectory dataset with ground truth.
    Gen(gen::Args),
    /// Re-run a command from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long = "out-dir", visible_alias = "out", alias = "out_dir", env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
    },
    /// Print the default configuration of a command as TOML.
    Defaults { kind: ConfigKind },
}

pub fn out_dir_or_default(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

pub(crate) fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<(T, InputFile), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((value, digest_file(InputRole::Config, path)?))
}

pub(crate) fn to_toml<T: serde::Serialize>(value: &T) -> String {
    toml::to_string(value).expect("configs serialize to TOML")
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("configs serialize to JSON")
}

fn from_manifest<T: DeserializeOwned>(m: &RunManifest) -> Result<T, CliError> {
    serde_json::from_value(m.config.clone()).map_err(|e| CliError::Config(format!("manifest config: {e}")))
}

/// Manifest inputs must still hash to the recorded digests.
fn check_inputs(m: &RunManifest) -> Result<(), CliError> {
    for input in m.inputs.iter().filter(|i| i.role == InputRole::Data) {
        let now = digest_file(InputRole::Data, &input.path)?;
        if now.sha256 != input.sha256 {
            return Err(CliError::Runtime(format!("{} changed since the recorded run", input.path.display())));
        }
    }
    Ok(())
}

fn replay(manifest: &Path) -> Result<Run, CliError> {
    let m = RunManifest::load(manifest)?;
    check_inputs(&m)?;
    let mut run = match m.command.as_str() {
        "simulate" => simulate::execute(&from_manifest(&m)?)?,
        "calibrate" => calibrate::execute(&from_manifest(&m)?)?,
        "infer" => infer::execute(&from_manifest(&m)?)?,
        "gen" => gen::execute(&from_manifest(&m)?)?,
        other => return Err(CliError::Config(format!("unknown command {other:?} in manifest"))),
    };
    run.inputs = m.inputs;
    Ok(run)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (run, out) = match cli.command {
        Command::Simulate(a) => {
            let out = a.out_dir.clone();
            (simulate::run(a)?, out)
        }
        Command::Calibrate(a) => {
            let out = a.out.clone();
            (calibrate::run(a)?, out)
        }
        Command::Infer(a) => {
            let out = a.out.clone();
            (infer::run(a)?, out)
        }
        Command::Gen(a) => {
            let out = a.out_dir.clone();
            (gen::run(a)?, out)
        }
        Command::Replay { manifest, out_dir } => (replay(&manifest)?, out_dir),
        Command::Defaults { kind } => {
            print!(
                "{}",
                match kind {
                    ConfigKind::Simulate => to_toml(&simulate::SimulateConfig::default()),
                    ConfigKind::Calibrate => to_toml(&calibrate::CalibrateConfig::default()),
                    ConfigKind::Infer => to_toml(&infer::InferConfig::default()),
                    ConfigKind::Gen => to_toml(&lanetrust::data::GenConfig::default()),
                }
            );
            return Ok(());
        }
    };
    let out = out_dir_or_default(out);
    let summary = run.summary.clone();
    let manifest = commit(run, &out)?;
    print!("{summary}");
    println!("wrote {} files to {}", manifest.outputs.len() + 1, out.display());
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Schema and validation problems are configuration errors; the rest are
/// runtime failures.
pub(crate) fn data_error(e: lanetrust::data::DataError) -> CliError {
    use lanetrust::data::DataError as E;
    match e {
        E::MissingColumn { .. } | E::Parse { .. } | E::NonMonotone { .. } | E::BadFrameRate(_) | E::InvalidConfig(_) | E::Csv(_) => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

/// Input paths are recorded absolute so a manifest replays from anywhere.
pub(crate) fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

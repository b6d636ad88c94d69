//! Run manifests and all-or-nothing output directories.

use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputRole {
    Config,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: InputRole,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Everything needed to re-run the command, overrides applied.
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<OutputFile>,
    /// Seconds since the Unix epoch. The only field that changes between
    /// identical runs.
    pub created_unix_s: u64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn digest_file(role: InputRole, path: &Path) -> Result<InputFile, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(InputFile {
        role,
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

/// Files produced by a command, held until the run has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_with<F, E>(&mut self, path: impl Into<PathBuf>, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), E>,
        E: std::fmt::Display,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.add(path, buf);
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.add(path, text.into_bytes());
        Ok(())
    }

    pub fn get(&self, path: &Path) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == path).map(|(_, b)| b.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }
}

/// What a finished command hands back for writing.
pub struct Run {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Outputs,
    pub summary: String,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Writes every output plus the manifest into a hidden staging directory
/// under `out_dir`, then moves them into place. Nothing is left behind if
/// writing fails before the moves.
pub fn commit(run: Run, out_dir: &Path) -> Result<RunManifest, CliError> {
    let created_root = !out_dir.exists();
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let result = stage_and_move(run, out_dir);
    if result.is_err() && created_root {
        let _ = fs::remove_dir_all(out_dir);
    }
    result
}

fn stage_and_move(run: Run, out_dir: &Path) -> Result<RunManifest, CliError> {
    let stage = tempfile::Builder::new()
        .prefix(".lanetrust-stage-")
        .tempdir_in(out_dir)
        .map_err(|e| io(out_dir, e))?;
    let mut outputs = Vec::new();
    for (rel, bytes) in &run.outputs.files {
        let p = stage.path().join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        outputs.push(OutputFile {
            path: rel.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let created_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = RunManifest {
        command: run.command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: run.seed,
        config: run.config,
        inputs: run.inputs,
        outputs,
        created_unix_s,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    fs::write(stage.path().join(MANIFEST_FILE), text).map_err(|e| io(stage.path(), e))?;

    let mut moves: Vec<PathBuf> = run.outputs.files.iter().map(|(p, _)| p.clone()).collect();
    moves.push(PathBuf::from(MANIFEST_FILE));
    for rel in moves {
        let from = stage.path().join(&rel);
        let to = out_dir.join(&rel);
        if let Some(parent) = to.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::rename(&from, &to).map_err(|e| io(&to, e))?;
    }
    Ok(manifest)
}

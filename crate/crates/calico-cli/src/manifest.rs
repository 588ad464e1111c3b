//! Run manifests: every command that writes files also writes a
//! `manifest.json` next to them recording the subcommand, full argv, the
//! effective configuration snapshot, the seed, input and output paths, a
//! `git describe` string, and wall-clock start/finish times. Re-running the
//! recorded argv reproduces the outputs bit for bit; timestamps live only
//! here, never in metric files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calico::{Error, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub git_describe: String,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// `git describe --always --dirty --tags` of the working directory, or
/// "unknown" outside a repository.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .and_then(|out| String::from_utf8(out.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

fn path_strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// Write `manifest.json` into `dir`, finishing the clock now.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: BTreeMap<String, String>,
    seed: u64,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    started_at: String,
) -> Result<PathBuf> {
    let manifest = RunManifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        config,
        seed,
        inputs: path_strings(inputs),
        outputs: path_strings(outputs),
        git_describe: git_describe(),
        started_at,
        finished_at: now_rfc3339(),
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest: {e}")))?;
    std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

//! `manifest.json`: what a run wrote and how each stage ended.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// sha256 of the canonical instance, when the command reads one.
    pub instance_hash: Option<String>,
    pub seed: Option<u64>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub exit_code: i32,
    pub stages: Vec<StageStatus>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Owns an output directory for one command: records every file written and
/// finishes with a manifest that lists exactly those files.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    /// Creates `dir` and removes whatever an earlier manifest in it listed.
    pub fn open(dir: &Path, command: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let old = dir.join(MANIFEST);
        if let Ok(text) = std::fs::read_to_string(&old) {
            if let Ok(prev) = serde_json::from_str::<RunManifest>(&text) {
                for a in prev.artifacts {
                    let p = dir.join(&a.path);
                    if p.exists() {
                        std::fs::remove_file(&p).map_err(|e| io(&p, e))?;
                    }
                }
            }
            std::fs::remove_file(&old).map_err(|e| io(&old, e))?;
        }
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                instance_hash: None,
                seed: None,
                started_unix_s: now(),
                finished_unix_s: 0.0,
                exit_code: 0,
                stages: Vec::new(),
                artifacts: Vec::new(),
            },
        })
    }

    pub fn set_instance(&mut self, canonical: &str, seed: u64) {
        self.manifest.instance_hash = Some(sha256_hex(canonical.as_bytes()));
        self.manifest.seed = Some(seed);
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn stage(&mut self, stage: &str, status: &str) {
        self.manifest.stages.push(StageStatus { stage: stage.into(), status: status.into() });
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        self.manifest.artifacts.retain(|a| a.path != name);
        self.manifest.artifacts.push(Artifact { path: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn finish(mut self, exit_code: i32) -> Result<RunManifest, CliError> {
        self.manifest.exit_code = exit_code;
        self.manifest.finished_unix_s = now();
        let p = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).expect("serializable");
        std::fs::write(&p, text + "\n").map_err(|e| io(&p, e))?;
        Ok(self.manifest)
    }
}

/// Problems found when re-reading a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Audit {
    pub missing: Vec<String>,
    pub modified: Vec<String>,
    /// Files in the directory the manifest does not list.
    pub unlisted: Vec<String>,
}

impl Audit {
    pub fn clean(&self) -> bool {
        self.missing.is_empty() && self.modified.is_empty() && self.unlisted.is_empty()
    }
}

pub fn load(dir: &Path) -> Result<RunManifest, CliError> {
    let p = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&p).map_err(|e| io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))
}

pub fn audit(dir: &Path, m: &RunManifest) -> Result<Audit, CliError> {
    let mut out = Audit { missing: Vec::new(), modified: Vec::new(), unlisted: Vec::new() };
    for a in &m.artifacts {
        match std::fs::read(dir.join(&a.path)) {
            Ok(bytes) if sha256_hex(&bytes) == a.sha256 => {}
            Ok(_) => out.modified.push(a.path.clone()),
            Err(_) => out.missing.push(a.path.clone()),
        }
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    out.unlisted = names
        .into_iter()
        .filter(|n| n != MANIFEST && !m.artifacts.iter().any(|a| &a.path == n))
        .collect();
    Ok(out)
}

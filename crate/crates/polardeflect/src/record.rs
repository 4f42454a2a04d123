//! Output directories that appear atomically, with a digest inventory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RECORD_FILE: &str = "run.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance of one command run. Timings are the only field that varies
/// between identical reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub manifest_sha256: String,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputFile>,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RECORD_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    /// Re-hashes every listed file; returns the paths that no longer match.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.outputs {
            let path = dir.join(&f.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

/// Collects a command's outputs in a hidden sibling directory and moves it
/// into place only when the command succeeds.
#[derive(Debug)]
pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    outputs: Vec<OutputFile>,
    stages: Vec<StageTiming>,
    done: bool,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .ok_or_else(|| Error::config(format!("output path {} has no final component", target.display())))?;
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let dir = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            outputs: Vec::new(),
            stages: Vec::new(),
            done: false,
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputFile {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(Error::data)?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    /// Times `f` as a named stage; failures are tagged with the stage name.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self).map_err(|e| e.in_stage(name))?;
        self.stages.push(StageTiming {
            stage: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    /// Writes the run record and moves the directory into place, replacing
    /// any previous output there.
    pub fn commit(mut self, command: &str, manifest_json: &str) -> Result<RunRecord> {
        let record = RunRecord {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            manifest_sha256: sha256_hex(manifest_json.as_bytes()),
            stages: std::mem::take(&mut self.stages),
            outputs: std::mem::take(&mut self.outputs),
        };
        let mut s = serde_json::to_string_pretty(&record).map_err(Error::data)?;
        s.push('\n');
        let path = self.dir.join(RECORD_FILE);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        fs::rename(&self.dir, &self.target).map_err(|e| Error::io(&self.target, e))?;
        self.done = true;
        Ok(record)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

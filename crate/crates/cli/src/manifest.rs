use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Versions {
    pub fa_core: String,
    pub fa_cli: String,
}

/// Written as `manifest.json` next to the outputs of every run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The resolved configuration, defaults included. Feeding this file back
    /// through `--config` repeats the run.
    pub config: Value,
    pub versions: Versions,
    pub threads: usize,
    pub wall_clock_s: f64,
    pub checks: Vec<Check>,
    pub outputs: Vec<OutputFile>,
    pub exit_code: i32,
    pub error: Option<String>,
}

/// Collects output files and checks of one run.
pub struct Run {
    dir: PathBuf,
    pub checks: Vec<Check>,
    pub outputs: Vec<OutputFile>,
}

impl Run {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            checks: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes `name` with the bytes produced by `fill` and records its digest.
    pub fn emit(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let path = self.dir.join(name);
        std::fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            bytes: buf.len(),
            sha256: hex::encode(Sha256::digest(&buf)),
        });
        Ok(())
    }

    pub fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.emit(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.write_all(b"\n")?;
            Ok(())
        })
    }
}

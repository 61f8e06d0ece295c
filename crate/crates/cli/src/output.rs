use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "shs-threat";

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Embedded in every report so a result can be traced to its inputs.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            core_version: shs_core::VERSION,
            command: command.to_string(),
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn record_file(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.record_bytes(role, &path.display().to_string(), &bytes);
        Ok(())
    }

    pub fn record_bytes(&mut self, role: &str, path: &str, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            role: role.to_string(),
            path: path.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }
}

/// Per-stage wall-clock seconds, in insertion order of first use.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings(pub BTreeMap<String, f64>);

impl Timings {
    pub fn add(&mut self, stage: &str, d: Duration) {
        *self.0.entry(stage.to_string()).or_default() += d.as_secs_f64();
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("stage,seconds\n");
        for (k, v) in &self.0 {
            out.push_str(&format!("{k},{v:.6}\n"));
        }
        out
    }
}

pub struct OutDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.text(name, &(text + "\n"))
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?;
        self.written.push(p.clone());
        Ok(p)
    }
}

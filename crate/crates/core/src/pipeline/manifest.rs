use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::util::{sha256_file, sha256_hex, write_atomic};
use crate::{Error, Result};

pub const RUN_MANIFEST_VERSION: u32 = 1;

/// Outputs of one completed stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of everything the stage read.
    pub fingerprint: String,
    /// Output path (relative to the run root) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Hash over all output hashes.
    pub digest: String,
    pub completed_unix: u64,
}

impl StageRecord {
    pub fn new(fingerprint: String, outputs: BTreeMap<String, String>) -> Self {
        StageRecord {
            digest: digest_of(&outputs),
            fingerprint,
            outputs,
            completed_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// True when every output still exists with its recorded hash.
    pub fn outputs_intact(&self, root: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(rel, hash)| sha256_file(&root.join(rel)).map_or(false, |h| &h == hash))
    }
}

pub fn digest_of(outputs: &BTreeMap<String, String>) -> String {
    let mut text = String::new();
    for (k, v) in outputs {
        text.push_str(k);
        text.push('\t');
        text.push_str(v);
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

/// Reproducibility record kept at the run root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub const FILE: &'static str = "run_manifest.json";

    pub fn new(config: ExperimentConfig) -> Self {
        RunManifest {
            schema_version: RUN_MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            stages: BTreeMap::new(),
        }
    }

    pub fn path(root: &Path) -> PathBuf {
        root.join(Self::FILE)
    }

    /// Loads the manifest at `root`, or starts a fresh one.
    pub fn load_or_new(root: &Path, config: &ExperimentConfig) -> Result<Self> {
        let path = Self::path(root);
        if !path.exists() {
            return Ok(Self::new(config.clone()));
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: RunManifest = serde_json::from_slice(&bytes)?;
        if m.schema_version != RUN_MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "{} has schema version {}, expected {RUN_MANIFEST_VERSION}",
                path.display(),
                m.schema_version
            )));
        }
        m.config = config.clone();
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&Self::path(root), &bytes)
    }

    /// Records a stage, dropping any claim other stages had on its outputs.
    pub fn record(&mut self, stage: &str, record: StageRecord) {
        for (name, other) in self.stages.iter_mut() {
            if name != stage {
                other.outputs.retain(|k, _| !record.outputs.contains_key(k));
            }
        }
        self.stages.insert(stage.to_string(), record);
    }

    pub fn is_current(&self, stage: &str, fingerprint: &str, root: &Path) -> bool {
        self.stages.get(stage).map_or(false, |r| {
            r.fingerprint == fingerprint && r.outputs_intact(root)
        })
    }
}

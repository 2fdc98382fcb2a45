use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::sync::{Arc, RwLock};

use clickintent_core::analyze::{read_impacts, ImpactEvent};
use clickintent_core::contrast::TagStore;
use clickintent_core::train::{load_model, TrainedModel};
use clickintent_core::{Error, Result};

/// A model together with a short content id reported to clients.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: TrainedModel,
    pub model_id: String,
}

impl LoadedModel {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let model = load_model(bytes)?;
        // the trailing 32 bytes are the file checksum
        let digest = &bytes[bytes.len() - 32..];
        let model_id = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { model, model_id })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Analysis exports, kept as the exact bytes written by the exporters.
#[derive(Debug, Default)]
pub struct Exports {
    /// Series record line per session id.
    pub sessions: HashMap<String, String>,
    pub clusters: Option<String>,
    /// Pre-rendered contrast reports keyed by grouping feature.
    pub reports: HashMap<String, String>,
    pub impacts: Vec<ImpactEvent>,
}

impl Exports {
    /// Loads `series.ndjson`, `clusters.ndjson`, `impacts.ndjson` and
    /// `reports/<feature>.ndjson` from `dir`; each file is optional.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut out = Exports::default();
        let series = dir.join("series.ndjson");
        if series.exists() {
            let file = fs::File::open(&series)?;
            for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line?;
                if i == 0 || line.trim().is_empty() {
                    continue;
                }
                let v: serde_json::Value = serde_json::from_str(&line)?;
                let id = v["session_id"]
                    .as_str()
                    .ok_or_else(|| Error::Format(format!("series line {} has no session_id", i + 1)))?;
                out.sessions.insert(id.to_string(), line);
            }
        }
        let clusters = dir.join("clusters.ndjson");
        if clusters.exists() {
            out.clusters = Some(fs::read_to_string(clusters)?);
        }
        let impacts = dir.join("impacts.ndjson");
        if impacts.exists() {
            out.impacts = read_impacts(std::io::BufReader::new(fs::File::open(impacts)?))?;
        }
        let reports = dir.join("reports");
        if reports.is_dir() {
            for entry in fs::read_dir(reports)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "ndjson") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        out.reports.insert(stem.to_string(), fs::read_to_string(&path)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Shared service state. The model and exports are replaced whole, so a
/// request sees either the old or the new value.
pub struct AppState {
    model: RwLock<Option<Arc<LoadedModel>>>,
    exports: RwLock<Arc<Exports>>,
    pub tags: Arc<TagStore>,
    token: String,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, exports: Exports, tags: TagStore, token: impl Into<String>) -> Self {
        Self {
            model: RwLock::new(model.map(Arc::new)),
            exports: RwLock::new(Arc::new(exports)),
            tags: Arc::new(tags),
            token: token.into(),
        }
    }

    pub fn model(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().expect("model lock").clone()
    }

    /// Replaces the served model; in-flight requests keep their snapshot.
    pub fn swap_model(&self, model: Option<LoadedModel>) {
        *self.model.write().expect("model lock") = model.map(Arc::new);
    }

    pub fn exports(&self) -> Arc<Exports> {
        self.exports.read().expect("exports lock").clone()
    }

    pub fn swap_exports(&self, exports: Exports) {
        *self.exports.write().expect("exports lock") = Arc::new(exports);
    }

    pub(crate) fn token_matches(&self, presented: &str) -> bool {
        !self.token.is_empty() && presented.len() == self.token.len()
            && presented.bytes().zip(self.token.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

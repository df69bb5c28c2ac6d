//! Run manifest, written next to the outputs of every run, failed or not.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Default, Serialize)]
pub struct Convergence {
    /// Top Fock level stayed below threshold in every trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cutoff_population: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sum_rule_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_sum_rule_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_norm_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_energy_drift: Option<f64>,
    /// `max |Δ⟨σz⟩|` against a run with doubled cutoffs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doubled_cutoff_change: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doubled_cutoff_converged: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// `ok` or the failure class (`config`, `resources`, `analysis`, `regime`, `error`).
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub convergence: Convergence,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<String>,
    /// Command-specific figures, e.g. maximal deviations.
    pub details: serde_json::Map<String, serde_json::Value>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// SHA-256 of the canonical TOML rendering, as lowercase hex. The output
/// directory is left out so that moved or copied runs keep their hash.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.output = Default::default();
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: String::new(),
            seed: 0,
            started_unix: now(),
            finished_unix: 0.0,
            status: "running".into(),
            error: None,
            outputs: Vec::new(),
            warnings: Vec::new(),
            convergence: Convergence::default(),
            classification: None,
            details: serde_json::Map::new(),
        }
    }

    pub fn set_config(&mut self, cfg: &ExperimentConfig) {
        self.config_hash = config_hash(cfg);
        self.seed = cfg.seed;
    }

    /// Records a warning and echoes it to standard error.
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn detail(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.details.insert(key.to_owned(), value.into());
    }

    /// Writes `manifest-<command>.json` into `dir`.
    pub fn write(&mut self, dir: &Path) -> std::io::Result<PathBuf> {
        self.finished_unix = now();
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tagbench_core::models::{Arch, ModelConfig};
use tagbench_core::train::TrainConfig;

use crate::CliError;

/// Everything a command ran with. Loaded from `--config`, overridden by
/// flags, and written back next to the outputs as `config.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub arch: Option<Arch>,
    /// Narrow widths (same topology) instead of the full-size network.
    pub reduced: bool,
    pub n_mels: Option<usize>,
    /// Full model description; takes priority over `arch`/`reduced`/`n_mels`
    /// when no `--arch` flag is given.
    pub model: Option<ModelConfig>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<String>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub deformations: Vec<String>,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// The network this config describes.
    pub fn resolve_model(&self) -> Result<ModelConfig, CliError> {
        let mut config = match (&self.model, self.arch) {
            (Some(m), None) => m.clone(),
            (Some(m), Some(a)) if m.arch == a => m.clone(),
            (_, Some(a)) if self.reduced => ModelConfig::reduced(a),
            (_, Some(a)) => ModelConfig::new(a),
            (None, None) => return Err(CliError::Config("no architecture given (--arch)".into())),
        };
        if let Some(n) = self.n_mels {
            config.n_mels = n;
        }
        config.validate()?;
        Ok(config)
    }
}

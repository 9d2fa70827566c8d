//! The optional TOML configuration file.
//!
//! Every field is optional and every subcommand has its own section, so one
//! file can drive a whole workflow. Command-line flags always win over the
//! file; the file wins over built-in defaults. Unknown keys are rejected
//! rather than silently ignored, since a typoed option that falls back to a
//! default is worse than an error.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Default output directory, consulted when no --out flag is given.
    pub out_dir: Option<PathBuf>,
    /// Seed shared by the subcommands unless overridden per run.
    pub seed: Option<u64>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub decide: DecideSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub model: Option<String>,
    pub chains: Option<usize>,
    pub total_iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub cost_threshold: Option<f64>,
    pub rhat_threshold: Option<f64>,
    pub with_null: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub settings: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub total_iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub warm_start: Option<String>,
    pub fit_nulls: Option<bool>,
    pub rhat_threshold: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideSection {
    pub levels: Option<Vec<f64>>,
    pub cost_threshold: Option<f64>,
}

impl FileConfig {
    /// Parse the file at `path`, or return the all-default configuration
    /// when no file was named.
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}

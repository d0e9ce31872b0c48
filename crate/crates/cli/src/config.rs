//! Declarative run configuration: one TOML file covering every stage, plus
//! a content hash embedded in all outputs for reproducibility audits.
//!
//! Any subset of fields may be given; the rest take the documented defaults.
//! Example:
//!
//! ```toml
//! seed = 7
//!
//! [train]
//! epochs = 10
//! learning_rate = 0.003
//!
//! [train.model]
//! hidden = 64
//!
//! [guidance]
//! max_steps = 700
//! mode = "full"
//!
//! [eval]
//! num_seeds = 10
//!
//! [render]
//! fly_lines = 200
//! ```
//!
//! The hash is taken over the *canonical* form — the parsed configuration
//! re-serialized with sorted keys — so formatting, comments, and field order
//! in the source file do not change it, while any effective value does.

use std::fs;
use std::path::Path;

use diffplace_core::sampler::GuidanceConfig;
use diffplace_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable naming the default data directory; relative input
/// and output paths resolve against it when set.
pub const DATA_DIR_ENV: &str = "DIFFPLACE_DATA_DIR";

/// Evaluation settings: how many seeds, starting where.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub num_seeds: u64,
    pub seed0: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { num_seeds: 10, seed0: 0 }
    }
}

impl EvalConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (self.seed0..self.seed0 + self.num_seeds).collect()
    }
}

/// Renderer settings mirrored by `render` flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Cap on net fly-lines, longest first.
    pub fly_lines: usize,
    /// Stroke overlapping macro pairs in a distinct class.
    pub highlight_overlaps: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { fly_lines: 200, highlight_overlaps: false }
    }
}

/// Every stage's parameters in one serializable bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Default seed for commands that take one (`sample`, and `eval` via
    /// `eval.seed0`); training reads its own `train.seed`.
    pub seed: u64,
    pub train: TrainConfig,
    pub guidance: GuidanceConfig,
    pub eval: EvalConfig,
    pub render: RenderConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        self.guidance.validate()?;
        if self.eval.num_seeds == 0 {
            return Err(CliError::Data("eval.num_seeds must be at least 1".into()));
        }
        Ok(())
    }
}

/// The parsed configuration re-serialized with sorted keys: the byte string
/// the config hash is computed over.
pub fn canonical_toml(config: &RunConfig) -> String {
    // Round-tripping through a value tree sorts tables by key and prevents
    // scalar-after-table ordering issues; these types always serialize.
    let value = toml::Value::try_from(config).expect("config to TOML value");
    toml::to_string(&value).expect("TOML value to string")
}

/// First 16 hex characters of the SHA-256 of the canonical form.
pub fn config_hash(config: &RunConfig) -> String {
    let digest = Sha256::digest(canonical_toml(config).as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Parse and validate a TOML run configuration.
pub fn config_from_str(text: &str, label: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text)
        .map_err(|e| CliError::Config { file: label.to_string(), msg: e.to_string() })?;
    config.validate()?;
    Ok(config)
}

/// Load the configuration file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::from_io(p, e))?;
            config_from_str(&text, &p.display().to_string())
        }
        None => {
            let config = RunConfig::default();
            config.validate()?;
            Ok(config)
        }
    }
}

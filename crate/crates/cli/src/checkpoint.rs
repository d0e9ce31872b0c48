//! Training checkpoints: a versioned JSON container holding the full trainer
//! state (config, parameters, optimizer, epoch cursor), the noise schedule,
//! the coordinate-frame convention, and the run-config hash.
//!
//! Files are written atomically — the content goes to a sibling `.tmp` file
//! that is renamed into place — so an interrupted save never leaves a
//! partial checkpoint visible. Floats survive save/load bit-for-bit, which
//! is what makes resumed training continue bitwise-identically.

use std::fs;
use std::path::Path;

use diffplace_core::denoiser::DenoiserParams;
use diffplace_core::diffusion::DiffusionSchedule;
use diffplace_core::training::{LossPoint, Trainer};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Coordinate convention the parameters are trained under. A checkpoint
/// recording anything else is rejected on load.
pub const FRAME_CONVENTION: &str =
    "canvas mapped to [-1,1]^2 about its center; coordinates are macro bottom-left corners";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Hash of the run configuration this state was produced under.
    pub config_hash: String,
    pub frame_convention: String,
    pub schedule: DiffusionSchedule,
    pub trainer: Trainer,
}

impl Checkpoint {
    /// Bundle a trainer with its schedule and provenance.
    pub fn new(trainer: Trainer, config_hash: String) -> Result<Self, CliError> {
        let schedule = trainer.config.build_schedule()?;
        Ok(Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash,
            frame_convention: FRAME_CONVENTION.to_string(),
            schedule,
            trainer,
        })
    }

    /// The denoiser parameters, as the sampler's noise predictor.
    pub fn params(&self) -> &DenoiserParams {
        &self.trainer.params
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "unsupported checkpoint format_version {} (this build reads {})",
                self.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        if self.frame_convention != FRAME_CONVENTION {
            return Err(CliError::Data(format!(
                "checkpoint was trained under a different coordinate convention: \
                 \"{}\" (this build uses \"{}\")",
                self.frame_convention, FRAME_CONVENTION
            )));
        }
        self.trainer.config.validate()?;
        if self.schedule.num_steps() != self.trainer.config.num_steps
            || self.schedule.kind() != self.trainer.config.schedule_kind
        {
            return Err(CliError::Data(
                "checkpoint schedule disagrees with its training config".into(),
            ));
        }
        Ok(())
    }
}

/// Write atomically: serialize to `<name>.tmp` beside the target, then
/// rename over it.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CliError> {
    let text = serde_json::to_string(checkpoint).expect("checkpoint serialization");
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Data(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    fs::write(&tmp, text).map_err(|e| CliError::from_io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::from_io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CliError::Json { file: path.display().to_string(), msg: e.to_string() })?;
    checkpoint.validate()?;
    Ok(checkpoint)
}

/// Loss curve as CSV with a header; one row per optimizer step.
pub fn write_loss_csv(
    path: &Path,
    curve: &[LossPoint],
    config_hash: &str,
    seed: u64,
) -> Result<(), CliError> {
    let mut text = format!("# config {config_hash} seed {seed}\nepoch,step,loss\n");
    for p in curve {
        text.push_str(&format!("{},{},{}\n", p.epoch, p.step, p.loss));
    }
    fs::write(path, text).map_err(|e| CliError::from_io(path, e))
}

//! Native JSON design and dataset files.
//!
//! A design file is the netlist types serialized field-for-field, wrapped in
//! a versioned envelope with an optional placement:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "netlist": {
//!     "macros": [{"id": 0, "width": 10.0, "height": 8.0}],
//!     "pads": [{"id": 1, "width": 0.0, "height": 0.0}],
//!     "pad_positions": [[50.0, 0.0]],
//!     "cells": [],
//!     "nets": [{"id": 0, "pins": [{"owner": 0, "offset": [1.0, -2.0]},
//!                                 {"owner": 1, "offset": [0.0, 0.0]}],
//!               "total_degree": null}],
//!     "canvas": {"origin": [0.0, 0.0], "width": 100.0, "height": 100.0}
//!   },
//!   "placement": {"coords": [[45.0, 46.0]]}
//! }
//! ```
//!
//! Dataset files hold training samples in the same envelope style. Floats
//! parse at full round-trip fidelity, so saving and loading is lossless.

use std::fs;
use std::path::Path;

use diffplace_core::sampler::Trajectory;
use diffplace_core::training::TrainSample;
use diffplace_core::{Netlist, Placement};
use serde::{Deserialize, Serialize};

use crate::bookshelf::parse_bookshelf;
use crate::error::CliError;

/// Envelope version this build reads and writes.
pub const DESIGN_FORMAT_VERSION: u32 = 1;

/// Which run produced a file: the config hash plus the seed. Written into
/// every output so results can be traced back and reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// A netlist plus an optional placement for its movable macros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub format_version: u32,
    pub netlist: Netlist,
    #[serde(default)]
    pub placement: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Design {
    pub fn new(netlist: Netlist, placement: Option<Placement>) -> Self {
        Design { format_version: DESIGN_FORMAT_VERSION, netlist, placement, provenance: None }
    }

    pub fn with_provenance(mut self, config_hash: &str, seed: u64) -> Self {
        self.provenance = Some(Provenance { config_hash: config_hash.to_string(), seed });
        self
    }

    /// Envelope version, netlist invariants, and placement shape.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.format_version != DESIGN_FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "unsupported design format_version {} (this build reads {})",
                self.format_version, DESIGN_FORMAT_VERSION
            )));
        }
        self.netlist.validate()?;
        if let Some(p) = &self.placement {
            if p.coords.len() != self.netlist.macros.len() {
                return Err(CliError::Data(format!(
                    "placement has {} rows but the design has {} movable macros",
                    p.coords.len(),
                    self.netlist.macros.len()
                )));
            }
            if !p.is_finite() {
                return Err(CliError::Data("placement contains non-finite coordinates".into()));
            }
        }
        Ok(())
    }

    /// The placement, or a data error naming what is missing.
    pub fn require_placement(&self) -> Result<&Placement, CliError> {
        self.placement
            .as_ref()
            .ok_or_else(|| CliError::Data("this command needs a design with a placement".into()))
    }
}

/// Serialize with a stable two-space layout (deterministic bytes).
pub fn design_to_string(design: &Design) -> String {
    // Serialization of these plain data types cannot fail.
    serde_json::to_string_pretty(design).expect("design serialization")
}

/// Parse and validate a design. `label` names the source in errors.
pub fn design_from_str(text: &str, label: &str) -> Result<Design, CliError> {
    let design: Design = serde_json::from_str(text)
        .map_err(|e| CliError::Json { file: label.to_string(), msg: e.to_string() })?;
    design.validate()?;
    Ok(design)
}

pub fn save_design(path: &Path, design: &Design) -> Result<(), CliError> {
    fs::write(path, design_to_string(design)).map_err(|e| CliError::from_io(path, e))
}

pub fn load_design(path: &Path) -> Result<Design, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    design_from_str(&text, &path.display().to_string())
}

/// Load a design from either format, dispatching on the file extension:
/// `.aux` reads the Bookshelf family, anything else reads the JSON envelope.
pub fn load_input(path: &Path) -> Result<Design, CliError> {
    let is_aux = path
        .extension()
        .map(|e| e.to_string_lossy().eq_ignore_ascii_case("aux"))
        .unwrap_or(false);
    if is_aux {
        let parsed = parse_bookshelf(path)?;
        Ok(Design::new(parsed.netlist, parsed.seed_placement))
    } else {
        load_design(path)
    }
}

/// Envelope for a serialized training dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format_version: u32,
    /// Augmented netlists paired with normalized reference placements.
    pub samples: Vec<TrainSample>,
    /// How many augmentations kept a duplicate pin pair after bounded repair.
    pub degraded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl DatasetFile {
    pub fn new(samples: Vec<TrainSample>, degraded: usize) -> Self {
        DatasetFile { format_version: DESIGN_FORMAT_VERSION, samples, degraded, provenance: None }
    }

    pub fn with_provenance(mut self, config_hash: &str, seed: u64) -> Self {
        self.provenance = Some(Provenance { config_hash: config_hash.to_string(), seed });
        self
    }
}

pub fn save_dataset(path: &Path, dataset: &DatasetFile) -> Result<(), CliError> {
    let text = serde_json::to_string(dataset).expect("dataset serialization");
    fs::write(path, text).map_err(|e| CliError::from_io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let dataset: DatasetFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Json { file: path.display().to_string(), msg: e.to_string() })?;
    if dataset.format_version != DESIGN_FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "unsupported dataset format_version {} (this build reads {})",
            dataset.format_version, DESIGN_FORMAT_VERSION
        )));
    }
    for (i, s) in dataset.samples.iter().enumerate() {
        s.netlist.validate()?;
        if s.x0.coords.len() != s.netlist.macros.len() {
            return Err(CliError::Data(format!(
                "dataset sample {i}: placement shape does not match its netlist"
            )));
        }
    }
    Ok(dataset)
}

/// Envelope for a full reverse-diffusion trajectory: per-timestep metric
/// records plus every intermediate state, keyed by the run that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub format_version: u32,
    pub provenance: Provenance,
    pub trajectory: Trajectory,
}

impl TrajectoryFile {
    pub fn new(trajectory: Trajectory, config_hash: &str, seed: u64) -> Self {
        TrajectoryFile {
            format_version: DESIGN_FORMAT_VERSION,
            provenance: Provenance { config_hash: config_hash.to_string(), seed },
            trajectory,
        }
    }
}

pub fn save_trajectory(path: &Path, file: &TrajectoryFile) -> Result<(), CliError> {
    let text = serde_json::to_string(file).expect("trajectory serialization");
    fs::write(path, text).map_err(|e| CliError::from_io(path, e))
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let file: TrajectoryFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Json { file: path.display().to_string(), msg: e.to_string() })?;
    if file.format_version != DESIGN_FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "unsupported trajectory format_version {} (this build reads {})",
            file.format_version, DESIGN_FORMAT_VERSION
        )));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bookshelf::serialize_bookshelf;
    use diffplace_core::training::synthesize_base;

    fn design() -> Design {
        let netlist = synthesize_base(8, 5).unwrap();
        let placement = Placement::zeros(netlist.macros.len());
        Design::new(netlist, Some(placement))
    }

    #[test]
    fn design_files_round_trip_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        let d = design();
        save_design(&path, &d).unwrap();
        let back = load_design(&path).unwrap();
        assert_eq!(back, d);
        // Same bytes when re-serialized: full float fidelity.
        assert_eq!(design_to_string(&back), design_to_string(&d));
    }

    #[test]
    fn placements_are_optional_but_checked() {
        let mut d = design();
        d.placement = None;
        let text = design_to_string(&d);
        let back = design_from_str(&text, "mem").unwrap();
        assert!(back.placement.is_none());
        assert!(back.require_placement().is_err());

        let mut bad = design();
        bad.placement = Some(Placement::zeros(3));
        assert!(matches!(
            design_from_str(&design_to_string(&bad), "mem").unwrap_err(),
            CliError::Data(_)
        ));
    }

    #[test]
    fn unknown_versions_and_malformed_json_are_rejected() {
        let mut d = design();
        d.format_version = 99;
        assert!(matches!(
            design_from_str(&design_to_string(&d), "mem").unwrap_err(),
            CliError::Data(_)
        ));
        assert!(matches!(
            design_from_str("{not json", "mem").unwrap_err(),
            CliError::Json { .. }
        ));
    }

    #[test]
    fn input_loading_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let d = design();
        let quantized = crate::bookshelf::quantize_netlist(&d.netlist);
        let aux = serialize_bookshelf(
            &quantized,
            d.placement.as_ref().unwrap(),
            dir.path(),
            "design",
        )
        .unwrap();
        let from_aux = load_input(&aux).unwrap();
        assert_eq!(from_aux.netlist, quantized);

        let json_path = dir.path().join("d.json");
        save_design(&json_path, &d).unwrap();
        assert_eq!(load_input(&json_path).unwrap(), d);
    }
}

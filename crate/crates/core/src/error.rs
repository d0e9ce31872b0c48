//! Error and violation types shared across the core crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Hard failures raised by core operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A tensor or placement had the wrong dimensions for the operation.
    ShapeMismatch { expected: usize, got: usize, what: &'static str },
    /// Canvas width or height is zero or negative, so no coordinate frame exists.
    DegenerateCanvas { width: f64, height: f64 },
    /// Timestep outside the valid `1..=num_steps` range of a schedule.
    TimestepOutOfRange { t: usize, num_steps: usize },
    /// Schedule construction was asked for parameters with no valid schedule.
    InvalidSchedule(String),
    /// The netlist failed structural validation; all violations are listed.
    InvalidNetlist(Vec<Violation>),
    /// The netlist still contains standard-cell pins; connectivity filtering
    /// must run before graph construction.
    UnfilteredNetlist { cell_pins: usize },
    /// A loss or gradient became NaN or infinite.
    NonFinite { what: &'static str, epoch: usize, step: usize },
    /// The reverse-diffusion state became NaN or infinite at timestep `t`.
    NonFiniteState { t: usize },
    /// An iterative procedure could not reach a feasible result.
    NonConvergence(String),
    /// Model configuration is inconsistent (e.g. hidden size not divisible by heads).
    InvalidConfig(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { expected, got, what } => {
                write!(f, "shape mismatch in {what}: expected {expected}, got {got}")
            }
            CoreError::DegenerateCanvas { width, height } => {
                write!(f, "degenerate canvas: width={width}, height={height}")
            }
            CoreError::TimestepOutOfRange { t, num_steps } => {
                write!(f, "timestep {t} outside 1..={num_steps}")
            }
            CoreError::InvalidSchedule(msg) => write!(f, "invalid schedule: {msg}"),
            CoreError::InvalidNetlist(violations) => {
                write!(f, "invalid netlist ({} violations):", violations.len())?;
                for v in violations {
                    write!(f, " [{v}]")?;
                }
                Ok(())
            }
            CoreError::UnfilteredNetlist { cell_pins } => {
                write!(
                    f,
                    "netlist has {cell_pins} standard-cell pins; apply connectivity filtering first"
                )
            }
            CoreError::NonFinite { what, epoch, step } => {
                write!(f, "non-finite {what} at epoch {epoch}, step {step}")
            }
            CoreError::NonFiniteState { t } => {
                write!(f, "non-finite sampler state at timestep {t}")
            }
            CoreError::NonConvergence(msg) => write!(f, "did not converge: {msg}"),
            CoreError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}

/// One structural defect found by netlist validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Pin references an owner id outside the macro/pad/cell ranges.
    DanglingPinOwner { net: usize, owner: usize },
    /// Macro width or height is not strictly positive.
    NonPositiveMacroDims { id: usize, width: f64, height: f64 },
    /// Pads are modeled as zero-area terminals; nonzero dimensions are suspect.
    NonZeroPadDims { id: usize, width: f64, height: f64 },
    /// Net has no pins at all.
    EmptyNet { net: usize },
    /// Macro or net ids are not dense `0..len`.
    NonDenseIds { what: &'static str },
    /// Pad position list length differs from the pad list length.
    PadPositionCount { pads: usize, positions: usize },
    /// Canvas has nonpositive width or height.
    DegenerateCanvas { width: f64, height: f64 },
    /// A coordinate or dimension is NaN or infinite.
    NonFiniteValue { what: &'static str, id: usize },
    /// Declared pre-filter degree is smaller than the retained pin count.
    DegreeBelowPinCount { net: usize, declared: u32, pins: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingPinOwner { net, owner } => {
                write!(f, "net {net}: pin owner {owner} does not exist")
            }
            Violation::NonPositiveMacroDims { id, width, height } => {
                write!(f, "macro {id}: nonpositive dims {width}x{height}")
            }
            Violation::NonZeroPadDims { id, width, height } => {
                write!(f, "pad {id}: nonzero dims {width}x{height}")
            }
            Violation::EmptyNet { net } => write!(f, "net {net} has no pins"),
            Violation::NonDenseIds { what } => write!(f, "{what} ids are not dense"),
            Violation::PadPositionCount { pads, positions } => {
                write!(f, "{pads} pads but {positions} pad positions")
            }
            Violation::DegenerateCanvas { width, height } => {
                write!(f, "canvas dims {width}x{height} not positive")
            }
            Violation::NonFiniteValue { what, id } => write!(f, "non-finite {what} on id {id}"),
            Violation::DegreeBelowPinCount { net, declared, pins } => {
                write!(f, "net {net}: declared degree {declared} below retained pin count {pins}")
            }
        }
    }
}

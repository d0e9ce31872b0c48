//! File formats, configuration, checkpoints, evaluation, and rendering for
//! the diffusion macro placer.
//!
//! The core crate is pure computation; this companion owns everything that
//! touches the outside world: Bookshelf and JSON design files, TOML run
//! configuration with content hashing, training checkpoints, the evaluation
//! pipeline, and the SVG renderer. The `diffplace` binary is a thin argument
//! parser over these modules — every subcommand's behavior is reachable as a
//! library call.

pub mod bookshelf;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod json_io;
pub mod svg;

pub use error::CliError;

//! Core engine for diffusion-based macro placement.
//!
//! Everything in this crate is pure computation over heap data: the circuit
//! model, differentiable placement objectives, the denoising-diffusion math,
//! a small reverse-mode tape with the dual-branch denoiser built on it,
//! training and guided sampling loops, and a greedy legalizer. File formats,
//! checkpoints, and the command-line front end live in the companion crate.
//!
//! The crate is `no_std` (with `alloc`), so it can be embedded anywhere a
//! heap exists.

#![no_std]

extern crate alloc;

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod legalize;
pub mod netlist;
pub mod objectives;
pub mod rng;
pub mod sampler;
pub mod tape;
pub mod training;

pub use error::{CoreError, Violation};
pub use netlist::{filter_macro_connectivity, Canvas, Macro, Net, Netlist, Pin, Placement};

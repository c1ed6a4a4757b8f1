//! Core library for simulating distributed multichannel active noise
//! control systems, sample by sample, with reproducible seeded randomness.
//!
//! The crate is organized as a stack:
//! - [`dsp`]: FIR taps, delay lines, signal sources,
//! - [`scene`]: synthetic acoustic plants (primary/secondary paths),
//! - [`pathfile`]: on-disk format for path and filter sets,
//! - [`compensation`]: offline training of cross-path compensation filters,
//! - [`netsim`]: the delayed gradient-message bus between control nodes,
//! - [`controllers`]: the adaptive control algorithms,
//! - [`sim`]: the closed-loop engine tying plant, controller, and source,
//! - [`analysis`]: noise-reduction metrics, optimal-filter and stability math.

pub mod analysis;
pub mod compensation;
pub mod controllers;
pub mod dsp;
pub mod netsim;
pub mod pathfile;
pub mod scene;
pub mod sim;

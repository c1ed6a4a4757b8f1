//! Scenario runner for distributed multichannel active-noise-control
//! experiments: configuration, execution, sweeps, comparisons, and offline
//! analysis, all fully deterministic for a given scenario and seed.

pub mod analyze;
pub mod compare;
pub mod runner;
pub mod scenario;
pub mod sweep;

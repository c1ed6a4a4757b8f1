//! Adaptive control algorithms.
//!
//! All controllers share one synchronous interface: once per sample they
//! receive the common reference sample and the current error-microphone
//! readings, and they return one loudspeaker sample per node. Inside a
//! tick every controller follows the same convention: the filters used to
//! emit this sample's output reflect error information up to and
//! including the previous sample, never the current one.
//!
//! A node whose filter grows past the divergence ceiling (or turns
//! non-finite) is frozen: its last sane weights keep driving the speaker,
//! adaptation stops, and the sample index of the event is recorded so a
//! run can finish and report instead of crashing.

pub mod decentralized;
pub mod diffusion;
pub mod mcfxlms;
pub mod mgd;

pub use decentralized::{DecentralizedConfig, DecentralizedController};
pub use diffusion::{DiffusionConfig, DiffusionController, DiffusionStrategy, DiffusionTopology};
pub use mcfxlms::{McfxlmsConfig, McfxlmsController};
pub use mgd::{GradientRing, MgdConfig, MgdController};

use crate::dsp::DspError;
use thiserror::Error;

/// Weight magnitude past which a node is declared diverged and frozen.
pub const DIVERGENCE_CEILING: f64 = 1e6;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Net(#[from] crate::netsim::NetError),
}

/// A locally computed gradient shared over the network, tagged with the
/// node that produced it and the sample index it was produced at.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMessage {
    pub origin: usize,
    pub stamp: u64,
    pub grad: Vec<f64>,
}

/// The adaptive FIR filters of a multichannel controller, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFilterSet {
    len: usize,
    taps: Vec<Vec<f64>>,
}

impl ControlFilterSet {
    pub fn zeros(nodes: usize, len: usize) -> Self {
        Self {
            len,
            taps: vec![vec![0.0; len]; nodes],
        }
    }

    /// Builds a filter set from explicit taps; rows must be equal-length,
    /// non-empty, and finite.
    pub fn from_taps(taps: Vec<Vec<f64>>) -> Result<Self, ControlError> {
        let len = taps.first().map_or(0, Vec::len);
        if taps.is_empty() || len == 0 {
            return Err(ControlError::Dimension("filter set cannot be empty".into()));
        }
        for (k, row) in taps.iter().enumerate() {
            if row.len() != len {
                return Err(ControlError::Dimension(format!(
                    "node {k} has {} taps, expected {len}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ControlError::Dimension(format!("node {k} holds a non-finite tap")));
            }
        }
        Ok(Self { len, taps })
    }

    pub fn nodes(&self) -> usize {
        self.taps.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.taps[k]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.taps[k]
    }

    /// Largest absolute difference across all nodes and taps.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        assert_eq!(self.taps.len(), other.taps.len(), "node counts differ");
        assert_eq!(self.len, other.len, "tap counts differ");
        let mut worst: f64 = 0.0;
        for (a, b) in self.taps.iter().zip(&other.taps) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Per-node snapshot a controller reports after each tick, consumed by the
/// run logger.
#[derive(Debug, Clone, Copy)]
pub struct NodeStatus {
    /// Step size used by the node's most recent update.
    pub mu: f64,
    /// Largest known peer-message staleness in samples (zero when the
    /// controller exchanges no messages or has heard from no peer).
    pub delta: u64,
    /// Sample index at which the node diverged and froze, if it has.
    pub diverged_at: Option<u64>,
}

/// One synchronous multichannel control algorithm.
pub trait Controller {
    fn nodes(&self) -> usize;

    /// Advances one sample: consumes the common reference sample and the
    /// current per-node error readings, returns one output per node.
    fn tick(&mut self, x: f64, errors: &[f64]) -> Result<Vec<f64>, ControlError>;

    /// Current adaptive filters.
    fn filters(&self) -> &ControlFilterSet;

    /// Status of node `k` as of the most recent tick.
    fn status(&self, k: usize) -> NodeStatus;
}

/// True when every weight is finite and within the divergence ceiling.
pub(crate) fn weights_sane(w: &[f64], ceiling: f64) -> bool {
    w.iter().all(|v| v.is_finite() && v.abs() <= ceiling)
}

//! Fully decentralized filtered-reference LMS.
//!
//! Every node runs an independent single-channel adaptive loop from its
//! own error microphone and its own self-path estimate. Nothing is
//! exchanged: anti-noise arriving from other speakers acts as unmodeled
//! interference, which is exactly the failure mode the cooperative
//! algorithms in this crate exist to remove.

use super::{
    weights_sane, ControlError, ControlFilterSet, Controller, NodeStatus, DIVERGENCE_CEILING,
};
use crate::dsp::{DelayLine, TapVector};
use crate::scene::AcousticScene;

#[derive(Debug, Clone)]
pub struct DecentralizedConfig {
    /// Adaptive filter length per node.
    pub taps: usize,
    /// Per-node step size (shared).
    pub mu: f64,
    /// Weight magnitude that freezes a node as diverged.
    pub divergence_ceiling: f64,
}

impl DecentralizedConfig {
    pub fn new(taps: usize, mu: f64) -> Self {
        Self {
            taps,
            mu,
            divergence_ceiling: DIVERGENCE_CEILING,
        }
    }

    fn validate(&self) -> Result<(), ControlError> {
        if self.taps == 0 {
            return Err(ControlError::Config("filter length must be positive".into()));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(ControlError::Config(format!(
                "step size must be positive and finite, got {}",
                self.mu
            )));
        }
        if !(self.divergence_ceiling.is_finite() && self.divergence_ceiling > 0.0) {
            return Err(ControlError::Config(
                "divergence ceiling must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

pub struct DecentralizedController {
    mu: f64,
    ceiling: f64,
    filters: ControlFilterSet,
    self_estimates: Vec<TapVector>,
    x_line: DelayLine,
    filtered: Vec<DelayLine>, // per node, history of the self-filtered reference
    rollback: Vec<f64>,
    diverged: Vec<Option<u64>>,
    sample: u64,
}

impl DecentralizedController {
    /// Builds the controller from a scene's self-path estimates only; the
    /// cross estimates are deliberately ignored.
    pub fn new(scene: &AcousticScene, cfg: &DecentralizedConfig) -> Result<Self, ControlError> {
        cfg.validate()?;
        let k = scene.nodes();
        let self_estimates: Vec<TapVector> =
            (0..k).map(|n| scene.estimate(n, n).clone()).collect();
        Ok(Self {
            mu: cfg.mu,
            ceiling: cfg.divergence_ceiling,
            filters: ControlFilterSet::zeros(k, cfg.taps),
            self_estimates,
            x_line: DelayLine::new(cfg.taps.max(scene.path_len()))?,
            filtered: (0..k)
                .map(|_| DelayLine::new(cfg.taps))
                .collect::<Result<Vec<_>, _>>()?,
            rollback: vec![0.0; cfg.taps],
            diverged: vec![None; k],
            sample: 0,
        })
    }
}

impl Controller for DecentralizedController {
    fn nodes(&self) -> usize {
        self.filters.nodes()
    }

    fn tick(&mut self, x: f64, errors: &[f64]) -> Result<Vec<f64>, ControlError> {
        let k = self.nodes();
        if errors.len() != k {
            return Err(ControlError::Dimension(format!(
                "{} errors for a {k}-node controller",
                errors.len()
            )));
        }
        let n = self.sample;
        self.sample += 1;
        self.x_line.push(x)?;
        for node in 0..k {
            let v = self.x_line.dot(self.self_estimates[node].as_slice());
            self.filtered[node].push(v)?;
        }
        let y: Vec<f64> = (0..k).map(|node| self.x_line.dot(self.filters.node(node))).collect();
        for node in 0..k {
            if self.diverged[node].is_some() {
                continue;
            }
            let e = errors[node];
            if !e.is_finite() {
                self.diverged[node] = Some(n);
                continue;
            }
            if e != 0.0 {
                self.rollback.copy_from_slice(self.filters.node(node));
                self.filtered[node].accumulate_scaled(self.mu * e, self.filters.node_mut(node));
                if !weights_sane(self.filters.node(node), self.ceiling) {
                    self.filters.node_mut(node).copy_from_slice(&self.rollback);
                    self.diverged[node] = Some(n);
                }
            }
        }
        Ok(y)
    }

    fn filters(&self) -> &ControlFilterSet {
        &self.filters
    }

    fn status(&self, k: usize) -> NodeStatus {
        NodeStatus {
            mu: self.mu,
            delta: 0,
            diverged_at: self.diverged[k],
        }
    }
}

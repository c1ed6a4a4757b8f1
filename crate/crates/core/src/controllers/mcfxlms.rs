//! Centralized multichannel filtered-reference LMS.
//!
//! One processor adapts every node's control filter using every error
//! microphone and the full grid of secondary-path estimates: the filter
//! driving speaker `k` descends the sum of all microphones' squared
//! errors, with the reference filtered through the estimate of each
//! speaker-to-microphone path. This is the coordination ceiling the
//! distributed algorithms are measured against, and the most expensive:
//! its per-sample work grows with the square of the node count.

use super::{
    weights_sane, ControlError, ControlFilterSet, Controller, NodeStatus, DIVERGENCE_CEILING,
};
use crate::dsp::{DelayLine, TapVector};
use crate::scene::AcousticScene;

#[derive(Debug, Clone)]
pub struct McfxlmsConfig {
    /// Adaptive filter length per node.
    pub taps: usize,
    /// Step size shared by every update term.
    pub mu: f64,
    /// Weight magnitude that freezes a node as diverged.
    pub divergence_ceiling: f64,
}

impl McfxlmsConfig {
    pub fn new(taps: usize, mu: f64) -> Self {
        Self {
            taps,
            mu,
            divergence_ceiling: DIVERGENCE_CEILING,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), ControlError> {
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

pub struct McfxlmsController {
    mu: f64,
    ceiling: f64,
    filters: ControlFilterSet,
    estimates: Vec<Vec<TapVector>>, // [mic][spk]
    x_line: DelayLine,
    filtered: Vec<Vec<DelayLine>>, // [spk][mic] histories of the filtered reference
    rollback: Vec<f64>,
    diverged: Vec<Option<u64>>,
    sample: u64,
}

impl McfxlmsController {
    /// Builds the controller from a scene's secondary-path estimates.
    pub fn new(scene: &AcousticScene, cfg: &McfxlmsConfig) -> Result<Self, ControlError> {
        cfg.validate()?;
        let k = scene.nodes();
        let estimates: Vec<Vec<TapVector>> = (0..k)
            .map(|m| (0..k).map(|s| scene.estimate(m, s).clone()).collect())
            .collect();
        let x_line = DelayLine::new(cfg.taps.max(scene.path_len()))?;
        let filtered = (0..k)
            .map(|_| {
                (0..k)
                    .map(|_| DelayLine::new(cfg.taps))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mu: cfg.mu,
            ceiling: cfg.divergence_ceiling,
            filters: ControlFilterSet::zeros(k, cfg.taps),
            estimates,
            x_line,
            filtered,
            rollback: vec![0.0; cfg.taps],
            diverged: vec![None; k],
            sample: 0,
        })
    }
}

impl Controller for McfxlmsController {
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
        for spk in 0..k {
            for mic in 0..k {
                let v = self.x_line.dot(self.estimates[mic][spk].as_slice());
                self.filtered[spk][mic].push(v)?;
            }
        }
        let y: Vec<f64> = (0..k).map(|spk| self.x_line.dot(self.filters.node(spk))).collect();

        // A blown-up plant reading means some node already escaped; freeze
        // everything rather than propagate garbage into the filters.
        if errors.iter().any(|e| !e.is_finite()) {
            for slot in self.diverged.iter_mut() {
                slot.get_or_insert(n);
            }
            return Ok(y);
        }

        for spk in 0..k {
            if self.diverged[spk].is_some() {
                continue;
            }
            self.rollback.copy_from_slice(self.filters.node(spk));
            let w = self.filters.node_mut(spk);
            for mic in 0..k {
                let e = errors[mic];
                if e != 0.0 {
                    self.filtered[spk][mic].accumulate_scaled(self.mu * e, w);
                }
            }
            if !weights_sane(self.filters.node(spk), self.ceiling) {
                self.filters.node_mut(spk).copy_from_slice(&self.rollback);
                self.diverged[spk] = Some(n);
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

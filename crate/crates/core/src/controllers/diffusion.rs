//! Diffusion-cooperative filtered-reference LMS.
//!
//! Nodes adapt locally like the decentralized controller, then average
//! their filters with their neighbours' through a row-stochastic
//! combination matrix. Cooperation happens in weight space, not gradient
//! space: each node pulls its filter toward a convex mix of the
//! neighbourhood's filters every sample, in one of two orders — adapt
//! first and combine the intermediate filters, or combine first and adapt
//! the mixed filter.

use super::{
    weights_sane, ControlError, ControlFilterSet, Controller, NodeStatus, DIVERGENCE_CEILING,
};
use crate::dsp::{DelayLine, TapVector};
use crate::scene::AcousticScene;

/// Row-stochastic combination weights: `weight(k, l)` is how much node `k`
/// takes from node `l`'s filter, and each node's weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTopology {
    weights: Vec<Vec<f64>>,
}

impl DiffusionTopology {
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self, ControlError> {
        let k = weights.len();
        if k == 0 {
            return Err(ControlError::Topology("topology cannot be empty".into()));
        }
        for (node, row) in weights.iter().enumerate() {
            if row.len() != k {
                return Err(ControlError::Topology(format!(
                    "row {node} has {} entries for {k} nodes",
                    row.len()
                )));
            }
            if row.iter().any(|a| !a.is_finite() || *a < 0.0) {
                return Err(ControlError::Topology(format!(
                    "row {node} holds a negative or non-finite weight"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ControlError::Topology(format!(
                    "row {node} sums to {sum}, not one"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// Every node weighs every node (itself included) equally.
    pub fn uniform(nodes: usize) -> Result<Self, ControlError> {
        let w = 1.0 / nodes as f64;
        let mut rows = vec![vec![w; nodes]; nodes];
        // Force exact row sums regardless of how 1/K rounds.
        for row in &mut rows {
            let partial: f64 = row[..nodes - 1].iter().sum();
            row[nodes - 1] = 1.0 - partial;
        }
        Self::from_weights(rows)
    }

    /// No cooperation: every node keeps exactly its own filter.
    pub fn identity(nodes: usize) -> Result<Self, ControlError> {
        let rows = (0..nodes)
            .map(|k| {
                let mut row = vec![0.0; nodes];
                row[k] = 1.0;
                row
            })
            .collect();
        Self::from_weights(rows)
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, node: usize, from: usize) -> f64 {
        self.weights[node][from]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionStrategy {
    AdaptThenCombine,
    CombineThenAdapt,
}

#[derive(Debug, Clone)]
pub struct DiffusionConfig {
    /// Adaptive filter length per node.
    pub taps: usize,
    /// Per-node step size (shared).
    pub mu: f64,
    pub strategy: DiffusionStrategy,
    /// Weight magnitude that freezes a node as diverged.
    pub divergence_ceiling: f64,
}

impl DiffusionConfig {
    pub fn new(taps: usize, mu: f64, strategy: DiffusionStrategy) -> Self {
        Self {
            taps,
            mu,
            strategy,
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

pub struct DiffusionController {
    mu: f64,
    ceiling: f64,
    strategy: DiffusionStrategy,
    topology: DiffusionTopology,
    filters: ControlFilterSet,
    self_estimates: Vec<TapVector>,
    x_line: DelayLine,
    filtered: Vec<DelayLine>,
    scratch: Vec<Vec<f64>>, // intermediate filters, one per node
    rollback: Vec<f64>,
    diverged: Vec<Option<u64>>,
    sample: u64,
}

impl DiffusionController {
    pub fn new(
        scene: &AcousticScene,
        topology: DiffusionTopology,
        cfg: &DiffusionConfig,
    ) -> Result<Self, ControlError> {
        cfg.validate()?;
        let k = scene.nodes();
        if topology.nodes() != k {
            return Err(ControlError::Topology(format!(
                "{}-node topology for a {k}-node scene",
                topology.nodes()
            )));
        }
        Ok(Self {
            mu: cfg.mu,
            ceiling: cfg.divergence_ceiling,
            strategy: cfg.strategy,
            topology,
            filters: ControlFilterSet::zeros(k, cfg.taps),
            self_estimates: (0..k).map(|n| scene.estimate(n, n).clone()).collect(),
            x_line: DelayLine::new(cfg.taps.max(scene.path_len()))?,
            filtered: (0..k)
                .map(|_| DelayLine::new(cfg.taps))
                .collect::<Result<Vec<_>, _>>()?,
            scratch: vec![vec![0.0; cfg.taps]; k],
            rollback: vec![0.0; cfg.taps],
            diverged: vec![None; k],
            sample: 0,
        })
    }

}

/// `acc = sum_l weight(node, l) * source(l)`, skipping zero weights and
/// passing unit weights through untouched so an identity topology
/// reproduces the node's own filter bitwise.
fn combine_into<'a>(
    topology: &DiffusionTopology,
    node: usize,
    source: impl Fn(usize) -> &'a [f64],
    acc: &mut [f64],
) {
    acc.fill(0.0);
    for l in 0..topology.nodes() {
        let a = topology.weight(node, l);
        if a == 0.0 {
            continue;
        }
        let filt = source(l);
        if a == 1.0 {
            for (o, s) in acc.iter_mut().zip(filt) {
                *o += s;
            }
        } else {
            for (o, s) in acc.iter_mut().zip(filt) {
                *o += a * s;
            }
        }
    }
}

impl Controller for DiffusionController {
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

        for (node, &e) in errors.iter().enumerate() {
            if !e.is_finite() {
                self.diverged[node].get_or_insert(n);
            }
        }

        match self.strategy {
            DiffusionStrategy::AdaptThenCombine => {
                // Local adaptation into the intermediate filters.
                for node in 0..k {
                    self.scratch[node].copy_from_slice(self.filters.node(node));
                    if self.diverged[node].is_none() && errors[node] != 0.0 {
                        self.filtered[node]
                            .accumulate_scaled(self.mu * errors[node], &mut self.scratch[node]);
                    }
                }
                // Neighbourhood combination of the intermediates.
                for node in 0..k {
                    if self.diverged[node].is_some() {
                        continue;
                    }
                    self.rollback.copy_from_slice(self.filters.node(node));
                    let scratch = &self.scratch;
                    combine_into(
                        &self.topology,
                        node,
                        |l| scratch[l].as_slice(),
                        self.filters.node_mut(node),
                    );
                    if !weights_sane(self.filters.node(node), self.ceiling) {
                        self.filters.node_mut(node).copy_from_slice(&self.rollback);
                        self.diverged[node] = Some(n);
                    }
                }
            }
            DiffusionStrategy::CombineThenAdapt => {
                // Neighbourhood combination of the current filters.
                for node in 0..k {
                    let mut combined = std::mem::take(&mut self.scratch[node]);
                    let filters = &self.filters;
                    combine_into(&self.topology, node, |l| filters.node(l), &mut combined);
                    self.scratch[node] = combined;
                }
                // Local adaptation on top of the mix.
                for node in 0..k {
                    if self.diverged[node].is_some() {
                        continue;
                    }
                    self.rollback.copy_from_slice(self.filters.node(node));
                    let w = self.filters.node_mut(node);
                    w.copy_from_slice(&self.scratch[node]);
                    if errors[node] != 0.0 {
                        self.filtered[node].accumulate_scaled(self.mu * errors[node], w);
                    }
                    if !weights_sane(self.filters.node(node), self.ceiling) {
                        self.filters.node_mut(node).copy_from_slice(&self.rollback);
                        self.diverged[node] = Some(n);
                    }
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

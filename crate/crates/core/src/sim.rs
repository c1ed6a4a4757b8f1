//! Sample-synchronous closed-loop engine.
//!
//! One iteration per sample, always in the same order: the reference
//! source produces `x(n)`, the plant measures the microphones (speaker
//! outputs up to `y(n-1)` are in the air), the controller ticks on the
//! fresh errors, and the new speaker samples enter the plant's output
//! histories for the next sample. The engine requires at least one sample
//! of acoustic delay on every secondary path, which is what makes
//! "measure before emit" equivalent to an atomic plant step.

use crate::controllers::{ControlError, Controller};
use crate::dsp::{DspError, SignalSource};
use crate::scene::{AcousticScene, PlantState, SceneError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("invalid run: {0}")]
    Config(String),
}

/// Node-major per-sample records of one closed-loop run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    /// Disturbance at each microphone: `d[node][sample]`.
    pub d: Vec<Vec<f64>>,
    /// Residual error at each microphone: `e[node][sample]`.
    pub e: Vec<Vec<f64>>,
    /// Speaker outputs: `y[node][sample]`.
    pub y: Vec<Vec<f64>>,
    /// Step size each node used at each sample.
    pub mu: Vec<Vec<f64>>,
    /// Worst observed peer staleness at each node and sample.
    pub delta: Vec<Vec<u64>>,
    /// Sample index at which each node froze as diverged, if it did.
    pub diverged: Vec<Option<u64>>,
}

impl SimTrace {
    fn with_capacity(nodes: usize, samples: usize) -> Self {
        Self {
            d: vec![Vec::with_capacity(samples); nodes],
            e: vec![Vec::with_capacity(samples); nodes],
            y: vec![Vec::with_capacity(samples); nodes],
            mu: vec![Vec::with_capacity(samples); nodes],
            delta: vec![Vec::with_capacity(samples); nodes],
            diverged: vec![None; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.d.len()
    }

    pub fn samples(&self) -> usize {
        self.d.first().map_or(0, Vec::len)
    }
}

/// Runs the loop for `samples` iterations and records everything.
pub fn run_control_loop(
    scene: &AcousticScene,
    controller: &mut dyn Controller,
    source: &mut SignalSource,
    samples: usize,
) -> Result<SimTrace, SimError> {
    let k = scene.nodes();
    if controller.nodes() != k {
        return Err(SimError::Config(format!(
            "{}-node controller driving a {k}-node scene",
            controller.nodes()
        )));
    }
    if scene.min_secondary_delay() < 1 {
        return Err(SimError::Config(
            "every secondary path needs at least one sample of delay for a \
             sample-synchronous loop"
                .into(),
        ));
    }
    let mut plant = PlantState::new(scene)?;
    let mut trace = SimTrace::with_capacity(k, samples);
    for _ in 0..samples {
        let x = source.next_sample()?;
        let out = plant.measure(scene, x)?;
        let y = controller.tick(x, &out.e)?;
        plant.emit(&y)?;
        for node in 0..k {
            let status = controller.status(node);
            trace.d[node].push(out.d[node]);
            trace.e[node].push(out.e[node]);
            trace.y[node].push(y[node]);
            trace.mu[node].push(status.mu);
            trace.delta[node].push(status.delta);
        }
    }
    for node in 0..k {
        trace.diverged[node] = controller.status(node).diverged_at;
    }
    Ok(trace)
}

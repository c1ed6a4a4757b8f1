//! Step-size stability bounds, with and without gradient-message delay.
//!
//! For a node updating on the summed per-microphone gradients, the
//! weight-error modes decouple along the eigenvectors of the filtered
//! reference correlation matrices. Without delay the usual LMS-style bound
//! applies: the step size must stay below `2 / sum_m lambda_max(k, m)`.
//! When the gradient arrives `delay` samples late, each mode obeys the
//! recursion `v(n+1) = v(n) - mu * lambda * v(n - delay)` whose
//! characteristic polynomial is `z^(delay+1) - z^delay + mu * lambda`. The
//! delayed bound multiplies the delay-free one by
//! `sin(pi / (2 * (2*delay + 1)))`; this module provides both the bound and
//! a direct root check of the polynomial so each can audit the other.

use crate::analysis::wiener::{correlation_block, effective_path};
use crate::analysis::AnalysisError;
use crate::scene::AcousticScene;
use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Largest delay for which stability is decided by explicitly computing the
/// characteristic roots; beyond this the closed-form threshold is used.
const COMPANION_DELAY_LIMIT: u64 = 512;

/// Shrink factor the delay imposes on the delay-free step-size bound.
pub(crate) fn delay_shrink_factor(delay: u64) -> f64 {
    if delay == 0 {
        1.0
    } else {
        (PI / (2.0 * (2.0 * delay as f64 + 1.0))).sin()
    }
}

/// Eigen-structure summary and step-size bounds for one node.
#[derive(Debug, Clone)]
pub struct NodeEigenSummary {
    pub node: usize,
    /// Largest eigenvalue of the filtered-reference correlation matrix,
    /// one entry per error microphone.
    pub lambda_max: Vec<f64>,
    /// Sum of the per-microphone largest eigenvalues.
    pub lambda_sum: f64,
    /// Step-size bound with instantaneous gradients: `2 / lambda_sum`.
    pub bound_no_delay: f64,
    /// Step-size bound with the report's gradient delay applied.
    pub bound_delay: f64,
}

/// Step-size bounds for every node plus the system-wide minima.
#[derive(Debug, Clone)]
pub struct StepBoundReport {
    /// Gradient staleness, in samples, the delayed bounds assume.
    pub delay: u64,
    pub per_node: Vec<NodeEigenSummary>,
    /// Smallest delay-free bound across nodes.
    pub global_no_delay: f64,
    /// Smallest delayed bound across nodes.
    pub global_delay: f64,
}

/// Computes per-node step-size bounds from the scene's path models.
///
/// The reference is unit-variance white noise, optionally shaped by the FIR
/// `shaping`; `taps` is the control filter length and `delay` the assumed
/// gradient staleness. With `delay == 0` the delayed bound equals the
/// delay-free bound exactly.
pub fn step_bound(
    scene: &AcousticScene,
    shaping: Option<&[f64]>,
    taps: usize,
    delay: u64,
) -> Result<StepBoundReport, AnalysisError> {
    if taps == 0 {
        return Err(AnalysisError::Parameter(
            "filter length must be non-zero".into(),
        ));
    }
    if let Some(g) = shaping {
        if g.is_empty() {
            return Err(AnalysisError::Parameter("shaping filter is empty".into()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite);
        }
    }
    let factor = delay_shrink_factor(delay);
    let mut per_node = Vec::with_capacity(scene.nodes());
    for k in 0..scene.nodes() {
        let mut lambda_max = Vec::with_capacity(scene.nodes());
        for m in 0..scene.nodes() {
            let path = effective_path(scene.estimate(m, k).as_slice(), shaping);
            let block = correlation_block(&path, &path, taps);
            let eigen = SymmetricEigen::new(block);
            // The correlation matrix is positive semi-definite; tiny
            // negative eigenvalues are rounding noise.
            let top = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
            lambda_max.push(top);
        }
        let lambda_sum: f64 = lambda_max.iter().sum();
        if lambda_sum <= 0.0 {
            return Err(AnalysisError::Parameter(format!(
                "node {k}: reference carries no power through any path model"
            )));
        }
        let bound_no_delay = 2.0 / lambda_sum;
        per_node.push(NodeEigenSummary {
            node: k,
            lambda_max,
            lambda_sum,
            bound_no_delay,
            bound_delay: bound_no_delay * factor,
        });
    }
    let global_no_delay = per_node
        .iter()
        .map(|n| n.bound_no_delay)
        .fold(f64::INFINITY, f64::min);
    Ok(StepBoundReport {
        delay,
        per_node,
        global_no_delay,
        global_delay: global_no_delay * factor,
    })
}

/// Verdict of the characteristic-polynomial stability check for one mode
/// family (one node's summed eigenvalue) at one step size and delay.
#[derive(Debug, Clone)]
pub struct CharPolyReport {
    pub mu: f64,
    pub lambda_sum: f64,
    pub delay: u64,
    /// Whether every characteristic root lies strictly inside the unit
    /// circle.
    pub stable: bool,
    /// Largest root magnitude, when the roots were computed explicitly
    /// (delays up to the companion limit); `None` when the closed-form
    /// threshold decided.
    pub max_root_magnitude: Option<f64>,
    /// Closed-form critical step size:
    /// `(2 / lambda_sum) * sin(pi / (2 * (2*delay + 1)))`.
    pub critical_mu: f64,
}

/// Decides stability of `z^(delay+1) - z^delay + mu * lambda_sum`.
///
/// Delays up to 512 are decided by the actual roots (companion-matrix
/// eigenvalues), larger delays by the closed-form critical step size. At
/// `delay == 0` the polynomial is linear and its root is
/// `1 - mu * lambda_sum`.
pub fn characteristic_stability(
    mu: f64,
    lambda_sum: f64,
    delay: u64,
) -> Result<CharPolyReport, AnalysisError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(AnalysisError::Parameter(format!(
            "step size must be positive and finite, got {mu}"
        )));
    }
    if !(lambda_sum.is_finite() && lambda_sum > 0.0) {
        return Err(AnalysisError::Parameter(format!(
            "eigenvalue sum must be positive and finite, got {lambda_sum}"
        )));
    }
    let critical_mu = (2.0 / lambda_sum) * delay_shrink_factor(delay);
    if delay > COMPANION_DELAY_LIMIT {
        return Ok(CharPolyReport {
            mu,
            lambda_sum,
            delay,
            stable: mu < critical_mu,
            max_root_magnitude: None,
            critical_mu,
        });
    }

    // Monic coefficients of z^d + a[d-1] z^(d-1) + ... + a[0] with
    // d = delay + 1: the z^delay term contributes -1 and the constant
    // term +mu*lambda_sum (they share a slot when delay == 0).
    let d = (delay + 1) as usize;
    let mut a = vec![0.0; d];
    a[0] += mu * lambda_sum;
    a[delay as usize] -= 1.0;

    let mut companion = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = 1.0;
    }
    for (i, &coeff) in a.iter().enumerate() {
        companion[(i, d - 1)] = -coeff;
    }
    let max_root = companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Ok(CharPolyReport {
        mu,
        lambda_sum,
        delay,
        stable: max_root < 1.0,
        max_root_magnitude: Some(max_root),
        critical_mu,
    })
}

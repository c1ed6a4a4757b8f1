//! Mean-square-optimal control filters for the coupled multichannel plant.
//!
//! Every loudspeaker reaches every error microphone, so the optimal filter
//! of one node depends on every other node's filter. This module assembles
//! the full set of cross-correlation normal equations and solves all nodes
//! jointly — one stacked symmetric system instead of a per-node fixed-point
//! iteration — which resolves the coupling exactly.
//!
//! Statistics come from one of two routes: closed-form path correlations
//! (exact for white or FIR-shaped stationary references) or sample averages
//! over a simulated record (works for any source). The quadratic cost of an
//! arbitrary filter set can be evaluated against the same statistics, which
//! is what makes the solution checkable: no perturbation of the solved
//! filters may decrease it.

use crate::analysis::AnalysisError;
use crate::controllers::ControlFilterSet;
use crate::dsp::{tap_history, DelayLine, SignalSource};
use crate::scene::{convolve_truncated, AcousticScene};
use nalgebra::{DMatrix, DVector};

/// Relative diagonal loading applied before factorization, as a fraction of
/// the mean diagonal entry.
const DIAGONAL_LOADING: f64 = 1e-10;

/// Lag-domain cross-correlation of two FIR responses driven by the same
/// unit-variance white input: `rho(tau) = sum_p a[p] * b[p + tau]`.
pub(crate) fn cross_correlation_at(a: &[f64], b: &[f64], tau: i64) -> f64 {
    let mut acc = 0.0;
    for (p, &ap) in a.iter().enumerate() {
        let q = p as i64 + tau;
        if q >= 0 {
            if let Some(&bq) = b.get(q as usize) {
                acc += ap * bq;
            }
        }
    }
    acc
}

/// Toeplitz correlation block `R[i][j] = rho_ab(i - j)` between the
/// white-noise responses of `a` and `b`, sized `taps x taps`.
pub(crate) fn correlation_block(a: &[f64], b: &[f64], taps: usize) -> DMatrix<f64> {
    // rho[taps - 1 + tau] holds rho_ab(tau); each diagonal of the block is
    // constant so the lags are computed once.
    let mut rho = vec![0.0; 2 * taps - 1];
    for (idx, slot) in rho.iter_mut().enumerate() {
        *slot = cross_correlation_at(a, b, idx as i64 - (taps as i64 - 1));
    }
    DMatrix::from_fn(taps, taps, |i, j| {
        rho[(taps as i64 - 1 + i as i64 - j as i64) as usize]
    })
}

/// Correlation vector `P[i] = rho_ad(i)` between a filtered reference
/// response `a` and the disturbance response `d`, length `taps`.
pub(crate) fn correlation_vector(a: &[f64], d: &[f64], taps: usize) -> DVector<f64> {
    DVector::from_fn(taps, |i, _| cross_correlation_at(a, d, i as i64))
}

/// Convolves a path with an optional source-shaping FIR. A reference built
/// as shaped white noise has the same statistics as white noise driving the
/// shaped path, so shaping folds into the correlations exactly.
pub(crate) fn effective_path(path: &[f64], shaping: Option<&[f64]>) -> Vec<f64> {
    match shaping {
        Some(g) => convolve_truncated(path, g, path.len() + g.len() - 1),
        None => path.to_vec(),
    }
}

/// Second-order statistics of the coupled control problem: correlation
/// blocks between every pair of filtered references, cross-correlations with
/// the disturbances, and the total disturbance power. Microphone sums are
/// pre-applied, which is all the normal equations and the cost need.
#[derive(Debug, Clone)]
pub struct WienerProblem {
    nodes: usize,
    taps: usize,
    /// `blocks[k][l]` = sum over microphones of the correlation between the
    /// references filtered for speakers `k` and `l`.
    blocks: Vec<Vec<DMatrix<f64>>>,
    /// `cross[k]` = sum over microphones of the disturbance correlation.
    cross: Vec<DVector<f64>>,
    /// Sum over microphones of the disturbance power.
    disturbance_power: f64,
}

impl WienerProblem {
    /// Builds the statistics in closed form from the scene's path models.
    ///
    /// The reference is unit-variance white noise, optionally shaped by the
    /// FIR `shaping`. Filtered references use the scene's path estimates and
    /// disturbances use its primary paths, matching what an adaptive
    /// controller sees; with exact path models the solution is the true
    /// optimum of the physical plant.
    pub fn analytic(
        scene: &AcousticScene,
        shaping: Option<&[f64]>,
        taps: usize,
    ) -> Result<Self, AnalysisError> {
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
        let k_nodes = scene.nodes();
        let mut blocks = vec![vec![DMatrix::zeros(taps, taps); k_nodes]; k_nodes];
        let mut cross = vec![DVector::zeros(taps); k_nodes];
        let mut disturbance_power = 0.0;

        for m in 0..k_nodes {
            let d_path = effective_path(scene.primary(m).as_slice(), shaping);
            disturbance_power += cross_correlation_at(&d_path, &d_path, 0);
            let refs: Vec<Vec<f64>> = (0..k_nodes)
                .map(|k| effective_path(scene.estimate(m, k).as_slice(), shaping))
                .collect();
            for k in 0..k_nodes {
                cross[k] += correlation_vector(&refs[k], &d_path, taps);
                for l in 0..k_nodes {
                    blocks[k][l] += correlation_block(&refs[k], &refs[l], taps);
                }
            }
        }

        Ok(Self {
            nodes: k_nodes,
            taps,
            blocks,
            cross,
            disturbance_power,
        })
    }

    /// Estimates the statistics by averaging over a simulated record of
    /// `samples` ticks drawn from `source`, after a warm-up long enough to
    /// fill every delay line. Works for sources with no closed-form
    /// correlation structure.
    pub fn sampled(
        scene: &AcousticScene,
        source: &mut SignalSource,
        taps: usize,
        samples: usize,
    ) -> Result<Self, AnalysisError> {
        if taps == 0 || samples == 0 {
            return Err(AnalysisError::Parameter(
                "filter length and sample budget must be non-zero".into(),
            ));
        }
        let k_nodes = scene.nodes();
        let line_cap = scene.path_len().max(scene.primary_len());
        let mut x_line = DelayLine::new(line_cap).map_err(dsp_dim)?;
        let mut filtered: Vec<Vec<DelayLine>> = (0..k_nodes)
            .map(|_| {
                (0..k_nodes)
                    .map(|_| DelayLine::new(taps).map_err(dsp_dim))
                    .collect::<Result<_, _>>()
            })
            .collect::<Result<_, _>>()?;

        let mut blocks = vec![vec![DMatrix::zeros(taps, taps); k_nodes]; k_nodes];
        let mut cross = vec![DVector::zeros(taps); k_nodes];
        let mut disturbance_power = 0.0;
        let mut hist = vec![DVector::zeros(taps); k_nodes];

        let warmup = line_cap + taps;
        for n in 0..warmup + samples {
            let x = source.next_sample().map_err(dsp_dim)?;
            if !x.is_finite() {
                return Err(AnalysisError::NonFinite);
            }
            x_line.push(x).map_err(dsp_dim)?;
            for m in 0..k_nodes {
                for k in 0..k_nodes {
                    let sample = x_line.dot(scene.estimate(m, k).as_slice());
                    filtered[m][k].push(sample).map_err(dsp_dim)?;
                }
            }
            if n < warmup {
                continue;
            }
            for m in 0..k_nodes {
                let d = x_line.dot(scene.primary(m).as_slice());
                disturbance_power += d * d;
                for k in 0..k_nodes {
                    let h = tap_history(&filtered[m][k], taps).map_err(dsp_dim)?;
                    hist[k] = DVector::from_vec(h);
                }
                for k in 0..k_nodes {
                    cross[k].axpy(d, &hist[k], 1.0);
                    for l in 0..k_nodes {
                        // blocks[k][l] += hist_k * hist_l^T
                        blocks[k][l].ger(1.0, &hist[k], &hist[l], 1.0);
                    }
                }
            }
        }

        let scale = 1.0 / samples as f64;
        for row in &mut blocks {
            for b in row {
                *b *= scale;
            }
        }
        for c in &mut cross {
            *c *= scale;
        }
        disturbance_power *= scale;

        Ok(Self {
            nodes: k_nodes,
            taps,
            blocks,
            cross,
            disturbance_power,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Mean disturbance power summed over microphones — the cost of doing
    /// nothing, and the denominator of suppression ratios.
    pub fn disturbance_power(&self) -> f64 {
        self.disturbance_power
    }

    /// Solves the stacked normal equations for all nodes jointly.
    ///
    /// The stacked matrix is symmetric positive semi-definite by
    /// construction; a relative diagonal loading of `1e-10` times the mean
    /// diagonal entry guarantees a finite Cholesky factorization without
    /// disturbing well-posed problems.
    pub fn solve(&self) -> Result<WienerSolution, AnalysisError> {
        let dim = self.nodes * self.taps;
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        for k in 0..self.nodes {
            b.rows_mut(k * self.taps, self.taps).copy_from(&self.cross[k]);
            for l in 0..self.nodes {
                a.view_mut((k * self.taps, l * self.taps), (self.taps, self.taps))
                    .copy_from(&self.blocks[k][l]);
            }
        }
        let trace = a.trace();
        if !(trace.is_finite() && trace > 0.0) {
            return Err(AnalysisError::Singular(format!(
                "stacked correlation matrix has trace {trace}"
            )));
        }
        let loading = DIAGONAL_LOADING * trace / dim as f64;
        for i in 0..dim {
            a[(i, i)] += loading;
        }
        let chol = a.cholesky().ok_or_else(|| {
            AnalysisError::Singular(format!(
                "{dim}x{dim} stacked system failed Cholesky even with loading {loading:.3e}"
            ))
        })?;
        let w = chol.solve(&b);

        let taps: Vec<Vec<f64>> = (0..self.nodes)
            .map(|k| w.rows(k * self.taps, self.taps).iter().copied().collect())
            .collect();
        let filters = ControlFilterSet::from_taps(taps)
            .map_err(|e| AnalysisError::Singular(format!("solution unusable: {e}")))?;
        let residual_power = self.cost(&filters)?;
        Ok(WienerSolution {
            filters,
            residual_power,
        })
    }

    /// Evaluates the quadratic cost — the mean total error power across all
    /// microphones — that `filters` would achieve against these statistics.
    pub fn cost(&self, filters: &ControlFilterSet) -> Result<f64, AnalysisError> {
        if filters.nodes() != self.nodes || filters.len() != self.taps {
            return Err(AnalysisError::Dimension(format!(
                "filter set is {}x{}, statistics are {}x{}",
                filters.nodes(),
                filters.len(),
                self.nodes,
                self.taps
            )));
        }
        let w: Vec<DVector<f64>> = (0..self.nodes)
            .map(|k| DVector::from_column_slice(filters.node(k)))
            .collect();
        let mut cost = self.disturbance_power;
        for k in 0..self.nodes {
            cost -= 2.0 * self.cross[k].dot(&w[k]);
            for l in 0..self.nodes {
                cost += w[k].dot(&(&self.blocks[k][l] * &w[l]));
            }
        }
        Ok(cost)
    }
}

fn dsp_dim(e: crate::dsp::DspError) -> AnalysisError {
    AnalysisError::Parameter(e.to_string())
}

/// The jointly optimal filter set and the error power it leaves behind.
#[derive(Debug, Clone)]
pub struct WienerSolution {
    pub filters: ControlFilterSet,
    /// Cost of the solution itself: total residual error power.
    pub residual_power: f64,
}

/// Convenience route: closed-form statistics for a white reference, solved.
pub fn wiener_filters(
    scene: &AcousticScene,
    taps: usize,
) -> Result<WienerSolution, AnalysisError> {
    WienerProblem::analytic(scene, None, taps)?.solve()
}

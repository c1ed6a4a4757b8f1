//! Offline analysis of a scenario without running it: arithmetic cost,
//! step-size stability bounds under gradient delay, and the optimal
//! (Wiener) filter benchmark where the noise model permits.

use crate::scenario::{NoiseSpec, Scenario, ScenarioError};
use anc_core::analysis::{
    characteristic_stability, complexity_table, step_bound, AnalysisError, SystemDims,
};
use anc_core::dsp::design_bandpass;
use anc_core::pathfile;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Dsp(#[from] anc_core::dsp::DspError),
    #[error(transparent)]
    PathFile(#[from] anc_core::pathfile::PathFileError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Solving the stacked optimal-filter system is cubic in `nodes * taps`;
/// beyond this size the report simply omits it.
const WIENER_DIM_CAP: usize = 2048;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostRow {
    pub algorithm: String,
    pub multiplications: u64,
    pub additions: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeBound {
    pub node: usize,
    pub lambda_sum: f64,
    pub bound_no_delay: f64,
    pub bound_delay: f64,
    /// Verdict for the scenario's step size at the report delay.
    pub stable_at_scenario_mu: bool,
    pub critical_mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    /// Gradient staleness assumed for the delayed bounds, in samples.
    pub delay: u64,
    pub global_no_delay: f64,
    pub global_delay: f64,
    pub per_node: Vec<NodeBound>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WienerReport {
    pub residual_power: f64,
    pub disturbance_power: f64,
    /// Suppression of the optimal filters: `10 log10(residual/disturbance)`.
    pub optimal_nse_db: Option<f64>,
    pub filters_file: String,
}

/// The full analysis output, stored as `analysis.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scenario_sha256: String,
    pub nodes: usize,
    pub control_taps: usize,
    pub path_taps: usize,
    pub history: usize,
    pub mu: f64,
    pub cost_per_sample: Vec<CostRow>,
    /// Present when the reference is white or filtered white noise; tonal
    /// and recorded references have no closed-form correlation model here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wiener: Option<WienerReport>,
}

impl AnalysisReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "analysis for K={} N={} L={} H={}\n",
            self.nodes, self.control_taps, self.path_taps, self.history
        ));
        out.push_str("per-sample cost (multiplications / additions):\n");
        for row in &self.cost_per_sample {
            out.push_str(&format!(
                "  {:<28} {:>10} / {:>10}\n",
                row.algorithm, row.multiplications, row.additions
            ));
        }
        match &self.bounds {
            Some(b) => {
                out.push_str(&format!(
                    "step-size bounds (delay {} samples): no-delay {:.6e}, delayed {:.6e}\n",
                    b.delay, b.global_no_delay, b.global_delay
                ));
                for n in &b.per_node {
                    out.push_str(&format!(
                        "  node {}: lambda sum {:.4}, bounds {:.6e} / {:.6e}, mu {:.3e} -> {}\n",
                        n.node,
                        n.lambda_sum,
                        n.bound_no_delay,
                        n.bound_delay,
                        self.mu,
                        if n.stable_at_scenario_mu { "stable" } else { "UNSTABLE" }
                    ));
                }
            }
            None => out.push_str(
                "step-size bounds: skipped (reference is not white or filtered white noise)\n",
            ),
        }
        match &self.wiener {
            Some(w) => {
                let db = w
                    .optimal_nse_db
                    .map(|v| format!("{v:.2} dB"))
                    .unwrap_or_else(|| "n/a".into());
                out.push_str(&format!(
                    "optimal filters: residual power {:.6e} of {:.6e} ({db}), saved to {}\n",
                    w.residual_power, w.disturbance_power, w.filters_file
                ));
            }
            None => out.push_str("optimal filters: skipped\n"),
        }
        out
    }
}

/// Shaping filter implied by the noise model, when one exists.
fn shaping_taps(scenario: &Scenario) -> Result<Option<Option<Vec<f64>>>, AnalyzeError> {
    Ok(match &scenario.noise {
        NoiseSpec::White => Some(None),
        NoiseSpec::Bandpass { low_hz, high_hz, taps } => Some(Some(
            design_bandpass(*low_hz, *high_hz, scenario.fs, *taps)?
                .as_slice()
                .to_vec(),
        )),
        NoiseSpec::Sine { .. } | NoiseSpec::File { .. } => None,
    })
}

/// Analyzes `scenario` at gradient staleness `delay`, writing
/// `analysis.json` (and `wiener.anc` when computed) into `out_dir`.
pub fn analyze(scenario: &Scenario, delay: u64, out_dir: &Path) -> Result<AnalysisReport, AnalyzeError> {
    let resolved = scenario.resolve()?;
    let scene = &resolved.scene;
    let taps = scenario.controller.taps;
    let history = scenario.compensation.as_ref().map_or(1, |c| c.len);

    let dims = SystemDims::new(scene.nodes(), taps, scene.path_len(), history)?;
    let cost_per_sample = complexity_table(dims)
        .into_iter()
        .map(|row| CostRow {
            algorithm: row.algorithm.name().to_string(),
            multiplications: row.multiplications,
            additions: row.additions,
        })
        .collect();

    std::fs::create_dir_all(out_dir).map_err(|source| AnalyzeError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let shaping = shaping_taps(scenario)?;
    let mut bounds = None;
    let mut wiener = None;
    if let Some(shaping) = shaping {
        let shaping_ref = shaping.as_deref();
        let report = step_bound(scene, shaping_ref, taps, delay)?;
        let per_node = report
            .per_node
            .iter()
            .map(|n| {
                let verdict = characteristic_stability(scenario.controller.mu, n.lambda_sum, delay)?;
                Ok(NodeBound {
                    node: n.node,
                    lambda_sum: n.lambda_sum,
                    bound_no_delay: n.bound_no_delay,
                    bound_delay: n.bound_delay,
                    stable_at_scenario_mu: verdict.stable,
                    critical_mu: verdict.critical_mu,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        bounds = Some(BoundsReport {
            delay,
            global_no_delay: report.global_no_delay,
            global_delay: report.global_delay,
            per_node,
        });

        if scene.nodes() * taps <= WIENER_DIM_CAP {
            let problem =
                anc_core::analysis::WienerProblem::analytic(scene, shaping_ref, taps)?;
            let solution = problem.solve()?;
            let filters_path = out_dir.join("wiener.anc");
            pathfile::save_control(&filters_path, &solution.filters)?;
            let disturbance = problem.disturbance_power();
            wiener = Some(WienerReport {
                residual_power: solution.residual_power,
                disturbance_power: disturbance,
                optimal_nse_db: (disturbance > 0.0 && solution.residual_power > 0.0)
                    .then(|| 10.0 * (solution.residual_power / disturbance).log10()),
                filters_file: "wiener.anc".to_string(),
            });
        }
    }

    let report = AnalysisReport {
        scenario_sha256: scenario.sha256(),
        nodes: scene.nodes(),
        control_taps: taps,
        path_taps: scene.path_len(),
        history,
        mu: scenario.controller.mu,
        cost_per_sample,
        bounds,
        wiener,
    };
    let json_path = out_dir.join("analysis.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| AnalyzeError::Io {
        path: json_path.clone(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    std::fs::write(&json_path, json).map_err(|source| AnalyzeError::Io {
        path: json_path,
        source,
    })?;
    Ok(report)
}

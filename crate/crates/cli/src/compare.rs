//! Pairwise comparison of finished runs.
//!
//! Two modes: `weights` contrasts the final control filters (per-node
//! relative L2 and max-abs differences), `nse` contrasts the terminal
//! suppression figures. Records must describe the same plant and filter
//! length to be comparable.

use crate::runner::{load_record, RunRecord, RunnerError};
use anc_core::controllers::ControlFilterSet;
use anc_core::pathfile;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    PathFile(#[from] anc_core::pathfile::PathFileError),
    #[error("records are not comparable: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMode {
    /// Final control filters.
    Weights,
    /// Terminal suppression curves.
    NseCurves,
}

impl CompareMode {
    pub fn parse(text: &str) -> Result<Self, CompareError> {
        match text {
            "weights" => Ok(Self::Weights),
            "nse" => Ok(Self::NseCurves),
            other => Err(CompareError::Mismatch(format!(
                "unknown comparison mode {other:?}; expected \"weights\" or \"nse\""
            ))),
        }
    }
}

/// Weight differences for one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeWeightDiff {
    pub node: usize,
    /// `|a - b| / max(|a|, |b|)` in L2; zero when both filters are zero.
    pub relative_l2: f64,
    pub max_abs: f64,
}

/// Terminal suppression difference for one node (a minus b, in dB).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeNseDelta {
    pub node: usize,
    pub a_db: Option<f64>,
    pub b_db: Option<f64>,
    pub delta_db: Option<f64>,
}

/// The full comparison report, serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub mode: String,
    pub a_algorithm: String,
    pub b_algorithm: String,
    pub a_diverged: Vec<Option<u64>>,
    pub b_diverged: Vec<Option<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<NodeWeightDiff>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nse: Option<Vec<NodeNseDelta>>,
}

impl CompareReport {
    /// Largest per-node relative L2 difference, when in weight mode.
    pub fn worst_relative_l2(&self) -> Option<f64> {
        self.weights
            .as_ref()
            .map(|w| w.iter().map(|d| d.relative_l2).fold(0.0, f64::max))
    }

    /// Human-readable rendering for the terminal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "comparison ({}): {} vs {}\n",
            self.mode, self.a_algorithm, self.b_algorithm
        ));
        for (label, flags) in [("a", &self.a_diverged), ("b", &self.b_diverged)] {
            let frozen: Vec<String> = flags
                .iter()
                .enumerate()
                .filter_map(|(k, d)| d.map(|s| format!("node {k} at sample {s}")))
                .collect();
            if frozen.is_empty() {
                out.push_str(&format!("  {label}: no divergence\n"));
            } else {
                out.push_str(&format!("  {label}: DIVERGED ({})\n", frozen.join(", ")));
            }
        }
        if let Some(weights) = &self.weights {
            for d in weights {
                out.push_str(&format!(
                    "  node {}: relative L2 {:.3e}, max abs {:.3e}\n",
                    d.node, d.relative_l2, d.max_abs
                ));
            }
        }
        if let Some(nse) = &self.nse {
            for d in nse {
                let fmt = |v: Option<f64>| match v {
                    Some(db) => format!("{db:.2} dB"),
                    None => "n/a".to_string(),
                };
                out.push_str(&format!(
                    "  node {}: a {} , b {} , delta {}\n",
                    d.node,
                    fmt(d.a_db),
                    fmt(d.b_db),
                    fmt(d.delta_db)
                ));
            }
        }
        out
    }
}

fn check_comparable(a: &RunRecord, b: &RunRecord) -> Result<(), CompareError> {
    if a.nodes != b.nodes {
        return Err(CompareError::Mismatch(format!(
            "node counts differ: {} vs {}",
            a.nodes, b.nodes
        )));
    }
    if a.scenario.controller.taps != b.scenario.controller.taps {
        return Err(CompareError::Mismatch(format!(
            "control filter lengths differ: {} vs {}",
            a.scenario.controller.taps, b.scenario.controller.taps
        )));
    }
    let scene_a = toml::to_string(&a.scenario.scene).unwrap_or_default();
    let scene_b = toml::to_string(&b.scenario.scene).unwrap_or_default();
    if scene_a != scene_b {
        return Err(CompareError::Mismatch(
            "runs used different acoustic scenes".into(),
        ));
    }
    Ok(())
}

fn weight_diffs(a: &ControlFilterSet, b: &ControlFilterSet) -> Result<Vec<NodeWeightDiff>, CompareError> {
    if a.nodes() != b.nodes() || a.len() != b.len() {
        return Err(CompareError::Mismatch(format!(
            "filter sets have shapes {}x{} vs {}x{}",
            a.nodes(),
            a.len(),
            b.nodes(),
            b.len()
        )));
    }
    Ok((0..a.nodes())
        .map(|node| {
            let wa = a.node(node);
            let wb = b.node(node);
            let mut diff_sq = 0.0;
            let mut a_sq = 0.0;
            let mut b_sq = 0.0;
            let mut max_abs = 0.0f64;
            for (x, y) in wa.iter().zip(wb) {
                diff_sq += (x - y) * (x - y);
                a_sq += x * x;
                b_sq += y * y;
                max_abs = max_abs.max((x - y).abs());
            }
            let denom = a_sq.max(b_sq).sqrt();
            let relative_l2 = if denom == 0.0 {
                0.0
            } else {
                diff_sq.sqrt() / denom
            };
            NodeWeightDiff {
                node,
                relative_l2,
                max_abs,
            }
        })
        .collect())
}

/// Compares two run directories.
pub fn compare_dirs(a_dir: &Path, b_dir: &Path, mode: CompareMode) -> Result<CompareReport, CompareError> {
    let a = load_record(a_dir)?;
    let b = load_record(b_dir)?;
    check_comparable(&a, &b)?;
    let mut report = CompareReport {
        mode: match mode {
            CompareMode::Weights => "weights".into(),
            CompareMode::NseCurves => "nse".into(),
        },
        a_algorithm: a.algorithm.clone(),
        b_algorithm: b.algorithm.clone(),
        a_diverged: a.diverged.clone(),
        b_diverged: b.diverged.clone(),
        weights: None,
        nse: None,
    };
    match mode {
        CompareMode::Weights => {
            let fa = pathfile::load_control(&a_dir.join(&a.filters_file))?;
            let fb = pathfile::load_control(&b_dir.join(&b.filters_file))?;
            report.weights = Some(weight_diffs(&fa, &fb)?);
        }
        CompareMode::NseCurves => {
            report.nse = Some(
                (0..a.nodes)
                    .map(|node| {
                        let a_db = a.terminal_nse_db[node];
                        let b_db = b.terminal_nse_db[node];
                        NodeNseDelta {
                            node,
                            a_db,
                            b_db,
                            delta_db: a_db.zip(b_db).map(|(x, y)| x - y),
                        }
                    })
                    .collect(),
            );
        }
    }
    Ok(report)
}

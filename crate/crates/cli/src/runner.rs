//! Executes one scenario end to end and writes its artifacts.
//!
//! A run directory contains:
//! - `scenario.toml` — the canonical form of the scenario that ran,
//! - `trace.csv` — `sample,node,nse_db,mu,delta` rows at the CSV stride,
//! - `filters.anc` — the final control filters,
//! - `run.json` — the [`RunRecord`] summary.
//!
//! Everything numeric is a pure function of the scenario (hash plus seeds);
//! only the wall-clock field varies between identical runs.

use crate::scenario::{Scenario, ScenarioError};
use anc_core::analysis::{nse_trace, AnalysisError};
use anc_core::pathfile::{self, PathFileError};
use anc_core::sim::{run_control_loop, SimError, SimTrace};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    PathFile(#[from] PathFileError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("cannot read record {path}: {message}")]
    Record { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const TRACE_FILE: &str = "trace.csv";
pub const FILTERS_FILE: &str = "filters.anc";
pub const RECORD_FILE: &str = "run.json";
pub const SCENARIO_FILE: &str = "scenario.toml";

/// Summary of one completed run, stored as `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    /// SHA-256 of the canonical scenario serialization.
    pub scenario_sha256: String,
    pub algorithm: String,
    pub nodes: usize,
    pub duration: usize,
    /// Sample index at which each node froze as diverged, if it did.
    pub diverged: Vec<Option<u64>>,
    /// Suppression over the final window per node; `None` for zero-length
    /// runs or silent disturbances.
    pub terminal_nse_db: Vec<Option<f64>>,
    pub wall_clock_seconds: f64,
    pub trace_csv: String,
    pub filters_file: String,
    /// The exact scenario that produced this record.
    pub scenario: Scenario,
}

impl RunRecord {
    pub fn any_diverged(&self) -> bool {
        self.diverged.iter().any(Option::is_some)
    }
}

/// Runs a scenario and writes all artifacts into `out_dir` (created if
/// missing). Divergence freezes nodes but never fails the run.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunRecord, RunnerError> {
    let resolved = scenario.resolve()?;
    let started = Instant::now();

    let mut controller = resolved.make_controller()?;
    let mut source = scenario.make_source()?;
    let trace = run_control_loop(
        &resolved.scene,
        controller.as_mut(),
        &mut source,
        scenario.duration,
    )?;

    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let scenario_path = out_dir.join(SCENARIO_FILE);
    std::fs::write(&scenario_path, scenario.canonical_toml()).map_err(io_err(&scenario_path))?;

    let nse = per_node_nse(&trace, scenario.nse_window)?;
    let csv_path = out_dir.join(TRACE_FILE);
    write_trace_csv(&csv_path, &trace, &nse, scenario.csv_stride)?;

    let filters_path = out_dir.join(FILTERS_FILE);
    pathfile::save_control(&filters_path, controller.filters())?;

    let record = RunRecord {
        scenario_sha256: scenario.sha256(),
        algorithm: scenario.controller.algorithm.name().to_string(),
        nodes: trace.nodes(),
        duration: scenario.duration,
        diverged: trace.diverged.clone(),
        terminal_nse_db: nse
            .iter()
            .map(|t| t.values.last().copied().flatten())
            .collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        trace_csv: TRACE_FILE.to_string(),
        filters_file: FILTERS_FILE.to_string(),
        scenario: scenario.clone(),
    };
    let record_path = out_dir.join(RECORD_FILE);
    let json = serde_json::to_string_pretty(&record).map_err(|e| RunnerError::Encode {
        path: record_path.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&record_path, json).map_err(io_err(&record_path))?;

    Ok(record)
}

/// Reads a run directory's record back.
pub fn load_record(dir: &Path) -> Result<RunRecord, RunnerError> {
    let path = dir.join(RECORD_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Record {
        path,
        message: e.to_string(),
    })
}

fn per_node_nse(
    trace: &SimTrace,
    window: usize,
) -> Result<Vec<anc_core::analysis::NseTrace>, AnalysisError> {
    (0..trace.nodes())
        .map(|node| nse_trace(&trace.e[node], &trace.d[node], window))
        .collect()
}

/// Writes the telemetry CSV: one row per (strided sample, node), columns
/// `sample,node,nse_db,mu,delta`. The suppression column is empty while the
/// window holds no disturbance power.
fn write_trace_csv(
    path: &Path,
    trace: &SimTrace,
    nse: &[anc_core::analysis::NseTrace],
    stride: usize,
) -> Result<(), RunnerError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| RunnerError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let encode = |e: csv::Error| RunnerError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    writer
        .write_record(["sample", "node", "nse_db", "mu", "delta"])
        .map_err(encode)?;
    for n in (0..trace.samples()).step_by(stride.max(1)) {
        for node in 0..trace.nodes() {
            let nse_field = match nse[node].values[n] {
                Some(db) => db.to_string(),
                None => String::new(),
            };
            writer
                .write_record([
                    n.to_string(),
                    node.to_string(),
                    nse_field,
                    trace.mu[node][n].to_string(),
                    trace.delta[node][n].to_string(),
                ])
                .map_err(encode)?;
        }
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{AlgorithmChoice, SceneSpec};

    fn tiny_scenario(algorithm: AlgorithmChoice) -> Scenario {
        let mut s = Scenario::desk_preset(algorithm);
        s.duration = 2_000;
        s.nse_window = 500;
        s.csv_stride = 50;
        s.scene = SceneSpec::Recipe {
            nodes: 2,
            path_len: 32,
            seed: None,
            primary_len: None,
            self_delay: None,
            cross_extra_delay: None,
            primary_delay: Some((8, 12)),
            decay: Some(0.3),
            cross_gain: None,
            exact_compensation: Some(4),
        };
        s.controller.taps = 32;
        s.controller.mu = 0.002;
        if let Some(comp) = &mut s.compensation {
            comp.len = 4;
        }
        s
    }

    #[test]
    fn test_run_writes_all_artifacts_and_record_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = tiny_scenario(AlgorithmChoice::MixedGradientAutoShrink);
        let record = run(&scenario, dir.path()).unwrap();
        assert_eq!(record.nodes, 2);
        assert_eq!(record.algorithm, "mixed-gradient-auto-shrink");
        assert!(!record.any_diverged());
        assert!(record.terminal_nse_db.iter().all(|v| v.is_some()));
        for file in [TRACE_FILE, FILTERS_FILE, RECORD_FILE, SCENARIO_FILE] {
            assert!(dir.path().join(file).exists(), "{file} missing");
        }
        let reloaded = load_record(dir.path()).unwrap();
        assert_eq!(reloaded.scenario_sha256, record.scenario_sha256);
        assert_eq!(reloaded.terminal_nse_db, record.terminal_nse_db);
    }

    #[test]
    fn test_rerun_is_bit_identical() {
        let scenario = tiny_scenario(AlgorithmChoice::MixedGradient);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run(&scenario, dir_a.path()).unwrap();
        run(&scenario, dir_b.path()).unwrap();
        let csv_a = std::fs::read(dir_a.path().join(TRACE_FILE)).unwrap();
        let csv_b = std::fs::read(dir_b.path().join(TRACE_FILE)).unwrap();
        assert_eq!(csv_a, csv_b, "identical scenarios must emit identical CSV bytes");
        let filt_a = std::fs::read(dir_a.path().join(FILTERS_FILE)).unwrap();
        let filt_b = std::fs::read(dir_b.path().join(FILTERS_FILE)).unwrap();
        assert_eq!(filt_a, filt_b);
    }

    #[test]
    fn test_different_seed_changes_the_trace() {
        let mut scenario = tiny_scenario(AlgorithmChoice::Decentralized);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run(&scenario, dir_a.path()).unwrap();
        scenario.seed += 1;
        run(&scenario, dir_b.path()).unwrap();
        let csv_a = std::fs::read(dir_a.path().join(TRACE_FILE)).unwrap();
        let csv_b = std::fs::read(dir_b.path().join(TRACE_FILE)).unwrap();
        assert_ne!(csv_a, csv_b);
    }

    #[test]
    fn test_zero_duration_run_yields_empty_but_valid_record() {
        let mut scenario = tiny_scenario(AlgorithmChoice::Centralized);
        scenario.duration = 0;
        let dir = tempfile::tempdir().unwrap();
        let record = run(&scenario, dir.path()).unwrap();
        assert_eq!(record.duration, 0);
        assert!(record.terminal_nse_db.iter().all(|v| v.is_none()));
        let csv = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1, "only the header should be present");
        load_record(dir.path()).unwrap();
    }

    #[test]
    fn test_csv_schema_and_stride() {
        let scenario = tiny_scenario(AlgorithmChoice::MixedGradientAutoShrink);
        let dir = tempfile::tempdir().unwrap();
        run(&scenario, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("sample,node,nse_db,mu,delta"));
        let rows: Vec<&str> = lines.collect();
        // 2000 samples at stride 50 = 40 sample points x 2 nodes.
        assert_eq!(rows.len(), 40 * 2);
        let first: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], "0");
        let second_block: Vec<&str> = rows[2].split(',').collect();
        assert_eq!(second_block[0], "50");
        // Step sizes are positive numbers, staleness a non-negative integer.
        for row in rows {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields.len(), 5);
            assert!(fields[3].parse::<f64>().unwrap() > 0.0);
            fields[4].parse::<u64>().unwrap();
        }
    }

    #[test]
    fn test_noise_suppression_actually_happens() {
        let mut scenario = tiny_scenario(AlgorithmChoice::MixedGradientAutoShrink);
        scenario.duration = 12_000;
        scenario.nse_window = 2_000;
        let dir = tempfile::tempdir().unwrap();
        let record = run(&scenario, dir.path()).unwrap();
        for (node, nse) in record.terminal_nse_db.iter().enumerate() {
            let db = nse.expect("terminal suppression must exist");
            assert!(db < -10.0, "node {node} reached only {db:.1} dB");
        }
    }
}

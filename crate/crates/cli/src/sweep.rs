//! Parameter sweeps: the same base scenario re-run across one axis.
//!
//! Each point runs in its own subdirectory (`<axis>-<value>/`) with the
//! axis substituted into the base scenario; a `summary.csv` aggregates the
//! steady-state suppression per point. Failing points are recorded and do
//! not abort their siblings.

use crate::runner::{run, RunRecord, RunnerError};
use crate::scenario::{DelaySpec, NetworkSpec, Scenario, ScenarioError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// The three sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Compensation filter length H.
    CompensationLen,
    /// Controller step size.
    Mu,
    /// Constant network delay in samples, applied to every link.
    Delay,
}

impl SweepAxis {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        match text {
            "h" => Ok(Self::CompensationLen),
            "mu" => Ok(Self::Mu),
            "delta" => Ok(Self::Delay),
            other => Err(SweepError::Invalid(format!(
                "unknown axis {other:?}; expected \"h\", \"mu\", or \"delta\""
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CompensationLen => "h",
            Self::Mu => "mu",
            Self::Delay => "delta",
        }
    }

    /// Substitutes one value into a copy of the base scenario.
    fn apply(self, base: &Scenario, value: f64) -> Result<Scenario, SweepError> {
        let mut scenario = base.clone();
        match self {
            Self::CompensationLen => {
                let len = value as usize;
                if len == 0 || (len as f64 - value).abs() > 0.0 {
                    return Err(SweepError::Invalid(format!(
                        "compensation length must be a positive integer, got {value}"
                    )));
                }
                let comp = scenario.compensation.as_mut().ok_or_else(|| {
                    SweepError::Invalid(
                        "sweeping h needs a [compensation] section in the base scenario".into(),
                    )
                })?;
                comp.len = len;
            }
            Self::Mu => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(SweepError::Invalid(format!(
                        "step size must be positive, got {value}"
                    )));
                }
                scenario.controller.mu = value;
            }
            Self::Delay => {
                let delay = value as u64;
                if (delay as f64 - value).abs() > 0.0 {
                    return Err(SweepError::Invalid(format!(
                        "delay must be a non-negative integer, got {value}"
                    )));
                }
                scenario.network = Some(NetworkSpec {
                    default: DelaySpec::Constant { delay },
                    links: Vec::new(),
                });
            }
        }
        Ok(scenario)
    }
}

/// One sweep point's outcome.
#[derive(Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub dir: PathBuf,
    /// The record on success, or the error text for an isolated failure.
    pub outcome: Result<RunRecord, String>,
}

/// Runs `values` along `axis`, each into `out_dir/<axis>-<value>/`.
/// `parallel` fans the points across threads; outputs are identical either
/// way because every run is internally deterministic.
pub fn sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    out_dir: &Path,
    parallel: bool,
) -> Result<Vec<SweepPoint>, SweepError> {
    std::fs::create_dir_all(out_dir).map_err(|source| SweepError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let jobs: Vec<(f64, PathBuf)> = values
        .iter()
        .map(|&v| (v, out_dir.join(format!("{}-{v}", axis.name()))))
        .collect();

    let run_point = |&(value, ref dir): &(f64, PathBuf)| -> SweepPoint {
        let outcome = axis
            .apply(base, value)
            .map_err(|e| e.to_string())
            .and_then(|scenario| run(&scenario, dir).map_err(|e| e.to_string()));
        SweepPoint {
            value,
            dir: dir.clone(),
            outcome,
        }
    };

    let points: Vec<SweepPoint> = if parallel {
        jobs.par_iter().map(run_point).collect()
    } else {
        jobs.iter().map(run_point).collect()
    };

    write_summary(&out_dir.join("summary.csv"), axis, &points)?;
    Ok(points)
}

/// `axis,value,node,terminal_nse_db,diverged_at,error` rows, one per node
/// per point (failed points produce a single row carrying the error).
fn write_summary(path: &Path, axis: SweepAxis, points: &[SweepPoint]) -> Result<(), SweepError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| SweepError::Invalid(e.to_string()))?;
    let encode = |e: csv::Error| SweepError::Invalid(e.to_string());
    writer
        .write_record(["axis", "value", "node", "terminal_nse_db", "diverged_at", "error"])
        .map_err(encode)?;
    for point in points {
        match &point.outcome {
            Ok(record) => {
                for node in 0..record.nodes {
                    writer
                        .write_record([
                            axis.name().to_string(),
                            point.value.to_string(),
                            node.to_string(),
                            record.terminal_nse_db[node]
                                .map(|db| db.to_string())
                                .unwrap_or_default(),
                            record.diverged[node]
                                .map(|s| s.to_string())
                                .unwrap_or_default(),
                            String::new(),
                        ])
                        .map_err(encode)?;
                }
            }
            Err(message) => {
                writer
                    .write_record([
                        axis.name().to_string(),
                        point.value.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        message.clone(),
                    ])
                    .map_err(encode)?;
            }
        }
    }
    writer.flush().map_err(|source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{AlgorithmChoice, CompensationSource, SceneSpec};

    fn tiny(algorithm: AlgorithmChoice) -> Scenario {
        let mut s = Scenario::desk_preset(algorithm);
        s.duration = 1_500;
        s.nse_window = 400;
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
    fn test_empty_value_list_yields_empty_collection() {
        let dir = tempfile::tempdir().unwrap();
        let points = sweep(
            &tiny(AlgorithmChoice::MixedGradient),
            SweepAxis::Mu,
            &[],
            dir.path(),
            false,
        )
        .unwrap();
        assert!(points.is_empty());
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1);
    }

    #[test]
    fn test_mu_sweep_produces_point_directories_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let points = sweep(
            &tiny(AlgorithmChoice::Decentralized),
            SweepAxis::Mu,
            &[0.001, 0.002],
            dir.path(),
            false,
        )
        .unwrap();
        assert_eq!(points.len(), 2);
        for point in &points {
            assert!(point.outcome.is_ok(), "{:?}", point.outcome);
            assert!(point.dir.join("run.json").exists());
        }
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2 * 2, "two points x two nodes");
        assert!(summary.starts_with("axis,value,node,terminal_nse_db,diverged_at,error"));
    }

    #[test]
    fn test_parallel_and_sequential_sweeps_match() {
        let base = tiny(AlgorithmChoice::MixedGradientAutoShrink);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        sweep(&base, SweepAxis::Delay, &[0.0, 8.0], dir_a.path(), false).unwrap();
        sweep(&base, SweepAxis::Delay, &[0.0, 8.0], dir_b.path(), true).unwrap();
        for name in ["delta-0", "delta-8"] {
            let a = std::fs::read(dir_a.path().join(name).join("trace.csv")).unwrap();
            let b = std::fs::read(dir_b.path().join(name).join("trace.csv")).unwrap();
            assert_eq!(a, b, "thread count must not affect {name}");
        }
    }

    #[test]
    fn test_failed_point_is_isolated() {
        let mut base = tiny(AlgorithmChoice::MixedGradient);
        // Truth-sourced compensation pins H; sweeping it to other lengths
        // must fail those points without sinking the matching one.
        if let Some(comp) = &mut base.compensation {
            comp.source = CompensationSource::Truth;
        }
        let dir = tempfile::tempdir().unwrap();
        let points = sweep(
            &base,
            SweepAxis::CompensationLen,
            &[4.0, 6.0],
            dir.path(),
            false,
        )
        .unwrap();
        assert!(points[0].outcome.is_ok(), "{:?}", points[0].outcome);
        assert!(points[1].outcome.is_err());
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.contains("declares length 6"));
    }

    #[test]
    fn test_h_sweep_with_training_varies_the_length() {
        let mut base = tiny(AlgorithmChoice::MixedGradient);
        if let Some(comp) = &mut base.compensation {
            comp.source = CompensationSource::Train {
                seed: None,
                mu: None,
                max_iterations: Some(20_000),
            };
        }
        let dir = tempfile::tempdir().unwrap();
        let points = sweep(
            &base,
            SweepAxis::CompensationLen,
            &[1.0, 4.0],
            dir.path(),
            false,
        )
        .unwrap();
        for point in &points {
            let record = point.outcome.as_ref().unwrap();
            assert_eq!(
                record.scenario.compensation.as_ref().unwrap().len,
                point.value as usize
            );
        }
    }

    #[test]
    fn test_axis_parsing_and_validation() {
        assert_eq!(SweepAxis::parse("h").unwrap(), SweepAxis::CompensationLen);
        assert_eq!(SweepAxis::parse("mu").unwrap(), SweepAxis::Mu);
        assert_eq!(SweepAxis::parse("delta").unwrap(), SweepAxis::Delay);
        assert!(SweepAxis::parse("taps").is_err());
        let base = tiny(AlgorithmChoice::MixedGradient);
        assert!(SweepAxis::CompensationLen.apply(&base, 2.5).is_err());
        assert!(SweepAxis::Mu.apply(&base, -1.0).is_err());
        assert!(SweepAxis::Delay.apply(&base, 0.5).is_err());
    }
}

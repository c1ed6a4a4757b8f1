//! `anc-sim`: run, sweep, compare, and analyze distributed active noise
//! control scenarios. Completed runs exit 0 even when nodes diverged (the
//! record carries the flags); invalid configurations and IO failures exit
//! nonzero before any simulation starts.

use anc_sim::analyze::analyze;
use anc_sim::compare::{compare_dirs, CompareMode};
use anc_sim::runner::run;
use anc_sim::scenario::{AlgorithmChoice, Scenario};
use anc_sim::sweep::{sweep, SweepAxis};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "anc-sim",
    about = "Deterministic simulator for distributed multichannel active noise control",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// How a scenario is obtained: from a config file, or from a built-in
/// preset (optionally with a different algorithm).
#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML). Mutually exclusive with --preset.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in scenario scale: "desk" (4 nodes, 128 taps, 8 kHz) or
    /// "paper" (6 nodes, 512 taps, 16 kHz).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Algorithm for preset scenarios (ignored with --config):
    /// centralized-mcfxlms, decentralized-fxlms, diffusion-dfxlms-atc,
    /// diffusion-dfxlms-cta, mixed-gradient-dfxlms,
    /// mixed-gradient-auto-shrink.
    #[arg(long, value_name = "NAME", default_value = "mixed-gradient-auto-shrink")]
    algorithm: String,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut scenario = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
            (Some(path), None) => {
                Scenario::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            (None, Some(preset)) => {
                let algorithm = AlgorithmChoice::parse(&self.algorithm)?;
                match preset.as_str() {
                    "desk" => Scenario::desk_preset(algorithm),
                    "paper" => Scenario::paper_preset(algorithm),
                    other => bail!("unknown preset {other:?}; expected \"desk\" or \"paper\""),
                }
            }
            (None, None) => bail!("one of --config or --preset is required"),
        };
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        Ok(scenario)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory (default: anc-runs/<scenario hash prefix>).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run a scenario across one parameter axis.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Swept parameter: "h" (compensation length), "mu" (step size),
        /// or "delta" (constant link delay in samples).
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. "1,5,17,33".
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Run points one at a time instead of across threads.
        #[arg(long)]
        sequential: bool,
    },
    /// Compare two finished run directories.
    Compare {
        /// "weights" (final filters) or "nse" (terminal suppression).
        #[arg(long, default_value = "weights")]
        mode: String,
        a: PathBuf,
        b: PathBuf,
        /// Also write the report as JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Report arithmetic cost, stability bounds, and the optimal-filter
    /// benchmark for a scenario without running it.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Gradient staleness (samples) assumed for the delayed bounds.
        #[arg(long, default_value_t = 0)]
        delay: u64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn default_out_dir(kind: &str, scenario: &Scenario) -> PathBuf {
    PathBuf::from("anc-runs").join(format!("{kind}-{}", &scenario.sha256()[..12]))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, out } => {
            let scenario = scenario.load()?;
            let out_dir = out.unwrap_or_else(|| default_out_dir("run", &scenario));
            let record = run(&scenario, &out_dir)?;
            println!(
                "run {} ({}) finished: {} samples, artifacts in {}",
                record.scenario_sha256,
                record.algorithm,
                record.duration,
                out_dir.display()
            );
            for (node, nse) in record.terminal_nse_db.iter().enumerate() {
                let nse = nse.map(|db| format!("{db:.2} dB")).unwrap_or_else(|| "n/a".into());
                match record.diverged[node] {
                    Some(sample) => {
                        println!("  node {node}: {nse} (DIVERGED at sample {sample})")
                    }
                    None => println!("  node {node}: {nse}"),
                }
            }
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            out,
            sequential,
        } => {
            let scenario = scenario.load()?;
            let axis = SweepAxis::parse(&axis)?;
            let out_dir = out.unwrap_or_else(|| default_out_dir("sweep", &scenario));
            let points = sweep(&scenario, axis, &values, &out_dir, !sequential)?;
            println!(
                "sweep over {} ({} points) finished, summary in {}",
                axis.name(),
                points.len(),
                out_dir.join("summary.csv").display()
            );
            for point in &points {
                match &point.outcome {
                    Ok(record) => {
                        let worst = record
                            .terminal_nse_db
                            .iter()
                            .flatten()
                            .cloned()
                            .fold(f64::NEG_INFINITY, f64::max);
                        let status = if record.any_diverged() {
                            "DIVERGED"
                        } else {
                            "converged"
                        };
                        println!(
                            "  {}={}: worst terminal {:.2} dB ({status})",
                            axis.name(),
                            point.value,
                            worst
                        );
                    }
                    Err(message) => {
                        println!("  {}={}: FAILED ({message})", axis.name(), point.value)
                    }
                }
            }
        }
        Command::Compare { mode, a, b, out } => {
            let mode = CompareMode::parse(&mode)?;
            let report = compare_dirs(&a, &b, mode)?;
            print!("{}", report.render());
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Analyze {
            scenario,
            delay,
            out,
        } => {
            let scenario = scenario.load()?;
            let out_dir = out.unwrap_or_else(|| default_out_dir("analysis", &scenario));
            let report = analyze(&scenario, delay, &out_dir)?;
            print!("{}", report.render());
            println!("written to {}", out_dir.join("analysis.json").display());
        }
    }
    Ok(())
}

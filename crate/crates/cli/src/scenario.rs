//! Scenario configuration: the serializable description of one experiment.
//!
//! A scenario file (TOML) maps one-to-one onto [`Scenario`]. Resolution
//! loads or synthesizes every referenced artifact up front — scene, noise
//! source, compensation filters, network schedules — so an invalid
//! configuration fails before a single sample is simulated.

use anc_core::compensation::{train_all, CompTrainConfig, CompensationBank};
use anc_core::controllers::{
    Controller, DecentralizedConfig, DecentralizedController, DiffusionConfig,
    DiffusionController, DiffusionStrategy, DiffusionTopology, McfxlmsConfig, McfxlmsController,
    MgdConfig, MgdController,
};
use anc_core::dsp::SignalSource;
use anc_core::netsim::{DelaySchedule, GradientBus};
use anc_core::pathfile;
use anc_core::scene::{synthesize_scene, AcousticScene, SceneRecipe};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Scene(#[from] anc_core::scene::SceneError),
    #[error(transparent)]
    Dsp(#[from] anc_core::dsp::DspError),
    #[error(transparent)]
    PathFile(#[from] anc_core::pathfile::PathFileError),
    #[error(transparent)]
    Compensation(#[from] anc_core::compensation::CompError),
    #[error(transparent)]
    Control(#[from] anc_core::controllers::ControlError),
    #[error(transparent)]
    Net(#[from] anc_core::netsim::NetError),
}

/// The six selectable control algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmChoice {
    #[serde(rename = "centralized-mcfxlms")]
    Centralized,
    #[serde(rename = "decentralized-fxlms")]
    Decentralized,
    #[serde(rename = "diffusion-dfxlms-atc")]
    DiffusionAtc,
    #[serde(rename = "diffusion-dfxlms-cta")]
    DiffusionCta,
    #[serde(rename = "mixed-gradient-dfxlms")]
    MixedGradient,
    #[serde(rename = "mixed-gradient-auto-shrink")]
    MixedGradientAutoShrink,
}

impl AlgorithmChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Centralized => "centralized-mcfxlms",
            Self::Decentralized => "decentralized-fxlms",
            Self::DiffusionAtc => "diffusion-dfxlms-atc",
            Self::DiffusionCta => "diffusion-dfxlms-cta",
            Self::MixedGradient => "mixed-gradient-dfxlms",
            Self::MixedGradientAutoShrink => "mixed-gradient-auto-shrink",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ScenarioError> {
        match name {
            "centralized-mcfxlms" => Ok(Self::Centralized),
            "decentralized-fxlms" => Ok(Self::Decentralized),
            "diffusion-dfxlms-atc" => Ok(Self::DiffusionAtc),
            "diffusion-dfxlms-cta" => Ok(Self::DiffusionCta),
            "mixed-gradient-dfxlms" => Ok(Self::MixedGradient),
            "mixed-gradient-auto-shrink" => Ok(Self::MixedGradientAutoShrink),
            other => Err(ScenarioError::Invalid(format!(
                "unknown algorithm {other:?}; expected one of centralized-mcfxlms, \
                 decentralized-fxlms, diffusion-dfxlms-atc, diffusion-dfxlms-cta, \
                 mixed-gradient-dfxlms, mixed-gradient-auto-shrink"
            ))),
        }
    }

    /// Whether the algorithm exchanges gradients and needs compensation
    /// filters plus a network section.
    pub fn uses_messages(self) -> bool {
        matches!(self, Self::MixedGradient | Self::MixedGradientAutoShrink)
    }

    /// The matching row of the arithmetic-cost model.
    pub fn cost_model(self) -> anc_core::analysis::Algorithm {
        use anc_core::analysis::Algorithm;
        match self {
            Self::Centralized => Algorithm::Centralized,
            Self::Decentralized => Algorithm::Decentralized,
            Self::DiffusionAtc | Self::DiffusionCta => Algorithm::Diffusion,
            Self::MixedGradient => Algorithm::MixedGradient,
            Self::MixedGradientAutoShrink => Algorithm::MixedGradientAutoShrink,
        }
    }
}

/// Where the acoustic plant comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneSpec {
    /// Synthesize from a seeded recipe.
    Recipe {
        nodes: usize,
        path_len: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        primary_len: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        self_delay: Option<(usize, usize)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cross_extra_delay: Option<(usize, usize)>,
        /// Primary-path delay range. Pick this at or above the self-delay
        /// range so the disturbance stays causally cancellable; omitted, it
        /// falls back to the self-delay range.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        primary_delay: Option<(usize, usize)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decay: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cross_gain: Option<f64>,
        /// Build cross paths as self paths convolved with random filters of
        /// this length, so an exact compensation bank exists.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exact_compensation: Option<usize>,
    },
    /// Load a saved path set.
    File { path: PathBuf },
}

/// The reference noise driving the plant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    /// Unit-variance white Gaussian noise.
    White,
    /// A pure tone.
    Sine { amplitude: f64, freq_hz: f64 },
    /// White noise shaped by a windowed-sinc band-pass filter.
    Bandpass {
        low_hz: f64,
        high_hz: f64,
        #[serde(default = "default_bandpass_taps")]
        taps: usize,
    },
    /// Playback of a recorded signal (16-bit mono WAV or raw
    /// little-endian f64 stream).
    File {
        path: PathBuf,
        #[serde(default = "default_true")]
        looped: bool,
    },
}

fn default_bandpass_taps() -> usize {
    127
}

fn default_true() -> bool {
    true
}

/// Adaptive-controller parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub algorithm: AlgorithmChoice,
    /// Control filter length N.
    pub taps: usize,
    /// Step size (the base step for the auto-shrink variant).
    pub mu: f64,
}

/// How the cross-path compensation filters are obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum CompensationSource {
    /// Identify them against the scene before the run.
    Train {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iterations: Option<u64>,
    },
    /// Use the filters the scene was constructed from (only available for
    /// exact-compensation recipes).
    Truth,
    /// Load a previously saved bank.
    File { path: PathBuf },
}

/// Compensation section: filter length plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompensationSpec {
    /// Compensation filter length H.
    pub len: usize,
    #[serde(flatten)]
    pub source: CompensationSource,
}

/// One link's delay behaviour, in samples, evaluated at the send stamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelaySpec {
    Constant { delay: u64 },
    /// Piecewise-constant `[start_sample, delay]` segments.
    Steps { segments: Vec<(u64, u64)> },
    /// `round((sin(2 pi rate_hz (origin+1) n / fs - pi/2) + 1) * amplitude)`:
    /// starts at zero, peaks at twice the amplitude, each sender at its own
    /// multiple of the base rate.
    Sinusoid { rate_hz: f64, amplitude: f64 },
}

impl DelaySpec {
    fn schedule(&self, origin: usize) -> Result<DelaySchedule, ScenarioError> {
        Ok(match self {
            Self::Constant { delay } => DelaySchedule::Constant(*delay),
            Self::Steps { segments } => DelaySchedule::steps(segments.clone())?,
            Self::Sinusoid { rate_hz, amplitude } => {
                DelaySchedule::sinusoid(*rate_hz, *amplitude, origin as u32 + 1)?
            }
        })
    }
}

/// One directed link override.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub delay: DelaySpec,
}

/// Message-network section: a default schedule for every ordered pair plus
/// optional per-link overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub default: DelaySpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkSpec>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            default: DelaySpec::Constant { delay: 0 },
            links: Vec::new(),
        }
    }
}

/// A complete experiment description. Everything numeric about a run is a
/// deterministic function of this struct.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Sample rate in Hz.
    pub fs: f64,
    /// Run length in samples.
    pub duration: usize,
    /// Master seed; noise, scene, and training seeds derive from it unless
    /// given explicitly.
    pub seed: u64,
    /// Trailing window (samples) for the suppression metric.
    #[serde(default = "default_nse_window")]
    pub nse_window: usize,
    /// Emit one CSV row block every this many samples.
    #[serde(default = "default_csv_stride")]
    pub csv_stride: usize,
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    pub controller: ControllerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compensation: Option<CompensationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
}

fn default_nse_window() -> usize {
    5000
}

fn default_csv_stride() -> usize {
    100
}

impl Scenario {
    /// Desk-scale preset: 4 nodes, 128 control taps, 64-tap paths, 16-tap
    /// compensation, 8 kHz. Small enough that every scenario variant
    /// finishes in seconds.
    pub fn desk_preset(algorithm: AlgorithmChoice) -> Self {
        Self {
            fs: 8000.0,
            duration: 200_000,
            seed: 7,
            nse_window: default_nse_window(),
            csv_stride: default_csv_stride(),
            scene: SceneSpec::Recipe {
                nodes: 4,
                path_len: 64,
                seed: None,
                primary_len: None,
                self_delay: None,
                cross_extra_delay: None,
                primary_delay: Some((8, 16)),
                decay: Some(0.3),
                cross_gain: None,
                exact_compensation: Some(16),
            },
            noise: NoiseSpec::White,
            controller: ControllerSpec {
                algorithm,
                taps: 128,
                mu: 5e-4,
            },
            compensation: algorithm.uses_messages().then(|| CompensationSpec {
                len: 16,
                source: CompensationSource::Truth,
            }),
            network: algorithm.uses_messages().then(NetworkSpec::default),
        }
    }

    /// Full-scale preset: 6 nodes, 512 control taps, 256-tap paths, 33-tap
    /// compensation, 16 kHz.
    pub fn paper_preset(algorithm: AlgorithmChoice) -> Self {
        Self {
            fs: 16_000.0,
            duration: 160_000,
            seed: 7,
            nse_window: default_nse_window(),
            csv_stride: default_csv_stride(),
            scene: SceneSpec::Recipe {
                nodes: 6,
                path_len: 256,
                seed: None,
                primary_len: None,
                self_delay: None,
                cross_extra_delay: None,
                primary_delay: Some((16, 32)),
                decay: Some(0.3),
                cross_gain: None,
                exact_compensation: Some(33),
            },
            noise: NoiseSpec::White,
            controller: ControllerSpec {
                algorithm,
                taps: 512,
                mu: 0.001,
            },
            compensation: algorithm.uses_messages().then(|| CompensationSpec {
                len: 33,
                source: CompensationSource::Truth,
            }),
            network: algorithm.uses_messages().then(NetworkSpec::default),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// Canonical serialized form; equal scenarios hash equally regardless
    /// of the formatting of the file they were read from.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("a validated scenario always serializes")
    }

    /// SHA-256 of the canonical form, in lowercase hex.
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    fn noise_seed(&self) -> u64 {
        self.seed
    }

    fn scene_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9E37_79B9_7F4A_7C15)
    }

    fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(2u64.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Builds the noise source. Callable any number of times; each call
    /// starts the source from scratch.
    pub fn make_source(&self) -> Result<SignalSource, ScenarioError> {
        Ok(match &self.noise {
            NoiseSpec::White => SignalSource::white(self.noise_seed()),
            NoiseSpec::Sine { amplitude, freq_hz } => {
                SignalSource::sine(*amplitude, *freq_hz, self.fs)?
            }
            NoiseSpec::Bandpass { low_hz, high_hz, taps } => SignalSource::bandpass_noise(
                self.noise_seed(),
                *low_hz,
                *high_hz,
                self.fs,
                *taps,
            )?,
            NoiseSpec::File { path, looped } => SignalSource::from_file(path, *looped)?,
        })
    }

    /// Validates the configuration and loads every referenced artifact.
    pub fn resolve(&self) -> Result<ResolvedScenario, ScenarioError> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "sample rate must be positive, got {}",
                self.fs
            )));
        }
        if self.csv_stride == 0 {
            return Err(ScenarioError::Invalid("csv stride must be positive".into()));
        }
        if self.nse_window == 0 {
            return Err(ScenarioError::Invalid("nse window must be positive".into()));
        }
        if self.controller.taps == 0 {
            return Err(ScenarioError::Invalid("controller taps must be positive".into()));
        }

        let (scene, truth_bank) = self.build_scene()?;
        let nodes = scene.nodes();

        // A resolvable noise source now proves the file (if any) is valid;
        // runs rebuild their own copy.
        self.make_source()?;

        let bank = if self.controller.algorithm.uses_messages() {
            Some(self.build_bank(&scene, truth_bank.as_ref())?)
        } else {
            if matches!(
                self.compensation.as_ref().map(|c| &c.source),
                Some(CompensationSource::File { .. })
            ) {
                // A file reference on an algorithm that ignores it is almost
                // certainly a mistake; check it anyway so typos surface.
                if let Some(CompensationSpec {
                    source: CompensationSource::File { path },
                    ..
                }) = &self.compensation
                {
                    pathfile::load_compensation(path)?;
                }
            }
            None
        };

        if let Some(net) = &self.network {
            for link in &net.links {
                if link.from >= nodes || link.to >= nodes || link.from == link.to {
                    return Err(ScenarioError::Invalid(format!(
                        "link {} -> {} is not a valid ordered pair of the {} nodes",
                        link.from, link.to, nodes
                    )));
                }
            }
        }

        Ok(ResolvedScenario {
            scenario: self.clone(),
            scene,
            bank,
        })
    }

    fn build_scene(&self) -> Result<(AcousticScene, Option<CompensationBank>), ScenarioError> {
        match &self.scene {
            SceneSpec::Recipe {
                nodes,
                path_len,
                seed,
                primary_len,
                self_delay,
                cross_extra_delay,
                primary_delay,
                decay,
                cross_gain,
                exact_compensation,
            } => {
                let mut recipe =
                    SceneRecipe::new(seed.unwrap_or_else(|| self.scene_seed()), *nodes, *path_len);
                recipe.primary_len = *primary_len;
                if let Some(d) = self_delay {
                    recipe.self_delay = *d;
                }
                if let Some(d) = cross_extra_delay {
                    recipe.cross_extra_delay = *d;
                }
                recipe.primary_delay = *primary_delay;
                if let Some(d) = decay {
                    recipe.decay = *d;
                }
                if let Some(g) = cross_gain {
                    recipe.cross_gain = *g;
                }
                recipe.exact_compensation = *exact_compensation;
                let synth = synthesize_scene(&recipe)?;
                Ok((synth.scene, synth.true_compensation))
            }
            SceneSpec::File { path } => Ok((pathfile::load_scene(path)?, None)),
        }
    }

    fn build_bank(
        &self,
        scene: &AcousticScene,
        truth: Option<&CompensationBank>,
    ) -> Result<CompensationBank, ScenarioError> {
        let spec = self.compensation.as_ref().ok_or_else(|| {
            ScenarioError::Invalid(format!(
                "algorithm {} needs a [compensation] section",
                self.controller.algorithm.name()
            ))
        })?;
        if spec.len == 0 {
            return Err(ScenarioError::Invalid(
                "compensation length must be positive".into(),
            ));
        }
        let bank = match &spec.source {
            CompensationSource::Train {
                seed,
                mu,
                max_iterations,
            } => {
                let mut cfg = CompTrainConfig::new(seed.unwrap_or_else(|| self.train_seed()), spec.len);
                cfg.mu = *mu;
                if let Some(iters) = max_iterations {
                    cfg.max_iterations = *iters;
                }
                train_all(scene, &cfg)?
            }
            CompensationSource::Truth => truth
                .ok_or_else(|| {
                    ScenarioError::Invalid(
                        "compensation source \"truth\" needs a recipe scene with latent \
                         exact-compensation filters"
                            .into(),
                    )
                })?
                .clone(),
            CompensationSource::File { path } => pathfile::load_compensation(path)?,
        };
        if bank.nodes() != scene.nodes() {
            return Err(ScenarioError::Invalid(format!(
                "compensation bank is for {} nodes, scene has {}",
                bank.nodes(),
                scene.nodes()
            )));
        }
        if matches!(spec.source, CompensationSource::Truth | CompensationSource::File { .. })
            && bank.len() != spec.len
        {
            return Err(ScenarioError::Invalid(format!(
                "compensation section declares length {}, loaded bank has {}",
                spec.len,
                bank.len()
            )));
        }
        Ok(bank)
    }
}

/// A validated scenario with every artifact materialized.
#[derive(Debug)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub scene: AcousticScene,
    /// Compensation filters, present exactly for message-passing algorithms.
    pub bank: Option<CompensationBank>,
}

impl ResolvedScenario {
    pub fn nodes(&self) -> usize {
        self.scene.nodes()
    }

    fn build_bus(&self) -> Result<GradientBus, ScenarioError> {
        let nodes = self.scene.nodes();
        let net = self.scenario.network.clone().unwrap_or_default();
        let mut bus = GradientBus::disconnected(nodes, self.scenario.fs);
        for from in 0..nodes {
            for to in 0..nodes {
                if from != to {
                    bus.set_link(from, to, Some(net.default.schedule(from)?))?;
                }
            }
        }
        for link in &net.links {
            bus.set_link(link.from, link.to, Some(link.delay.schedule(link.from)?))?;
        }
        Ok(bus)
    }

    /// Builds a fresh controller in its initial state.
    pub fn make_controller(&self) -> Result<Box<dyn Controller>, ScenarioError> {
        let c = &self.scenario.controller;
        Ok(match c.algorithm {
            AlgorithmChoice::Centralized => Box::new(McfxlmsController::new(
                &self.scene,
                &McfxlmsConfig::new(c.taps, c.mu),
            )?),
            AlgorithmChoice::Decentralized => Box::new(DecentralizedController::new(
                &self.scene,
                &DecentralizedConfig::new(c.taps, c.mu),
            )?),
            AlgorithmChoice::DiffusionAtc => Box::new(DiffusionController::new(
                &self.scene,
                DiffusionTopology::uniform(self.scene.nodes())?,
                &DiffusionConfig::new(c.taps, c.mu, DiffusionStrategy::AdaptThenCombine),
            )?),
            AlgorithmChoice::DiffusionCta => Box::new(DiffusionController::new(
                &self.scene,
                DiffusionTopology::uniform(self.scene.nodes())?,
                &DiffusionConfig::new(c.taps, c.mu, DiffusionStrategy::CombineThenAdapt),
            )?),
            AlgorithmChoice::MixedGradient | AlgorithmChoice::MixedGradientAutoShrink => {
                let bank = self
                    .bank
                    .clone()
                    .expect("resolution materializes a bank for message-passing algorithms");
                let bus = self.build_bus()?;
                let cfg = if c.algorithm == AlgorithmChoice::MixedGradientAutoShrink {
                    MgdConfig::adaptive(c.taps, c.mu, self.scenario.fs)
                } else {
                    MgdConfig::new(c.taps, c.mu, self.scenario.fs)
                };
                Box::new(MgdController::new(&self.scene, bank, bus, &cfg)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(algorithm: AlgorithmChoice) -> Scenario {
        let mut s = Scenario::desk_preset(algorithm);
        // Keep unit tests quick; the full duration is exercised elsewhere.
        s.duration = 500;
        s
    }

    #[test]
    fn test_toml_round_trip_preserves_hash() {
        let s = desk(AlgorithmChoice::MixedGradientAutoShrink);
        let text = s.canonical_toml();
        let back = Scenario::from_toml_str(&text, Path::new("inline")).unwrap();
        assert_eq!(s.sha256(), back.sha256());
        assert_eq!(text, back.canonical_toml());
    }

    #[test]
    fn test_hash_tracks_every_field_change() {
        let base = desk(AlgorithmChoice::MixedGradient);
        let mut mu = base.clone();
        mu.controller.mu *= 2.0;
        let mut seed = base.clone();
        seed.seed += 1;
        let mut net = base.clone();
        net.network = Some(NetworkSpec {
            default: DelaySpec::Constant { delay: 3 },
            links: Vec::new(),
        });
        let hashes = [base.sha256(), mu.sha256(), seed.sha256(), net.sha256()];
        for i in 0..hashes.len() {
            for j in i + 1..hashes.len() {
                assert_ne!(hashes[i], hashes[j], "fields {i} and {j} collided");
            }
        }
    }

    #[test]
    fn test_resolution_materializes_truth_bank_only_for_message_algorithms() {
        let resolved = desk(AlgorithmChoice::MixedGradient).resolve().unwrap();
        assert!(resolved.bank.is_some());
        assert_eq!(resolved.nodes(), 4);
        let plain = desk(AlgorithmChoice::Centralized).resolve().unwrap();
        assert!(plain.bank.is_none());
    }

    #[test]
    fn test_missing_compensation_section_fails_fast() {
        let mut s = desk(AlgorithmChoice::MixedGradient);
        s.compensation = None;
        let err = s.resolve().unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)), "got {err:?}");
    }

    #[test]
    fn test_truth_source_requires_exact_compensation_recipe() {
        let mut s = desk(AlgorithmChoice::MixedGradient);
        if let SceneSpec::Recipe {
            exact_compensation, ..
        } = &mut s.scene
        {
            *exact_compensation = None;
        }
        let err = s.resolve().unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)), "got {err:?}");
    }

    #[test]
    fn test_missing_noise_file_fails_before_running() {
        let mut s = desk(AlgorithmChoice::Centralized);
        s.noise = NoiseSpec::File {
            path: PathBuf::from("/nonexistent/recording.wav"),
            looped: true,
        };
        assert!(s.resolve().is_err());
    }

    #[test]
    fn test_out_of_range_link_is_rejected() {
        let mut s = desk(AlgorithmChoice::MixedGradient);
        s.network = Some(NetworkSpec {
            default: DelaySpec::Constant { delay: 0 },
            links: vec![LinkSpec {
                from: 0,
                to: 9,
                delay: DelaySpec::Constant { delay: 1 },
            }],
        });
        let err = s.resolve().unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid(_)));
    }

    #[test]
    fn test_algorithm_names_round_trip() {
        for name in [
            "centralized-mcfxlms",
            "decentralized-fxlms",
            "diffusion-dfxlms-atc",
            "diffusion-dfxlms-cta",
            "mixed-gradient-dfxlms",
            "mixed-gradient-auto-shrink",
        ] {
            assert_eq!(AlgorithmChoice::parse(name).unwrap().name(), name);
        }
        assert!(AlgorithmChoice::parse("gradient-descent").is_err());
    }

    #[test]
    fn test_scenario_file_parsing_accepts_documented_schema() {
        let text = r#"
            fs = 8000.0
            duration = 1000
            seed = 3

            [scene]
            kind = "recipe"
            nodes = 2
            path_len = 32
            primary_delay = [8, 12]
            exact_compensation = 4

            [noise]
            kind = "bandpass"
            low_hz = 100.0
            high_hz = 1000.0

            [controller]
            algorithm = "mixed-gradient-auto-shrink"
            taps = 32
            mu = 0.001

            [compensation]
            len = 4
            source = "truth"

            [network]
            default = { kind = "steps", segments = [[0, 2000], [500, 4000]] }

            [[network.links]]
            from = 0
            to = 1
            kind = "sinusoid"
            rate_hz = 0.1
            amplitude = 2000.0
        "#;
        let s = Scenario::from_toml_str(text, Path::new("inline")).unwrap();
        let resolved = s.resolve().unwrap();
        assert_eq!(resolved.nodes(), 2);
        resolved.make_controller().unwrap();
    }
}

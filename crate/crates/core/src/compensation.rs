//! Offline training of compensation filters.
//!
//! For every ordered pair of nodes, the filter `c_mk` is shaped so that
//! passing a signal through node m's own secondary path `s_mm` and then
//! through `c_mk` reproduces the cross path `s_mk`. Nodes later use these
//! filters to translate a peer's local gradient into the cross-path
//! gradient they cannot observe directly.
//!
//! Training is plain filtered-reference LMS driven by seeded white noise:
//! the plant is excited through the true paths, the adaptive filter chases
//! the cross-path response, and the reference is filtered through the
//! *estimate* of the self path, exactly as an on-device identification
//! run would be wired.

use crate::dsp::{DelayLine, DspError, TapVector};
use crate::scene::AcousticScene;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompError {
    #[error("pair ({mic},{spk}) training diverged at iteration {iteration}")]
    TrainingDiverged {
        mic: usize,
        spk: usize,
        iteration: u64,
    },
    #[error("pair ({mic},{spk}) is a self pair; only cross pairs are trained")]
    SelfPair { mic: usize, spk: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// The full grid of compensation filters for a K-node system. Diagonal
/// entries are fixed unit impulses (a node needs no translation of its own
/// gradient); off-diagonal entries start as zeros until set.
#[derive(Debug, Clone)]
pub struct CompensationBank {
    filters: Vec<Vec<TapVector>>, // [mic][spk]
    len: usize,
}

impl CompensationBank {
    pub fn new(nodes: usize, len: usize) -> Result<Self, CompError> {
        if nodes == 0 || len == 0 {
            return Err(CompError::Dimension(
                "bank needs at least one node and one tap".into(),
            ));
        }
        let delta = TapVector::delta(len, 0).map_err(CompError::Dsp)?;
        let zero = TapVector::new(vec![0.0; len]).map_err(CompError::Dsp)?;
        let filters = (0..nodes)
            .map(|m| {
                (0..nodes)
                    .map(|k| if m == k { delta.clone() } else { zero.clone() })
                    .collect()
            })
            .collect();
        Ok(Self { filters, len })
    }

    pub fn nodes(&self) -> usize {
        self.filters.len()
    }

    /// Tap count of every filter in the bank.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The filter that maps node `spk`'s self-path response onto the cross
    /// path from speaker `spk` to microphone `mic`.
    pub fn get(&self, mic: usize, spk: usize) -> &TapVector {
        &self.filters[mic][spk]
    }

    pub fn set(&mut self, mic: usize, spk: usize, taps: TapVector) -> Result<(), CompError> {
        if mic == spk {
            return Err(CompError::SelfPair { mic, spk });
        }
        if mic >= self.nodes() || spk >= self.nodes() {
            return Err(CompError::Dimension(format!(
                "pair ({mic},{spk}) outside {}-node bank",
                self.nodes()
            )));
        }
        if taps.len() != self.len {
            return Err(CompError::Dimension(format!(
                "filter for pair ({mic},{spk}) has {} taps, bank holds {}",
                taps.len(),
                self.len
            )));
        }
        self.filters[mic][spk] = taps;
        Ok(())
    }
}

/// Training knobs. `mu` defaults to an eighth of the stable bound of the
/// identification loop, derived from the self-path estimate's regressor
/// correlation and the self path's group delay.
#[derive(Debug, Clone)]
pub struct CompTrainConfig {
    pub seed: u64,
    /// Compensation filter length H.
    pub len: usize,
    /// Adaptation step; `None` selects the normalized default.
    pub mu: Option<f64>,
    /// Hard cap on training iterations per pair.
    pub max_iterations: u64,
    /// Relative weight-change threshold that ends training early.
    pub tolerance: f64,
    /// Window (in samples) over which the weight change is measured.
    pub tolerance_window: u64,
}

impl CompTrainConfig {
    pub fn new(seed: u64, len: usize) -> Self {
        Self {
            seed,
            len,
            mu: None,
            max_iterations: 200_000,
            tolerance: 1e-8,
            tolerance_window: 1000,
        }
    }

    fn validate(&self) -> Result<(), CompError> {
        if self.len == 0 {
            return Err(CompError::Config("filter length must be at least one".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(CompError::Config(format!("step size must be positive, got {mu}")));
            }
        }
        if self.tolerance_window == 0 {
            return Err(CompError::Config("tolerance window must be nonzero".into()));
        }
        Ok(())
    }
}

/// One trained filter plus its training diagnostics.
#[derive(Debug, Clone)]
pub struct TrainedCompensation {
    pub taps: TapVector,
    pub iterations: u64,
    /// Mean squared matching error over the final window.
    pub error_power: f64,
    /// Whether the tolerance stop fired before the iteration budget ran out.
    pub converged: bool,
}

/// Trains the single filter `c_mk` for microphone `mic` and speaker `spk`.
pub fn train_compensation(
    scene: &AcousticScene,
    mic: usize,
    spk: usize,
    cfg: &CompTrainConfig,
) -> Result<TrainedCompensation, CompError> {
    cfg.validate()?;
    if mic == spk {
        return Err(CompError::SelfPair { mic, spk });
    }
    if mic >= scene.nodes() || spk >= scene.nodes() {
        return Err(CompError::Dimension(format!(
            "pair ({mic},{spk}) outside {}-node scene",
            scene.nodes()
        )));
    }
    let h = cfg.len;
    let l = scene.path_len();
    let s_mm = scene.secondary(mic, mic);
    let s_mk = scene.secondary(mic, spk);
    let s_mm_hat = scene.estimate(mic, mic);

    // Default step: an eighth of the stable bound of this identification
    // loop. The regressor is unit white noise through the self-path
    // estimate, so its correlation matrix comes straight from the
    // estimate's taps; the true self path then delays every update's
    // effect on the error, which shrinks the stable range like any
    // delayed-update LMS, by sin(pi / (2 (2D + 1))) with D the path's
    // energy-centroid delay. The delay model treats the path as a pure
    // lag, and a filter shorter than the true cross path leaves a
    // residual that acts as gradient noise; an eighth of the bound
    // leaves room for both.
    let mu = cfg.mu.unwrap_or_else(|| {
        let r = crate::analysis::correlation_block(s_mm_hat.as_slice(), s_mm_hat.as_slice(), h);
        let lambda_max = r
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::MIN_POSITIVE, |a, &v| a.max(v));
        let energy: f64 = s_mm.as_slice().iter().map(|s| s * s).sum();
        let centroid: f64 = s_mm
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, s)| i as f64 * s * s)
            .sum::<f64>()
            / energy.max(f64::MIN_POSITIVE);
        let shrink = crate::analysis::delay_shrink_factor(centroid.round() as u64);
        0.125 * (2.0 / lambda_max) * shrink
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut c = vec![0.0; h];
    let mut v_line = DelayLine::new(l.max(h)).map_err(CompError::Dsp)?; // raw excitation
    let mut u_line = DelayLine::new(l).map_err(CompError::Dsp)?; // filter output history
    let mut fx_line = DelayLine::new(h).map_err(CompError::Dsp)?; // filtered excitation

    let window = cfg.tolerance_window;
    let mut c_at_window_start = c.clone();
    let mut window_error_power = 0.0;
    let mut first_window_power: Option<f64> = None;
    let mut last_window_power = f64::INFINITY;
    let mut iterations = 0u64;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        let v: f64 = rng.sample(StandardNormal);
        v_line.push(v).map_err(CompError::Dsp)?;

        // Reference filtered through the self-path estimate.
        fx_line
            .push(v_line.dot(s_mm_hat.as_slice()))
            .map_err(CompError::Dsp)?;

        // Plant responses: the excitation through the true cross path is
        // the target; the adaptive filter drives the true self path.
        let desired = v_line.dot(s_mk.as_slice());
        let u: f64 = c.iter().enumerate().map(|(j, cj)| cj * v_line.read(j)).sum();
        u_line.push(u).map_err(CompError::Dsp)?;
        let modeled = u_line.dot(s_mm.as_slice());
        let err = desired - modeled;

        for (j, cj) in c.iter_mut().enumerate() {
            *cj += mu * fx_line.read(j) * err;
        }

        window_error_power += err * err;
        iterations += 1;

        if iterations % window == 0 {
            let power = window_error_power / window as f64;
            window_error_power = 0.0;
            let baseline = *first_window_power.get_or_insert(power);
            if power > baseline * 100.0 && power > last_window_power {
                return Err(CompError::TrainingDiverged {
                    mic,
                    spk,
                    iteration: iterations,
                });
            }
            last_window_power = power;

            let mut delta_sq = 0.0;
            let mut norm_sq = 0.0;
            for (now, before) in c.iter().zip(&c_at_window_start) {
                delta_sq += (now - before) * (now - before);
                norm_sq += now * now;
            }
            c_at_window_start.copy_from_slice(&c);
            if delta_sq.sqrt() <= cfg.tolerance * norm_sq.sqrt().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }

        if c.iter().any(|cj| !cj.is_finite()) {
            return Err(CompError::TrainingDiverged {
                mic,
                spk,
                iteration: iterations,
            });
        }
    }

    Ok(TrainedCompensation {
        taps: TapVector::new(c).map_err(CompError::Dsp)?,
        iterations,
        error_power: last_window_power,
        converged,
    })
}

/// Trains every cross pair of the scene into a bank. Pairs are independent
/// and run in parallel; each derives its own noise seed from `cfg.seed` and
/// its pair index, so the result is identical at any thread count.
pub fn train_all(scene: &AcousticScene, cfg: &CompTrainConfig) -> Result<CompensationBank, CompError> {
    cfg.validate()?;
    let k = scene.nodes();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|m| (0..k).filter_map(move |s| (m != s).then_some((m, s))))
        .collect();
    let trained: Vec<(usize, usize, TrainedCompensation)> = pairs
        .par_iter()
        .map(|&(mic, spk)| {
            let mut pair_cfg = cfg.clone();
            pair_cfg.seed = cfg
                .seed
                .wrapping_add(((mic * k + spk) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            train_compensation(scene, mic, spk, &pair_cfg).map(|t| (mic, spk, t))
        })
        .collect::<Result<_, _>>()?;
    let mut bank = CompensationBank::new(k, cfg.len)?;
    for (mic, spk, t) in trained {
        bank.set(mic, spk, t.taps)?;
    }
    Ok(bank)
}

//! Acoustic plant model: one noise source feeding K error microphones
//! through primary paths, and K control loudspeakers feeding every
//! microphone through a K x K grid of secondary paths.
//!
//! Index convention: `secondary[m][k]` is the path from loudspeaker `k`
//! to microphone `m`. Microphone `m` hears
//! `e_m(n) = d_m(n) - sum_k (y_k * s_mk)(n)`.

use crate::compensation::CompensationBank;
use crate::dsp::{DelayLine, DspError, TapVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error("geometry violation: {0}")]
    Geometry(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// A complete plant: primary paths, true secondary paths, and the secondary
/// path estimates the controllers are allowed to see.
#[derive(Debug, Clone)]
pub struct AcousticScene {
    primary: Vec<TapVector>,          // per microphone
    secondary: Vec<Vec<TapVector>>,   // [mic][speaker]
    estimates: Vec<Vec<TapVector>>,   // [mic][speaker]
}

impl AcousticScene {
    /// Builds a scene from explicit paths, checking dimensions and the
    /// geometry rule that each speaker reaches its own microphone no later
    /// than any other microphone.
    pub fn new(
        primary: Vec<TapVector>,
        secondary: Vec<Vec<TapVector>>,
        estimates: Vec<Vec<TapVector>>,
    ) -> Result<Self, SceneError> {
        let k = primary.len();
        if k == 0 {
            return Err(SceneError::Dimension("scene needs at least one node".into()));
        }
        for (name, grid) in [("secondary", &secondary), ("estimate", &estimates)] {
            if grid.len() != k || grid.iter().any(|row| row.len() != k) {
                return Err(SceneError::Dimension(format!(
                    "{name} path grid must be {k}x{k}"
                )));
            }
        }
        let l = secondary[0][0].len();
        let pl = primary[0].len();
        if primary.iter().any(|p| p.len() != pl) {
            return Err(SceneError::Dimension("primary paths differ in length".into()));
        }
        for grid in [&secondary, &estimates] {
            for row in grid.iter() {
                if row.iter().any(|s| s.len() != l) {
                    return Err(SceneError::Dimension(
                        "secondary paths and estimates must share one length".into(),
                    ));
                }
            }
        }
        for spk in 0..k {
            let own = secondary[spk][spk]
                .leading_delay()
                .ok_or_else(|| SceneError::Geometry(format!("self path {spk} has no energy")))?;
            for mic in 0..k {
                if mic == spk {
                    continue;
                }
                if let Some(cross) = secondary[mic][spk].leading_delay() {
                    if cross < own {
                        return Err(SceneError::Geometry(format!(
                            "speaker {spk} reaches microphone {mic} after {cross} samples, \
                             sooner than its own microphone ({own} samples)"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            primary,
            secondary,
            estimates,
        })
    }

    pub fn nodes(&self) -> usize {
        self.primary.len()
    }

    pub fn path_len(&self) -> usize {
        self.secondary[0][0].len()
    }

    pub fn primary_len(&self) -> usize {
        self.primary[0].len()
    }

    pub fn primary(&self, mic: usize) -> &TapVector {
        &self.primary[mic]
    }

    /// True path from speaker `spk` to microphone `mic`.
    pub fn secondary(&self, mic: usize, spk: usize) -> &TapVector {
        &self.secondary[mic][spk]
    }

    /// The controller-visible estimate of `secondary(mic, spk)`.
    pub fn estimate(&self, mic: usize, spk: usize) -> &TapVector {
        &self.estimates[mic][spk]
    }

    /// Shortest propagation delay over every true secondary path.
    pub fn min_secondary_delay(&self) -> usize {
        self.secondary
            .iter()
            .flatten()
            .filter_map(|s| s.leading_delay())
            .min()
            .unwrap_or(0)
    }

    /// Replaces each estimate with the true path plus Gaussian error of
    /// standard deviation `sigma` relative to the path's RMS tap level.
    pub fn perturb_estimates(&mut self, sigma: f64, seed: u64) -> Result<(), SceneError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(SceneError::Recipe(format!(
                "perturbation sigma must be finite and non-negative, got {sigma}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.nodes();
        let l = self.path_len();
        for mic in 0..k {
            for spk in 0..k {
                let true_taps = self.secondary[mic][spk].as_slice();
                let rms = self.secondary[mic][spk].energy_norm() / (l as f64).sqrt();
                let taps: Vec<f64> = true_taps
                    .iter()
                    .map(|&t| t + sigma * rms * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                self.estimates[mic][spk] = TapVector::new(taps)?;
            }
        }
        Ok(())
    }
}

/// Parameters for synthesizing a random scene. All randomness comes from
/// `seed`, so equal recipes produce bit-identical scenes.
#[derive(Debug, Clone)]
pub struct SceneRecipe {
    pub seed: u64,
    pub nodes: usize,
    /// Secondary path length L.
    pub path_len: usize,
    /// Primary path length; defaults to `path_len`.
    pub primary_len: Option<usize>,
    /// Inclusive range of self-path propagation delays, in samples.
    pub self_delay: (usize, usize),
    /// Inclusive range of extra delay a cross path adds on top of the
    /// larger of the two self delays it connects.
    pub cross_extra_delay: (usize, usize),
    /// Inclusive range of primary-path propagation delays. `None` draws
    /// from the self-delay range; choosing a range at or above the largest
    /// self delay guarantees the disturbance is causally reachable, so the
    /// optimal control filters can cancel deeply.
    pub primary_delay: Option<(usize, usize)>,
    /// Exponential decay rate of the random tail, per sample.
    pub decay: f64,
    /// Energy of cross paths relative to the unit-energy self paths.
    pub cross_gain: f64,
    /// When set to `Some(h)`, cross paths are built as
    /// `s_mk = s_mm * c_mk` for random length-`h` filters `c_mk`, and the
    /// true `c_mk` are returned so tests can verify recovery.
    pub exact_compensation: Option<usize>,
}

impl SceneRecipe {
    /// A small, strongly-coupled default: useful starting point for tests.
    pub fn new(seed: u64, nodes: usize, path_len: usize) -> Self {
        Self {
            seed,
            nodes,
            path_len,
            primary_len: None,
            self_delay: (1, 4),
            cross_extra_delay: (0, 4),
            primary_delay: None,
            decay: 0.1,
            cross_gain: 0.5,
            exact_compensation: None,
        }
    }
}

/// A synthesized scene plus, for exact-compensation recipes, the filters
/// that generated the cross paths.
#[derive(Debug, Clone)]
pub struct SynthesizedScene {
    pub scene: AcousticScene,
    pub true_compensation: Option<CompensationBank>,
}

fn decaying_taps(
    rng: &mut ChaCha8Rng,
    len: usize,
    delay: usize,
    tail_len: usize,
    decay: f64,
) -> Vec<f64> {
    let mut taps = vec![0.0; len];
    for j in 0..tail_len {
        let g: f64 = rng.sample(StandardNormal);
        taps[delay + j] = g * (-decay * j as f64).exp();
    }
    taps
}

fn normalized(mut taps: Vec<f64>, energy: f64) -> Result<TapVector, SceneError> {
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(SceneError::Recipe("generated path has zero energy".into()));
    }
    for t in &mut taps {
        *t *= energy / norm;
    }
    Ok(TapVector::new(taps)?)
}

/// Full convolution of two tap sets, truncated to `len` samples.
pub fn convolve_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            let idx = i + j;
            if idx < len {
                out[idx] += ai * bj;
            }
        }
    }
    out
}

/// Generates a random scene from a recipe. Estimates start as exact copies
/// of the true paths; call [`AcousticScene::perturb_estimates`] to model
/// identification error.
pub fn synthesize_scene(recipe: &SceneRecipe) -> Result<SynthesizedScene, SceneError> {
    let k = recipe.nodes;
    let l = recipe.path_len;
    let pl = recipe.primary_len.unwrap_or(l);
    if k == 0 {
        return Err(SceneError::Recipe("node count must be at least one".into()));
    }
    if l == 0 || pl == 0 {
        return Err(SceneError::Recipe("path lengths must be at least one".into()));
    }
    let (dmin, dmax) = recipe.self_delay;
    // Without an explicit primary range, primaries reuse the self range and
    // must fit the primary length too.
    let self_limit = if recipe.primary_delay.is_some() { l } else { l.min(pl) };
    if dmin > dmax || dmax >= self_limit {
        return Err(SceneError::Recipe(format!(
            "self delay range {dmin}..={dmax} does not fit in path length {self_limit}"
        )));
    }
    let (pmin, pmax) = recipe.primary_delay.unwrap_or(recipe.self_delay);
    if pmin > pmax || pmax >= pl {
        return Err(SceneError::Recipe(format!(
            "primary delay range {pmin}..={pmax} does not fit in primary length {pl}"
        )));
    }
    let (xmin, xmax) = recipe.cross_extra_delay;
    if xmin > xmax {
        return Err(SceneError::Recipe(format!(
            "cross extra delay range {xmin}..={xmax} is inverted"
        )));
    }
    if !(recipe.decay.is_finite() && recipe.decay >= 0.0) {
        return Err(SceneError::Recipe(format!(
            "decay must be finite and non-negative, got {}",
            recipe.decay
        )));
    }
    if !(recipe.cross_gain.is_finite() && recipe.cross_gain > 0.0) {
        return Err(SceneError::Recipe(format!(
            "cross gain must be positive, got {}",
            recipe.cross_gain
        )));
    }
    if let Some(h) = recipe.exact_compensation {
        if h == 0 {
            return Err(SceneError::Recipe(
                "exact compensation length must be at least one".into(),
            ));
        }
        // The self tail plus the compensation filter must fit inside L so
        // that s_mm * c_mk is representable without truncation error.
        if dmax + h > l {
            return Err(SceneError::Recipe(format!(
                "self delay up to {dmax} plus compensation length {h} exceeds path length {l}"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);

    // Self delays. Exact-compensation scenes share one delay so the derived
    // cross paths cannot undercut another speaker's self delay.
    let self_delays: Vec<usize> = if recipe.exact_compensation.is_some() {
        vec![rng.gen_range(dmin..=dmax); k]
    } else {
        (0..k).map(|_| rng.gen_range(dmin..=dmax)).collect()
    };

    // Unit-energy self paths.
    let mut secondary: Vec<Vec<Option<TapVector>>> = vec![vec![None; k]; k];
    for spk in 0..k {
        let delay = self_delays[spk];
        let tail = match recipe.exact_compensation {
            Some(h) => l - delay - (h - 1),
            None => l - delay,
        };
        let taps = decaying_taps(&mut rng, l, delay, tail, recipe.decay);
        secondary[spk][spk] = Some(normalized(taps, 1.0)?);
    }

    // Cross paths, walked in (mic, speaker) row-major order.
    let mut truth: Option<CompensationBank> = recipe
        .exact_compensation
        .map(|h| CompensationBank::new(k, h))
        .transpose()
        .map_err(|e| SceneError::Recipe(e.to_string()))?;
    for mic in 0..k {
        for spk in 0..k {
            if mic == spk {
                continue;
            }
            match recipe.exact_compensation {
                Some(h) => {
                    let c_taps: Vec<f64> =
                        (0..h).map(|_| rng.sample(StandardNormal)).collect();
                    let c = normalized(c_taps, recipe.cross_gain)?;
                    let s_mm = secondary[mic][mic].as_ref().unwrap();
                    let cross = convolve_truncated(s_mm.as_slice(), c.as_slice(), l);
                    secondary[mic][spk] = Some(TapVector::new(cross)?);
                    truth
                        .as_mut()
                        .unwrap()
                        .set(mic, spk, c)
                        .map_err(|e| SceneError::Recipe(e.to_string()))?;
                }
                None => {
                    let base = self_delays[spk].max(self_delays[mic]);
                    let extra = rng.gen_range(xmin..=xmax);
                    let delay = (base + extra).min(l - 1);
                    let taps = decaying_taps(&mut rng, l, delay, l - delay, recipe.decay);
                    secondary[mic][spk] = Some(normalized(taps, recipe.cross_gain)?);
                }
            }
        }
    }
    let secondary: Vec<Vec<TapVector>> = secondary
        .into_iter()
        .map(|row| row.into_iter().map(Option::unwrap).collect())
        .collect();

    // Unit-energy primary paths so the raw disturbance power at each
    // microphone is one for a unit-variance white reference.
    let primary: Vec<TapVector> = (0..k)
        .map(|_| {
            let delay = rng.gen_range(pmin..=pmax);
            let taps = decaying_taps(&mut rng, pl, delay, pl - delay, recipe.decay);
            normalized(taps, 1.0)
        })
        .collect::<Result<_, _>>()?;

    let estimates = secondary.clone();
    let scene = AcousticScene::new(primary, secondary, estimates)?;
    Ok(SynthesizedScene {
        scene,
        true_compensation: truth,
    })
}

/// Rebuilds a scene so its primary paths are `p_m = sum_k s_mk * target_k`.
/// The returned scene keeps the original secondary paths and estimates, and
/// the disturbance becomes exactly cancellable by driving each speaker with
/// `target_k` applied to the reference: convergence tests get a plant whose
/// optimal control filters are known in closed form.
pub fn retarget_primaries(
    scene: &AcousticScene,
    targets: &[Vec<f64>],
) -> Result<AcousticScene, SceneError> {
    let k = scene.nodes();
    if targets.len() != k {
        return Err(SceneError::Dimension(format!(
            "{} target filters for a {k}-node scene",
            targets.len()
        )));
    }
    let t_len = targets[0].len();
    if t_len == 0 || targets.iter().any(|t| t.len() != t_len) {
        return Err(SceneError::Dimension(
            "target filters must share one positive length".into(),
        ));
    }
    let p_len = scene.path_len() + t_len - 1;
    let mut primary = Vec::with_capacity(k);
    for mic in 0..k {
        let mut taps = vec![0.0; p_len];
        for spk in 0..k {
            let contribution =
                convolve_truncated(scene.secondary(mic, spk).as_slice(), &targets[spk], p_len);
            for (t, c) in taps.iter_mut().zip(&contribution) {
                *t += c;
            }
        }
        primary.push(TapVector::new(taps)?);
    }
    let secondary: Vec<Vec<TapVector>> = (0..k)
        .map(|m| (0..k).map(|s| scene.secondary(m, s).clone()).collect())
        .collect();
    let estimates: Vec<Vec<TapVector>> = (0..k)
        .map(|m| (0..k).map(|s| scene.estimate(m, s).clone()).collect())
        .collect();
    AcousticScene::new(primary, secondary, estimates)
}

/// Per-sample plant response.
#[derive(Debug, Clone)]
pub struct PlantOutput {
    /// Disturbance at each microphone.
    pub d: Vec<f64>,
    /// Residual error at each microphone.
    pub e: Vec<f64>,
    /// Anti-noise each microphone receives from its own speaker.
    pub anti_self: Vec<f64>,
    /// Anti-noise each microphone receives from all other speakers.
    pub interference: Vec<f64>,
}

/// Rolling state of the plant: the reference history and one output history
/// per loudspeaker.
#[derive(Debug, Clone)]
pub struct PlantState {
    x_line: DelayLine,
    y_lines: Vec<DelayLine>,
}

impl PlantState {
    pub fn new(scene: &AcousticScene) -> Result<Self, SceneError> {
        Ok(Self {
            x_line: DelayLine::new(scene.primary_len())?,
            y_lines: (0..scene.nodes())
                .map(|_| DelayLine::new(scene.path_len()))
                .collect::<Result<_, _>>()?,
        })
    }

    fn respond(&self, scene: &AcousticScene) -> PlantOutput {
        let k = scene.nodes();
        let mut d = vec![0.0; k];
        let mut e = vec![0.0; k];
        let mut anti_self = vec![0.0; k];
        let mut interference = vec![0.0; k];
        for mic in 0..k {
            d[mic] = self.x_line.dot(scene.primary(mic).as_slice());
            let own = self.y_lines[mic].dot(scene.secondary(mic, mic).as_slice());
            let mut cross = 0.0;
            for spk in 0..k {
                if spk != mic {
                    cross += self.y_lines[spk].dot(scene.secondary(mic, spk).as_slice());
                }
            }
            anti_self[mic] = own;
            interference[mic] = cross;
            e[mic] = d[mic] - own - cross;
        }
        PlantOutput {
            d,
            e,
            anti_self,
            interference,
        }
    }

    /// Advances the plant one sample with reference `x_n` and speaker
    /// outputs `y`, returning the microphone signals for this sample.
    pub fn propagate(
        &mut self,
        scene: &AcousticScene,
        x_n: f64,
        y: &[f64],
    ) -> Result<PlantOutput, SceneError> {
        if y.len() != scene.nodes() {
            return Err(SceneError::Dimension(format!(
                "expected {} speaker outputs, got {}",
                scene.nodes(),
                y.len()
            )));
        }
        self.x_line.push(x_n)?;
        for (line, &yk) in self.y_lines.iter_mut().zip(y) {
            line.push(yk)?;
        }
        Ok(self.respond(scene))
    }

    /// First half of a split step: advances the reference and reads the
    /// microphones before this sample's speaker outputs exist (they enter
    /// the lines as zeros until [`PlantState::emit`] overwrites them).
    /// Equivalent to [`PlantState::propagate`] whenever every secondary
    /// path has at least one sample of propagation delay, and models a
    /// microphone that cannot hear the current output otherwise.
    pub fn measure(&mut self, scene: &AcousticScene, x_n: f64) -> Result<PlantOutput, SceneError> {
        self.x_line.push(x_n)?;
        for line in &mut self.y_lines {
            line.push(0.0)?;
        }
        Ok(self.respond(scene))
    }

    /// Second half of a split step: records the speaker outputs for the
    /// current sample so future samples hear them.
    pub fn emit(&mut self, y: &[f64]) -> Result<(), SceneError> {
        if y.len() != self.y_lines.len() {
            return Err(SceneError::Dimension(format!(
                "expected {} speaker outputs, got {}",
                self.y_lines.len(),
                y.len()
            )));
        }
        for (line, &yk) in self.y_lines.iter_mut().zip(y) {
            if !yk.is_finite() {
                return Err(SceneError::Dsp(DspError::NonFinite { value: yk }));
            }
            line.set_latest(yk);
        }
        Ok(())
    }
}

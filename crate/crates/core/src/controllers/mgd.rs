//! Distributed gradient-sharing filtered-reference LMS with delayed-message
//! compensation and an optional staleness-adaptive step size.
//!
//! Each node adapts its own filter from its own microphone, exactly like
//! the decentralized controller, and additionally broadcasts its raw local
//! gradient every sample. Received peer gradients — which arrive late and
//! out of order over the simulated network — are kept in short per-peer
//! stamp-indexed rings; each update folds the latest available message per
//! peer into the local weights through that peer's fixed compensation
//! filter (a tap-axis correlation, see [`accumulate_compensated`]),
//! reconstructing the cross-coupling terms a centralized controller would
//! have computed from the full estimate grid.
//!
//! The update applied at the start of a tick uses only information that
//! existed strictly before the current sample: the node's own most recent
//! gradient (one sample old) and whatever peer gradients the network has
//! delivered. With zero network delay and exact compensation this tracks
//! the centralized trajectory; with delay, stale messages keep being
//! applied as-is while the optional adaptive step size shrinks
//! exponentially with the worst observed staleness to hold the loop inside
//! its shrinking stability region.

use super::{
    weights_sane, ControlError, ControlFilterSet, Controller, GradientMessage, NodeStatus,
    DIVERGENCE_CEILING,
};
use crate::compensation::CompensationBank;
use crate::dsp::{DelayLine, TapVector};
use crate::netsim::GradientBus;
use crate::scene::AcousticScene;
use std::collections::VecDeque;

/// Step size after scaling for message staleness: `mu0 * exp(-2 delta / fs)`
/// where `delta` is the worst known peer staleness in samples.
pub fn asss_mu(mu0: f64, delta_samples: u64, fs: f64) -> f64 {
    mu0 * (-2.0 * delta_samples as f64 / fs).exp()
}

/// A node's local gradient for one sample: the filtered-reference history
/// scaled by the current error, `grad[i] = e * x'(n - i)`.
pub fn local_gradient(filtered: &DelayLine, e: f64, taps: usize) -> Vec<f64> {
    let mut g = vec![0.0; taps];
    if e != 0.0 {
        filtered.accumulate_scaled(e, &mut g);
    }
    g
}

/// Short history of one peer's gradients, indexed backwards from the newest
/// stamp ever received. Slot `h` holds the gradient stamped `latest - h`;
/// stamps the network never delivered (or delivered and then superseded by
/// a jump of more than the depth) read as zero vectors.
#[derive(Debug, Clone)]
pub struct GradientRing {
    depth: usize,
    latest: Option<u64>,
    slots: VecDeque<Option<Vec<f64>>>,
}

impl GradientRing {
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1, "gradient ring needs at least one slot");
        Self {
            depth,
            latest: None,
            slots: std::iter::repeat_with(|| None).take(depth).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Stamp of the newest gradient ever inserted.
    pub fn latest_stamp(&self) -> Option<u64> {
        self.latest
    }

    /// Inserts a delivered gradient. A newer stamp shifts the ring so the
    /// new message becomes slot zero (opening zero-filled gaps for stamps
    /// that have not arrived); an older stamp backfills its slot if it is
    /// still within the depth and is dropped otherwise.
    pub fn insert(&mut self, stamp: u64, grad: Vec<f64>) {
        match self.latest {
            None => {
                self.latest = Some(stamp);
                self.slots[0] = Some(grad);
            }
            Some(latest) if stamp > latest => {
                let shift = (stamp - latest).min(self.depth as u64) as usize;
                for _ in 0..shift {
                    self.slots.pop_back();
                    self.slots.push_front(None);
                }
                self.latest = Some(stamp);
                self.slots[0] = Some(grad);
            }
            Some(latest) => {
                let lag = (latest - stamp) as usize;
                if lag < self.depth {
                    self.slots[lag] = Some(grad);
                }
            }
        }
    }

    /// Reads slot `h` (the gradient stamped `latest - h`), if present.
    pub fn slot(&self, h: usize) -> Option<&[f64]> {
        self.slots.get(h).and_then(|s| s.as_deref())
    }

    /// The most recent gradient received, the one every update combines.
    pub fn latest_grad(&self) -> Option<&[f64]> {
        self.slot(0)
    }
}

/// Adds the compensated cross gradient into `acc`:
/// `acc[i] += scale * sum_h comp[h] * grad[i + h]`.
///
/// A peer's gradient entry `grad[j]` is its error times its filtered
/// reference `j` samples back. The cross path is the peer's self path
/// convolved with the compensation filter, so the cross gradient at tap `i`
/// needs the peer's reference `i + h` samples back for each compensation
/// tap `h` — a correlation reaching into the deeper entries of the same
/// message, every term scaled by the one error sample the message carries.
/// Entries past the end of the message are unavailable and contribute
/// nothing, which truncates the last `comp.len() - 1` taps.
pub fn accumulate_compensated(comp: &[f64], grad: &[f64], scale: f64, acc: &mut [f64]) {
    if scale == 0.0 {
        return;
    }
    for (h, &c) in comp.iter().enumerate() {
        if c == 0.0 || h >= grad.len() {
            continue;
        }
        let factor = scale * c;
        for (a, g) in acc.iter_mut().zip(&grad[h..]) {
            *a += factor * g;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MgdConfig {
    /// Adaptive filter length per node.
    pub taps: usize,
    /// Base step size.
    pub mu: f64,
    /// Scale the step size down exponentially with observed staleness.
    pub adaptive_mu: bool,
    /// Sample rate, used by the staleness scaling.
    pub fs: f64,
    /// Weight magnitude that freezes a node as diverged.
    pub divergence_ceiling: f64,
}

impl MgdConfig {
    pub fn new(taps: usize, mu: f64, fs: f64) -> Self {
        Self {
            taps,
            mu,
            adaptive_mu: false,
            fs,
            divergence_ceiling: DIVERGENCE_CEILING,
        }
    }

    pub fn adaptive(taps: usize, mu: f64, fs: f64) -> Self {
        Self {
            adaptive_mu: true,
            ..Self::new(taps, mu, fs)
        }
    }

    fn validate(&self) -> Result<(), ControlError> {
        if self.taps == 0 {
            return Err(ControlError::Config("filter length must be positive".into()));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(ControlError::Config(format!(
                "step size must be positive and finite, got {}",
                self.mu
            )));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(ControlError::Config(format!(
                "sample rate must be positive, got {}",
                self.fs
            )));
        }
        if !(self.divergence_ceiling.is_finite() && self.divergence_ceiling > 0.0) {
            return Err(ControlError::Config(
                "divergence ceiling must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

struct NodeState {
    filtered: DelayLine,
    /// The node's own gradient from the previous sample, applied at the
    /// start of the next tick (it is one sample old at use time, the same
    /// staleness a zero-delay network gives peer gradients).
    own_grad: Option<Vec<f64>>,
    rings: Vec<GradientRing>, // indexed by origin node; the self slot stays empty
    diverged: Option<u64>,
    current_mu: f64,
    current_delta: u64,
}

pub struct MgdController {
    mu0: f64,
    adaptive_mu: bool,
    fs: f64,
    ceiling: f64,
    filters: ControlFilterSet,
    self_estimates: Vec<TapVector>,
    bank: CompensationBank,
    bus: GradientBus,
    x_line: DelayLine,
    nodes: Vec<NodeState>,
    rollback: Vec<f64>,
    sample: u64,
}

impl MgdController {
    /// Builds the controller over a scene's self-path estimates, a trained
    /// compensation bank, and a message bus carrying gradients between
    /// nodes. The ring depth equals the compensation filter length.
    pub fn new(
        scene: &AcousticScene,
        bank: CompensationBank,
        bus: GradientBus,
        cfg: &MgdConfig,
    ) -> Result<Self, ControlError> {
        cfg.validate()?;
        let k = scene.nodes();
        if bank.nodes() != k {
            return Err(ControlError::Dimension(format!(
                "{}-node compensation bank for a {k}-node scene",
                bank.nodes()
            )));
        }
        if bus.nodes() != k {
            return Err(ControlError::Dimension(format!(
                "{}-node bus for a {k}-node scene",
                bus.nodes()
            )));
        }
        let depth = bank.len();
        let nodes = (0..k)
            .map(|_| {
                Ok(NodeState {
                    filtered: DelayLine::new(cfg.taps)?,
                    own_grad: None,
                    rings: (0..k).map(|_| GradientRing::new(depth)).collect(),
                    diverged: None,
                    current_mu: cfg.mu,
                    current_delta: 0,
                })
            })
            .collect::<Result<Vec<_>, ControlError>>()?;
        Ok(Self {
            mu0: cfg.mu,
            adaptive_mu: cfg.adaptive_mu,
            fs: cfg.fs,
            ceiling: cfg.divergence_ceiling,
            filters: ControlFilterSet::zeros(k, cfg.taps),
            self_estimates: (0..k).map(|n| scene.estimate(n, n).clone()).collect(),
            bank,
            bus,
            x_line: DelayLine::new(cfg.taps.max(scene.path_len()))?,
            nodes,
            rollback: vec![0.0; cfg.taps],
            sample: 0,
        })
    }

    /// The step size node `k` used in its most recent update.
    pub fn node_mu(&self, k: usize) -> f64 {
        self.nodes[k].current_mu
    }

    /// The worst peer staleness node `k` observed at its most recent tick.
    pub fn node_delta(&self, k: usize) -> u64 {
        self.nodes[k].current_delta
    }
}

impl Controller for MgdController {
    fn nodes(&self) -> usize {
        self.filters.nodes()
    }

    fn tick(&mut self, x: f64, errors: &[f64]) -> Result<Vec<f64>, ControlError> {
        let k = self.nodes();
        if errors.len() != k {
            return Err(ControlError::Dimension(format!(
                "{} errors for a {k}-node controller",
                errors.len()
            )));
        }
        let n = self.sample;
        self.sample += 1;

        // 1. Collect deliveries and measure staleness.
        for node in 0..k {
            let view = self.bus.view(node, n)?;
            let state = &mut self.nodes[node];
            for peer in &view.peers {
                for msg in &peer.newly_delivered {
                    state.rings[msg.origin].insert(msg.stamp, msg.grad.clone());
                }
            }
            let delta = view.max_known_delta().unwrap_or(0);
            state.current_delta = delta;
            state.current_mu = if self.adaptive_mu {
                asss_mu(self.mu0, delta, self.fs)
            } else {
                self.mu0
            };
        }

        // 2. Weight update from strictly-past information: the node's own
        //    previous gradient plus compensated peer rings.
        for node in 0..k {
            let state = &self.nodes[node];
            if state.diverged.is_some() {
                continue;
            }
            let mu = state.current_mu;
            self.rollback.copy_from_slice(self.filters.node(node));
            let w = self.filters.node_mut(node);
            if let Some(own) = &state.own_grad {
                for (wi, g) in w.iter_mut().zip(own) {
                    *wi += mu * g;
                }
            }
            for peer in 0..k {
                if peer == node {
                    continue;
                }
                if let Some(grad) = state.rings[peer].latest_grad() {
                    let comp = self.bank.get(peer, node);
                    accumulate_compensated(comp.as_slice(), grad, mu, w);
                }
            }
            if !weights_sane(self.filters.node(node), self.ceiling) {
                self.filters.node_mut(node).copy_from_slice(&self.rollback);
                self.nodes[node].diverged = Some(n);
            }
        }

        // 3. Signal path: outputs and filtered-reference histories.
        self.x_line.push(x)?;
        let y: Vec<f64> = (0..k).map(|node| self.x_line.dot(self.filters.node(node))).collect();
        for node in 0..k {
            let v = self.x_line.dot(self.self_estimates[node].as_slice());
            self.nodes[node].filtered.push(v)?;
        }

        // 4. New local gradients: stored for the next tick and broadcast.
        //    Frozen nodes fall silent so peers stop averaging their noise in.
        for node in 0..k {
            let taps = self.filters.len();
            let e = errors[node];
            if self.nodes[node].diverged.is_some() {
                self.nodes[node].own_grad = None;
                continue;
            }
            if !e.is_finite() {
                self.nodes[node].diverged = Some(n);
                self.nodes[node].own_grad = None;
                continue;
            }
            let grad = local_gradient(&self.nodes[node].filtered, e, taps);
            self.bus.broadcast(GradientMessage {
                origin: node,
                stamp: n,
                grad: grad.clone(),
            })?;
            self.nodes[node].own_grad = Some(grad);
        }
        Ok(y)
    }

    fn filters(&self) -> &ControlFilterSet {
        &self.filters
    }

    fn status(&self, k: usize) -> NodeStatus {
        NodeStatus {
            mu: self.nodes[k].current_mu,
            delta: self.nodes[k].current_delta,
            diverged_at: self.nodes[k].diverged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::decentralized::{DecentralizedConfig, DecentralizedController};
    use crate::controllers::mcfxlms::{McfxlmsConfig, McfxlmsController};
    use crate::dsp::SignalSource;
    use crate::netsim::{DelaySchedule, GradientBus};
    use crate::scene::{retarget_primaries, synthesize_scene, PlantState, SceneRecipe};
    use rand::SeedableRng;

    fn closed_loop(
        scene: &AcousticScene,
        controller: &mut dyn Controller,
        seed: u64,
        samples: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut plant = PlantState::new(scene).unwrap();
        let mut source = SignalSource::white(seed);
        let k = scene.nodes();
        let mut d = vec![Vec::with_capacity(samples); k];
        let mut e = vec![Vec::with_capacity(samples); k];
        for _ in 0..samples {
            let x = source.next_sample().unwrap();
            let out = plant.measure(scene, x).unwrap();
            let y = controller.tick(x, &out.e).unwrap();
            plant.emit(&y).unwrap();
            for m in 0..k {
                d[m].push(out.d[m]);
                e[m].push(out.e[m]);
            }
        }
        (d, e)
    }

    fn tail_db(d: &[f64], e: &[f64], window: usize) -> f64 {
        let start = d.len() - window;
        let dp: f64 = d[start..].iter().map(|v| v * v).sum();
        let ep: f64 = e[start..].iter().map(|v| v * v).sum();
        10.0 * (ep / dp).log10()
    }

    #[test]
    fn test_asss_mu_is_exact_exponential() {
        let fs = 8000.0;
        assert_eq!(asss_mu(0.1, 0, fs), 0.1);
        assert_eq!(asss_mu(0.1, 2000, fs), 0.1 * (-0.5f64).exp());
        assert_eq!(asss_mu(0.25, 8000, fs), 0.25 * (-2.0f64).exp());
        assert!(asss_mu(0.1, 1, fs) < 0.1);
    }

    #[test]
    fn test_gradient_ring_shift_backfill_and_gaps() {
        let mut ring = GradientRing::new(4);
        assert_eq!(ring.latest_stamp(), None);
        ring.insert(10, vec![1.0]);
        assert_eq!(ring.latest_stamp(), Some(10));
        assert_eq!(ring.slot(0), Some(&[1.0][..]));

        // A newer stamp with a gap shifts the ring and leaves a hole.
        ring.insert(12, vec![3.0]);
        assert_eq!(ring.slot(0), Some(&[3.0][..]));
        assert_eq!(ring.slot(1), None, "stamp 11 never arrived");
        assert_eq!(ring.slot(2), Some(&[1.0][..]));

        // A late arrival backfills its slot.
        ring.insert(11, vec![2.0]);
        assert_eq!(ring.slot(1), Some(&[2.0][..]));

        // Too-old stamps are dropped.
        ring.insert(5, vec![9.0]);
        assert!(ring.slot(3).is_none());
        assert_eq!(ring.latest_stamp(), Some(12));

        // A jump past the depth clears everything older.
        ring.insert(100, vec![7.0]);
        assert_eq!(ring.slot(0), Some(&[7.0][..]));
        for h in 1..4 {
            assert_eq!(ring.slot(h), None, "slot {h} should have been cleared");
        }
    }

    /// The compensated cross gradient correlates the filter against the
    /// deeper taps of one message: `acc[i] += scale * sum_h c[h] g[i+h]`,
    /// with entries past the end of the message contributing nothing.
    #[test]
    fn test_compensated_accumulation_reaches_into_deeper_taps() {
        let grad = vec![1.0, 10.0, 100.0, 1000.0];
        let mut acc = vec![0.0; 4];
        accumulate_compensated(&[2.0, 3.0], &grad, 0.5, &mut acc);
        // acc[i] = 0.5 * (2 g[i] + 3 g[i+1]); g[4] does not exist.
        assert_eq!(acc, vec![16.0, 160.0, 1600.0, 1000.0]);

        // A pure one-sample compensation delay shifts the gradient.
        let mut shifted = vec![0.0; 4];
        accumulate_compensated(&[0.0, 1.0], &grad, 1.0, &mut shifted);
        assert_eq!(shifted, vec![10.0, 100.0, 1000.0, 0.0]);

        // Zero scale and over-long filters are no-ops past the data.
        let mut untouched = vec![7.0; 4];
        accumulate_compensated(&[5.0; 8], &grad, 0.0, &mut untouched);
        assert_eq!(untouched, vec![7.0; 4]);
    }

    /// The correlation of the compensation filter with a peer's gradient
    /// message rebuilds the gradient the centralized algorithm computes
    /// through the cross path, exactly, for every tap the message covers.
    #[test]
    fn test_compensated_gradient_matches_cross_path_oracle() {
        let l = 12;
        let h = 3;
        let taps = 8;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let s_mm: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
        let comp: Vec<f64> = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        let s_mk = crate::scene::convolve_truncated(&s_mm, &comp, l + h - 1);
        let e_m = 0.7;

        // Long reference record; histories are exact at time t.
        let record: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
        let filt_at = |path: &[f64], t: usize| -> f64 {
            path.iter()
                .enumerate()
                .map(|(j, &p)| if t >= j { p * record[t - j] } else { 0.0 })
                .sum()
        };
        let t = 150;
        let message: Vec<f64> = (0..taps).map(|i| e_m * filt_at(&s_mm, t - i)).collect();
        let mut combined = vec![0.0; taps];
        accumulate_compensated(&comp, &message, 1.0, &mut combined);
        for i in 0..taps {
            let oracle = e_m * filt_at(&s_mk, t - i);
            if i + h - 1 < taps {
                assert!(
                    (combined[i] - oracle).abs() < 1e-12,
                    "tap {i}: combined {} vs oracle {oracle}",
                    combined[i]
                );
            } else {
                // Tail taps lose exactly the terms past the message depth.
                let missing: f64 = (0..h)
                    .filter(|&j| i + j >= taps)
                    .map(|j| e_m * comp[j] * filt_at(&s_mm, t - i - j))
                    .sum();
                assert!(
                    (combined[i] - (oracle - missing)).abs() < 1e-12,
                    "tap {i}: combined {} vs truncated oracle {}",
                    combined[i],
                    oracle - missing
                );
            }
        }
    }

    /// With single-tap compensation, scalar-coupled cross paths, and an
    /// instant network, the distributed update telescopes into exactly the
    /// centralized one: trajectories agree to fine tolerance, with the
    /// distributed filters trailing the centralized ones by one sample.
    #[test]
    fn test_zero_delay_single_tap_compensation_matches_centralized() {
        let mut recipe = SceneRecipe::new(401, 2, 20);
        recipe.exact_compensation = Some(1);
        let synth = synthesize_scene(&recipe).unwrap();
        let scene = retarget_primaries(
            &synth.scene,
            &[vec![0.5, -0.2, 0.1, 0.05], vec![-0.3, 0.25, 0.0, 0.1]],
        )
        .unwrap();
        let bank = synth.true_compensation.unwrap();
        let mu = 0.003;
        let taps = 24;
        let bus = GradientBus::fully_connected(2, 8000.0, DelaySchedule::Constant(0));
        let mut mgd =
            MgdController::new(&scene, bank, bus, &MgdConfig::new(taps, mu, 8000.0)).unwrap();
        let mut cen = McfxlmsController::new(&scene, &McfxlmsConfig::new(taps, mu)).unwrap();

        let mut plant_a = PlantState::new(&scene).unwrap();
        let mut plant_b = PlantState::new(&scene).unwrap();
        let mut source = SignalSource::white(29);
        for step in 0..10_000u64 {
            let x = source.next_sample().unwrap();
            let ea = plant_a.measure(&scene, x).unwrap().e;
            let eb = plant_b.measure(&scene, x).unwrap().e;
            let cen_before = cen.filters().clone();
            let ya = mgd.tick(x, &ea).unwrap();
            let yb = cen.tick(x, &eb).unwrap();
            plant_a.emit(&ya).unwrap();
            plant_b.emit(&yb).unwrap();
            for (a, b) in ya.iter().zip(&yb) {
                assert!(
                    (a - b).abs() <= 1e-10,
                    "outputs split at step {step}: {a} vs {b}"
                );
            }
            // The distributed filters after this tick equal the centralized
            // filters as they stood before this tick's update.
            let lag_diff = mgd.filters().max_abs_difference(&cen_before);
            assert!(
                lag_diff <= 1e-10,
                "filter trajectories split at step {step}: {lag_diff}"
            );
        }
    }

    /// A node that never hears from anyone behaves exactly like the
    /// decentralized update with the same step size.
    #[test]
    fn test_silent_network_matches_decentralized() {
        let synth = synthesize_scene(&SceneRecipe::new(402, 2, 16)).unwrap();
        let scene = &synth.scene;
        let taps = 20;
        let mu = 0.004;
        let bank = CompensationBank::new(2, 4).unwrap(); // zero cross filters
        let bus = GradientBus::disconnected(2, 8000.0);
        let mut mgd =
            MgdController::new(scene, bank, bus, &MgdConfig::new(taps, mu, 8000.0)).unwrap();
        let mut dec = DecentralizedController::new(scene, &DecentralizedConfig::new(taps, mu)).unwrap();
        let mut plant_a = PlantState::new(scene).unwrap();
        let mut plant_b = PlantState::new(scene).unwrap();
        let mut source = SignalSource::white(31);
        for step in 0..5_000 {
            let x = source.next_sample().unwrap();
            let ea = plant_a.measure(scene, x).unwrap().e;
            let eb = plant_b.measure(scene, x).unwrap().e;
            let ya = mgd.tick(x, &ea).unwrap();
            let yb = dec.tick(x, &eb).unwrap();
            plant_a.emit(&ya).unwrap();
            plant_b.emit(&yb).unwrap();
            for (node, (a, b)) in ya.iter().zip(&yb).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-10,
                    "node {node} outputs split at step {step}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn test_adaptive_mu_follows_observed_staleness_exactly() {
        let fs = 8000.0;
        let synth = synthesize_scene(&SceneRecipe::new(403, 2, 16)).unwrap();
        let scene = &synth.scene;
        let schedule = DelaySchedule::steps(vec![(0, 0), (300, 40)]).unwrap();
        let bus = GradientBus::fully_connected(2, fs, schedule);
        let bank = CompensationBank::new(2, 4).unwrap();
        let mut mgd = MgdController::new(
            scene,
            bank,
            bus,
            &MgdConfig::adaptive(16, 0.01, fs),
        )
        .unwrap();
        let mut plant = PlantState::new(scene).unwrap();
        let mut source = SignalSource::white(37);
        let mut mu_trace: Vec<(u64, f64)> = Vec::new();
        for _ in 0..800u64 {
            let x = source.next_sample().unwrap();
            let out = plant.measure(scene, x).unwrap();
            let y = mgd.tick(x, &out.e).unwrap();
            plant.emit(&y).unwrap();
            mu_trace.push((mgd.node_delta(0), mgd.node_mu(0)));
        }
        // Before any message lands the base step size applies.
        assert_eq!(mu_trace[0], (0, 0.01));
        // In the zero-delay plateau the newest peer stamp is one tick old.
        assert_eq!(mu_trace[100], (1, asss_mu(0.01, 1, fs)));
        // Messages stamped at the switch arrive 40 samples later; deep in
        // the new plateau the observed staleness is the delay plus one.
        assert_eq!(mu_trace[600], (41, asss_mu(0.01, 41, fs)));
        // The plateau ratio matches the pure exponential of the delay jump.
        let ratio = mu_trace[600].1 / mu_trace[100].1;
        let expected = (-2.0 * 40.0 / fs).exp();
        assert!(
            (ratio - expected).abs() < 1e-12,
            "plateau step-size ratio {ratio} differs from {expected}"
        );
    }

    /// Gradient sharing with true compensation filters must beat the
    /// decentralized loop on a strongly coupled plant, and an instant
    /// network must essentially reach the centralized result.
    #[test]
    fn test_beats_decentralized_under_strong_coupling() {
        let mut recipe = SceneRecipe::new(404, 3, 24);
        recipe.exact_compensation = Some(4);
        recipe.cross_gain = 0.8;
        let synth = synthesize_scene(&recipe).unwrap();
        let targets = vec![
            vec![0.6, -0.2, 0.1, 0.05],
            vec![-0.3, 0.4, 0.0, 0.1],
            vec![0.2, 0.1, -0.4, 0.05],
        ];
        let scene = retarget_primaries(&synth.scene, &targets).unwrap();
        let bank = synth.true_compensation.unwrap();
        let taps = 32;
        let mu = 0.0015;
        let samples = 50_000;

        let bus = GradientBus::fully_connected(3, 8000.0, DelaySchedule::Constant(0));
        let mut mgd =
            MgdController::new(&scene, bank, bus, &MgdConfig::new(taps, mu, 8000.0)).unwrap();
        let mut dec = DecentralizedController::new(&scene, &DecentralizedConfig::new(taps, mu)).unwrap();
        let (dm, em) = closed_loop(&scene, &mut mgd, 41, samples);
        let (dd, ed) = closed_loop(&scene, &mut dec, 41, samples);
        let mut mgd_db = 0.0;
        let mut dec_db = 0.0;
        for mic in 0..3 {
            mgd_db += tail_db(&dm[mic], &em[mic], 5_000);
            dec_db += tail_db(&dd[mic], &ed[mic], 5_000);
        }
        assert!(
            mgd_db < dec_db - 3.0,
            "gradient sharing ({mgd_db:.1} dB total) should beat decentralized ({dec_db:.1} dB total)"
        );
    }

    /// The compensated update still converges when gradients arrive late,
    /// with the adaptive step size keeping the loop stable.
    #[test]
    fn test_converges_with_delayed_messages_and_adaptive_mu() {
        let mut recipe = SceneRecipe::new(405, 2, 20);
        recipe.exact_compensation = Some(3);
        let synth = synthesize_scene(&recipe).unwrap();
        let scene = retarget_primaries(
            &synth.scene,
            &[vec![0.5, -0.2, 0.1, 0.0], vec![-0.25, 0.3, 0.05, 0.1]],
        )
        .unwrap();
        let bank = synth.true_compensation.unwrap();
        let bus = GradientBus::fully_connected(2, 8000.0, DelaySchedule::Constant(64));
        let mut mgd = MgdController::new(
            &scene,
            bank,
            bus,
            &MgdConfig::adaptive(24, 0.002, 8000.0),
        )
        .unwrap();
        let (d, e) = closed_loop(&scene, &mut mgd, 43, 60_000);
        for mic in 0..2 {
            let db = tail_db(&d[mic], &e[mic], 5_000);
            assert!(db < -20.0, "mic {mic} only reached {db:.1} dB with delayed gradients");
        }
        assert!(mgd.node_delta(0) == 65, "steady staleness should be the delay plus one");
    }

    #[test]
    fn test_runaway_step_size_freezes_and_stays_finite() {
        let synth = synthesize_scene(&SceneRecipe::new(406, 2, 16)).unwrap();
        let bank = CompensationBank::new(2, 4).unwrap();
        let bus = GradientBus::fully_connected(2, 8000.0, DelaySchedule::Constant(0));
        let mut mgd = MgdController::new(
            &synth.scene,
            bank,
            bus,
            &MgdConfig::new(24, 10.0, 8000.0),
        )
        .unwrap();
        let (_, e) = closed_loop(&synth.scene, &mut mgd, 47, 3_000);
        for node in 0..2 {
            assert!(
                mgd.status(node).diverged_at.is_some(),
                "node {node} should have frozen under an absurd step size"
            );
        }
        assert!(
            e.iter().flatten().all(|v| v.is_finite()),
            "the loop must stay finite after freezing"
        );
    }

    #[test]
    fn test_dimension_checks() {
        let synth = synthesize_scene(&SceneRecipe::new(407, 2, 16)).unwrap();
        let bank3 = CompensationBank::new(3, 4).unwrap();
        let bus2 = GradientBus::fully_connected(2, 8000.0, DelaySchedule::Constant(0));
        assert!(MgdController::new(
            &synth.scene,
            bank3,
            bus2,
            &MgdConfig::new(8, 0.01, 8000.0)
        )
        .is_err());
        let bank2 = CompensationBank::new(2, 4).unwrap();
        let bus3 = GradientBus::fully_connected(3, 8000.0, DelaySchedule::Constant(0));
        assert!(MgdController::new(
            &synth.scene,
            bank2,
            bus3,
            &MgdConfig::new(8, 0.01, 8000.0)
        )
        .is_err());
    }
}

//! Message transport between control nodes.
//!
//! Gradient messages are stamped with the sample index at which they were
//! produced and delivered after a link-dependent delay evaluated at the
//! send stamp. A message delivered at sample `t` becomes visible to node
//! ticks from sample `t + 1` on: a node can never read a message produced
//! within its own current sample, so with a zero-delay link the freshest
//! peer gradient is always exactly one sample old.

use crate::controllers::GradientMessage;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("message stamp {stamp} from node {origin} does not increase past {last}")]
    StampNotIncreasing { origin: usize, stamp: u64, last: u64 },
    #[error("node index {node} outside {nodes}-node bus")]
    UnknownNode { node: usize, nodes: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

/// Link delay as a function of the send stamp, in samples.
#[derive(Debug, Clone)]
pub enum DelaySchedule {
    Constant(u64),
    /// Piecewise constant `(start_sample, delay)` segments; the delay of a
    /// stamp is taken from the last segment that has started.
    Steps(Vec<(u64, u64)>),
    /// `delay(n) = round((sin(2*pi*rate_hz*node_index*n/fs - pi/2) + 1) * amplitude)`.
    /// Starts at zero, peaks at twice the amplitude. `node_index` (1-based)
    /// lets each sender oscillate at its own rate.
    Sinusoid {
        rate_hz: f64,
        amplitude: f64,
        node_index: u32,
    },
}

impl DelaySchedule {
    pub fn steps(segments: Vec<(u64, u64)>) -> Result<Self, NetError> {
        if segments.is_empty() {
            return Err(NetError::Schedule("step schedule needs at least one segment".into()));
        }
        if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(NetError::Schedule(
                "step segments must have strictly increasing start samples".into(),
            ));
        }
        Ok(Self::Steps(segments))
    }

    pub fn sinusoid(rate_hz: f64, amplitude: f64, node_index: u32) -> Result<Self, NetError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) || !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(NetError::Schedule(format!(
                "sinusoid needs positive rate and non-negative amplitude, got {rate_hz}, {amplitude}"
            )));
        }
        if node_index == 0 {
            return Err(NetError::Schedule("sinusoid node index is 1-based".into()));
        }
        Ok(Self::Sinusoid {
            rate_hz,
            amplitude,
            node_index,
        })
    }

    /// Delay applied to a message stamped `n` on a link sampled at `fs`.
    pub fn delay_at(&self, n: u64, fs: f64) -> u64 {
        match self {
            Self::Constant(d) => *d,
            Self::Steps(segments) => {
                let mut delay = segments[0].1;
                for &(start, d) in segments {
                    if start <= n {
                        delay = d;
                    } else {
                        break;
                    }
                }
                delay
            }
            Self::Sinusoid {
                rate_hz,
                amplitude,
                node_index,
            } => {
                let phase = 2.0 * std::f64::consts::PI * rate_hz * *node_index as f64 * n as f64
                    / fs
                    - std::f64::consts::FRAC_PI_2;
                ((phase.sin() + 1.0) * amplitude).round() as u64
            }
        }
    }
}

/// One copy of a broadcast travelling toward one receiver. The payload is
/// shared between all receivers of the same broadcast so a long queue costs
/// one gradient buffer, not one per link.
#[derive(Debug, Clone)]
struct InFlight {
    delivery: u64,
    seq: u64,
    to: usize,
    msg: Arc<GradientMessage>,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.delivery == other.delivery && self.seq == other.seq && self.to == other.to
    }
}

impl Eq for InFlight {}

impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for InFlight {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.delivery, self.seq, self.to).cmp(&(other.delivery, other.seq, other.to))
    }
}

/// What one node sees of one peer when it opens its mailbox.
#[derive(Debug, Clone)]
pub struct PeerDelivery {
    pub origin: usize,
    /// Messages that arrived since the node last looked, oldest stamp first.
    pub newly_delivered: Vec<GradientMessage>,
    /// Current sample minus the newest stamp ever received from this peer,
    /// or `None` if nothing has arrived yet. Always at least one.
    pub delta: Option<u64>,
}

/// Immutable snapshot handed to a node at the start of its tick.
#[derive(Debug, Clone)]
pub struct MailboxView {
    pub peers: Vec<PeerDelivery>,
}

impl MailboxView {
    /// An empty view for a node with no peers (single-node systems).
    pub fn empty() -> Self {
        Self { peers: Vec::new() }
    }

    /// Largest observed peer delay, ignoring peers never heard from.
    pub fn max_known_delta(&self) -> Option<u64> {
        self.peers.iter().filter_map(|p| p.delta).max()
    }
}

/// Broadcast transport for gradient messages with per-link delay schedules.
#[derive(Debug)]
pub struct GradientBus {
    nodes: usize,
    fs: f64,
    schedules: Vec<Vec<Option<DelaySchedule>>>, // [from][to]
    heap: BinaryHeap<Reverse<InFlight>>,
    seq: u64,
    delivered_up_to: Option<u64>,
    pending: Vec<Vec<Vec<GradientMessage>>>, // [to][from]
    latest_stamp: Vec<Vec<Option<u64>>>,     // [to][from]
    last_sent_stamp: Vec<Option<u64>>,       // [origin]
    sent: u64,
    delivered: u64,
}

impl GradientBus {
    /// A bus where every ordered pair of distinct nodes shares one schedule.
    pub fn fully_connected(nodes: usize, fs: f64, schedule: DelaySchedule) -> Self {
        let mut bus = Self::disconnected(nodes, fs);
        for from in 0..nodes {
            for to in 0..nodes {
                if from != to {
                    bus.schedules[from][to] = Some(schedule.clone());
                }
            }
        }
        bus
    }

    /// A bus with no links at all; messages are accepted and dropped.
    pub fn disconnected(nodes: usize, fs: f64) -> Self {
        Self {
            nodes,
            fs,
            schedules: vec![vec![None; nodes]; nodes],
            heap: BinaryHeap::new(),
            seq: 0,
            delivered_up_to: None,
            pending: vec![vec![Vec::new(); nodes]; nodes],
            latest_stamp: vec![vec![None; nodes]; nodes],
            last_sent_stamp: vec![None; nodes],
            sent: 0,
            delivered: 0,
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn set_link(
        &mut self,
        from: usize,
        to: usize,
        schedule: Option<DelaySchedule>,
    ) -> Result<(), NetError> {
        self.check_node(from)?;
        self.check_node(to)?;
        self.schedules[from][to] = schedule;
        Ok(())
    }

    fn check_node(&self, node: usize) -> Result<(), NetError> {
        if node >= self.nodes {
            return Err(NetError::UnknownNode {
                node,
                nodes: self.nodes,
            });
        }
        Ok(())
    }

    /// Queues `msg` on every outgoing link of its origin. Stamps must grow
    /// strictly per origin; the delay is evaluated at the send stamp.
    pub fn broadcast(&mut self, msg: GradientMessage) -> Result<(), NetError> {
        self.check_node(msg.origin)?;
        if let Some(last) = self.last_sent_stamp[msg.origin] {
            if msg.stamp <= last {
                return Err(NetError::StampNotIncreasing {
                    origin: msg.origin,
                    stamp: msg.stamp,
                    last,
                });
            }
        }
        self.last_sent_stamp[msg.origin] = Some(msg.stamp);
        let payload = Arc::new(msg);
        for to in 0..self.nodes {
            if to == payload.origin {
                continue;
            }
            if let Some(schedule) = &self.schedules[payload.origin][to] {
                let delivery = payload.stamp + schedule.delay_at(payload.stamp, self.fs);
                let key = self.seq;
                self.seq += 1;
                self.heap.push(Reverse(InFlight {
                    delivery,
                    seq: key,
                    to,
                    msg: Arc::clone(&payload),
                }));
                self.sent += 1;
            }
        }
        Ok(())
    }

    fn apply_deliveries(&mut self, up_to: u64) {
        if self.delivered_up_to.is_some_and(|d| d >= up_to) {
            return;
        }
        while let Some(Reverse(top)) = self.heap.peek() {
            if top.delivery > up_to {
                break;
            }
            let Reverse(item) = self.heap.pop().unwrap();
            let from = item.msg.origin;
            let stamp = item.msg.stamp;
            self.pending[item.to][from].push((*item.msg).clone());
            let latest = &mut self.latest_stamp[item.to][from];
            if latest.map_or(true, |s| stamp > s) {
                *latest = Some(stamp);
            }
            self.delivered += 1;
        }
        self.delivered_up_to = Some(up_to);
    }

    /// Opens node `node`'s mailbox at the start of its tick for
    /// `current_sample`. Everything delivered before the current sample is
    /// visible; newly arrived messages are handed over once, sorted by
    /// stamp, together with the per-peer staleness.
    pub fn view(&mut self, node: usize, current_sample: u64) -> Result<MailboxView, NetError> {
        self.check_node(node)?;
        if current_sample > 0 {
            self.apply_deliveries(current_sample - 1);
        }
        let mut peers = Vec::with_capacity(self.nodes.saturating_sub(1));
        for from in 0..self.nodes {
            if from == node {
                continue;
            }
            let mut newly = std::mem::take(&mut self.pending[node][from]);
            newly.sort_by_key(|m| m.stamp);
            peers.push(PeerDelivery {
                origin: from,
                newly_delivered: newly,
                delta: self.latest_stamp[node][from].map(|s| current_sample - s),
            });
        }
        Ok(MailboxView { peers })
    }

    /// Messages accepted onto links so far.
    pub fn sent_count(&self) -> u64 {
        self.sent
    }

    /// Messages handed to receivers so far.
    pub fn delivered_count(&self) -> u64 {
        self.delivered
    }

    /// Messages still travelling.
    pub fn in_flight_count(&self) -> usize {
        self.heap.len()
    }
}

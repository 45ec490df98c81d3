//! Simulated BLE advertisement broadcasting.
//!
//! A sender advertising a message emits an instantaneous packet every
//! `t_sn` ms for the advertisement window `t_ad`, each packet on a uniformly
//! random primary channel. Every radio hops between the primary channels
//! 37/38/39 with dwell `t_sw` and is deaf for the first `t_de` ms of each
//! dwell. A packet reaches a receiver if their channels match, neither side
//! is deaf, the received power clears the threshold `P_0`, and no other
//! in-range sender put a packet on the same channel within 1 ms.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{fnv1a, mix64};

pub const PRIMARY_CHANNELS: [u8; 3] = [37, 38, 39];
/// Two packets on one channel closer than this collide.
pub const COLLISION_WINDOW_MS: f64 = 1.0;
/// Distances below this are treated as this (near field).
pub const MIN_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad distance {0}")]
    BadDistance(f64),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// Transmit power in mW.
    pub p_t: f64,
    pub g_t: f64,
    pub g_r: f64,
    /// Wavelength in m.
    pub lambda: f64,
    /// Receive threshold in mW.
    pub p_0: f64,
    /// Log-normal shadowing standard deviation in dB; 0 disables it.
    pub shadowing_sigma: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            p_t: 1.0,
            g_t: 1.0,
            g_r: 1.0,
            lambda: 0.125,
            p_0: 4.0e-6,
            shadowing_sigma: 0.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("p_t", self.p_t),
            ("g_t", self.g_t),
            ("g_r", self.g_r),
            ("lambda", self.lambda),
            ("p_0", self.p_0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::BadConfig(format!("radio.{name} must be > 0")));
            }
        }
        if !(self.shadowing_sigma.is_finite() && self.shadowing_sigma >= 0.0) {
            return Err(SimError::BadConfig(
                "radio.shadowing_sigma must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Distance at which the mean received power equals `p_0`.
    pub fn threshold_radius(&self) -> f64 {
        self.lambda / (2.0 * PI) * (self.p_t * self.g_t * self.g_r / self.p_0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    /// Channel dwell time.
    pub t_sw: f64,
    /// Dead time after each channel switch.
    pub t_de: f64,
    /// Packet send period within an advertisement window.
    pub t_sn: f64,
    /// Advertisement window per message.
    pub t_ad: f64,
    /// Minimum spacing between distinct messages.
    pub t_adv: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            t_sw: 100.0,
            t_de: 2.0,
            t_sn: 100.0,
            t_ad: 500.0,
            t_adv: 500.0,
        }
    }
}

impl TimingConfig {
    /// Checks the constraints a deployed radio must satisfy. Link sweeps
    /// deliberately go below `t_ad = 3 t_sw` and skip this.
    pub fn validate(&self) -> Result<(), SimError> {
        self.validate_basic()?;
        if self.t_ad < 3.0 * self.t_sw {
            return Err(SimError::BadConfig(
                "timing.t_ad must be >= 3 * timing.t_sw".into(),
            ));
        }
        Ok(())
    }

    fn validate_basic(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("t_sw", self.t_sw),
            ("t_sn", self.t_sn),
            ("t_ad", self.t_ad),
            ("t_adv", self.t_adv),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::BadConfig(format!("timing.{name} must be > 0")));
            }
        }
        if !(self.t_de >= 0.0 && self.t_de < self.t_sw) {
            return Err(SimError::BadConfig(
                "timing.t_de must be in [0, t_sw)".into(),
            ));
        }
        Ok(())
    }

    /// Packets per advertisement window.
    pub fn packets_per_window(&self) -> f64 {
        self.t_ad / self.t_sn
    }
}

/// Mean received power in mW: `P_t G_t G_r (lambda / (2 pi r))^2`.
pub fn mean_received_power(rc: &RadioConfig, r: f64) -> Result<f64, SimError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(SimError::BadDistance(r));
    }
    let ratio = rc.lambda / (2.0 * PI * r);
    Ok(rc.p_t * rc.g_t * rc.g_r * ratio * ratio)
}

/// Received power with log-normal shadowing drawn from `rng` when
/// `shadowing_sigma > 0`.
pub fn friis_received_power<R: Rng + ?Sized>(
    rc: &RadioConfig,
    r: f64,
    rng: &mut R,
) -> Result<f64, SimError> {
    let mean = mean_received_power(rc, r)?;
    Ok(mean * shadowing_factor(rc, rng))
}

fn shadowing_factor<R: Rng + ?Sized>(rc: &RadioConfig, rng: &mut R) -> f64 {
    if rc.shadowing_sigma > 0.0 {
        let db = Normal::new(0.0, rc.shadowing_sigma)
            .map(|n| n.sample(rng))
            .unwrap_or(0.0);
        10f64.powf(db / 10.0)
    } else {
        1.0
    }
}

/// Closed-form probability that at least one of `n = t_ad / t_sn` packets
/// lands on the receiver's channel, each with chance 3/9.
pub fn analytic_p1(tc: &TimingConfig, in_range: bool) -> f64 {
    if !in_range || tc.t_sn <= 0.0 {
        return 0.0;
    }
    let n = tc.packets_per_window();
    1.0 - (1.0 - 3.0 / 9.0f64).powf(n)
}

/// Signal strength in dBm, clamped to [-127, 20].
pub fn rssi_dbm(p_r_mw: f64) -> f64 {
    if p_r_mw.is_nan() || p_r_mw <= 0.0 {
        return -127.0;
    }
    (10.0 * p_r_mw.log10()).clamp(-127.0, 20.0)
}

fn in_dead_time(t: f64, phase: f64, t_sw: f64, t_de: f64) -> bool {
    let offset = (t - phase).rem_euclid(t_sw);
    offset < t_de
}

/// Monte Carlo estimate of the probability that a receiver at distance `r`
/// gets at least one packet of one advertisement window.
///
/// Each trial draws independent dwell phases for sender and receiver and a
/// phase for the packet train; receiver channels are drawn per dwell and
/// sender channels per packet.
pub fn simulate_link(
    rc: &RadioConfig,
    tc: &TimingConfig,
    r: f64,
    trials: u32,
    seed: u64,
) -> Result<f64, SimError> {
    rc.validate()?;
    tc.validate_basic()?;
    if trials == 0 {
        return Err(SimError::BadConfig("trials must be >= 1".into()));
    }
    let mean = mean_received_power(rc, r)?;
    if rc.shadowing_sigma == 0.0 && mean < rc.p_0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0u32;
    for _ in 0..trials {
        let rx_phase = rng.random::<f64>() * tc.t_sw;
        let tx_phase = rng.random::<f64>() * tc.t_sw;
        let first = rng.random::<f64>() * tc.t_sn;
        let mut rx_dwell: Option<(i64, u8)> = None;
        let mut k = 0u32;
        loop {
            let t = first + k as f64 * tc.t_sn;
            if t >= tc.t_ad {
                break;
            }
            k += 1;
            let tx_channel = rng.random_range(0..3u8);
            if in_dead_time(t, tx_phase, tc.t_sw, tc.t_de) {
                continue;
            }
            let dwell = ((t - rx_phase) / tc.t_sw).floor() as i64;
            let rx_channel = match rx_dwell {
                Some((d, ch)) if d == dwell => ch,
                _ => {
                    let ch = rng.random_range(0..3u8);
                    rx_dwell = Some((dwell, ch));
                    ch
                }
            };
            if in_dead_time(t, rx_phase, tc.t_sw, tc.t_de) || tx_channel != rx_channel {
                continue;
            }
            if mean * shadowing_factor(rc, &mut rng) < rc.p_0 {
                continue;
            }
            successes += 1;
            break;
        }
    }
    Ok(successes as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
}

/// Piecewise-linear position over time, optionally repeating.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
    looped: bool,
}

impl Trajectory {
    pub fn fixed(x: f64, y: f64) -> Self {
        Trajectory {
            waypoints: vec![Waypoint { t_ms: 0.0, x, y }],
            looped: false,
        }
    }

    pub fn new(mut waypoints: Vec<Waypoint>, looped: bool) -> Result<Self, SimError> {
        if waypoints.is_empty() {
            return Err(SimError::BadConfig("trajectory needs a waypoint".into()));
        }
        if waypoints
            .iter()
            .any(|w| !(w.t_ms.is_finite() && w.x.is_finite() && w.y.is_finite()))
        {
            return Err(SimError::BadConfig("waypoints must be finite".into()));
        }
        waypoints.sort_by(|a, b| a.t_ms.total_cmp(&b.t_ms));
        Ok(Trajectory { waypoints, looped })
    }

    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let w = &self.waypoints;
        let first = w[0];
        let last = w[w.len() - 1];
        let mut t = t;
        let span = last.t_ms - first.t_ms;
        if self.looped && span > 0.0 && t > last.t_ms {
            t = first.t_ms + (t - first.t_ms).rem_euclid(span);
        }
        if t <= first.t_ms {
            return (first.x, first.y);
        }
        if t >= last.t_ms {
            return (last.x, last.y);
        }
        let i = w.partition_point(|p| p.t_ms <= t);
        let (a, b) = (w[i - 1], w[i]);
        let f = (t - a.t_ms) / (b.t_ms - a.t_ms);
        (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Sender,
    Receiver,
    Both,
}

#[derive(Debug, Clone)]
pub struct SimNode {
    pub id: String,
    pub trajectory: Trajectory,
    pub role: NodeRole,
}

impl SimNode {
    pub fn fixed(id: impl Into<String>, x: f64, y: f64) -> Self {
        SimNode {
            id: id.into(),
            trajectory: Trajectory::fixed(x, y),
            role: NodeRole::Both,
        }
    }
}

/// A message that reached one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub train: u64,
    pub sender: String,
    pub receiver: String,
    pub bytes: Vec<u8>,
    pub rssi: f64,
    /// Time of the first packet that got through.
    pub received_at: f64,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    time: f64,
    channel: u8,
}

#[derive(Debug)]
struct Train {
    sender: usize,
    bytes: Vec<u8>,
    packets: Vec<Packet>,
    delivered: BTreeSet<usize>,
    unresolved: usize,
}

fn micros(t: f64) -> u64 {
    (t.max(0.0) * 1000.0).round() as u64
}

/// Shared radio medium for a set of simulated BLE nodes.
pub struct BleMedium {
    radio: RadioConfig,
    timing: TimingConfig,
    seed: u64,
    nodes: Vec<SimNode>,
    salts: Vec<u64>,
    trains: BTreeMap<u64, Train>,
    // (resolve time in us, train, packet index)
    due: BTreeSet<(u64, u64, usize)>,
    rng: ChaCha8Rng,
    next_train: u64,
}

impl BleMedium {
    pub fn new(radio: RadioConfig, timing: TimingConfig, seed: u64) -> Result<Self, SimError> {
        radio.validate()?;
        timing.validate()?;
        Ok(BleMedium {
            radio,
            timing,
            seed,
            nodes: Vec::new(),
            salts: Vec::new(),
            trains: BTreeMap::new(),
            due: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x0062_6c65)),
            next_train: 0,
        })
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn timing(&self) -> &TimingConfig {
        &self.timing
    }

    pub fn add_node(&mut self, node: SimNode) -> Result<(), SimError> {
        if self.index_of(&node.id).is_some() {
            return Err(SimError::BadConfig(format!("duplicate node {:?}", node.id)));
        }
        self.salts.push(fnv1a(node.id.as_bytes()));
        self.nodes.push(node);
        Ok(())
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn position(&self, id: &str, t: f64) -> Option<(f64, f64)> {
        self.index_of(id)
            .map(|i| self.nodes[i].trajectory.position_at(t))
    }

    fn distance(&self, a: usize, b: usize, t: f64) -> f64 {
        let (ax, ay) = self.nodes[a].trajectory.position_at(t);
        let (bx, by) = self.nodes[b].trajectory.position_at(t);
        (ax - bx).hypot(ay - by).max(MIN_DISTANCE_M)
    }

    pub fn distance_between(&self, a: &str, b: &str, t: f64) -> Option<f64> {
        Some(self.distance(self.index_of(a)?, self.index_of(b)?, t))
    }

    fn dwell_phase(&self, node: usize) -> f64 {
        let h = mix64(self.seed ^ self.salts[node]);
        (h >> 11) as f64 / (1u64 << 53) as f64 * self.timing.t_sw
    }

    /// Channel a node listens on at time `t` and whether it is switching.
    pub fn channel_at(&self, node: usize, t: f64) -> (u8, bool) {
        let phase = self.dwell_phase(node);
        let dwell = ((t - phase) / self.timing.t_sw).floor() as i64;
        let h = mix64(self.seed ^ self.salts[node] ^ mix64(dwell as u64));
        let channel = PRIMARY_CHANNELS[(h % 3) as usize];
        (
            channel,
            in_dead_time(t, phase, self.timing.t_sw, self.timing.t_de),
        )
    }

    /// Starts advertising `bytes` from `sender` at `now`. Packets that fall
    /// into the sender's own dead time are never emitted.
    pub fn broadcast(&mut self, sender: &str, bytes: Vec<u8>, now: f64) -> Result<u64, SimError> {
        let s = self
            .index_of(sender)
            .ok_or_else(|| SimError::UnknownNode(sender.to_string()))?;
        self.prune(now);
        let id = self.next_train;
        self.next_train += 1;
        let first = now + self.rng.random::<f64>() * self.timing.t_sn;
        let mut packets = Vec::new();
        let mut k = 0u32;
        loop {
            let time = first + k as f64 * self.timing.t_sn;
            if time >= now + self.timing.t_ad {
                break;
            }
            k += 1;
            let channel = PRIMARY_CHANNELS[self.rng.random_range(0..3usize)];
            if self.channel_at(s, time).1 {
                continue;
            }
            packets.push(Packet { time, channel });
        }
        for (i, p) in packets.iter().enumerate() {
            self.due
                .insert((micros(p.time + COLLISION_WINDOW_MS), id, i));
        }
        self.trains.insert(
            id,
            Train {
                sender: s,
                bytes,
                unresolved: packets.len(),
                packets,
                delivered: BTreeSet::new(),
            },
        );
        Ok(id)
    }

    /// When the next packet can be resolved.
    pub fn next_due(&self) -> Option<f64> {
        self.due.first().map(|&(us, _, _)| us as f64 / 1000.0)
    }

    /// Resolves every packet whose collision window has closed by `now`.
    pub fn resolve_due(&mut self, now: f64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some(&(us, train, k)) = self.due.first() {
            if us > micros(now) {
                break;
            }
            self.due.pop_first();
            self.resolve_packet(train, k, &mut out);
        }
        out
    }

    fn resolve_packet(&mut self, train_id: u64, k: usize, out: &mut Vec<Delivery>) {
        let Some(train) = self.trains.get(&train_id) else {
            return;
        };
        let sender = train.sender;
        let packet = train.packets[k];
        let mut winners = Vec::new();
        for rx in 0..self.nodes.len() {
            if rx == sender
                || self.nodes[rx].role == NodeRole::Sender
                || train.delivered.contains(&rx)
            {
                continue;
            }
            let (channel, deaf) = self.channel_at(rx, packet.time);
            if deaf || channel != packet.channel {
                continue;
            }
            let r = self.distance(sender, rx, packet.time);
            let Ok(mean) = mean_received_power(&self.radio, r) else {
                continue;
            };
            let power = mean * shadowing_factor(&self.radio, &mut self.rng);
            if power < self.radio.p_0 || self.collides(train_id, packet, rx) {
                continue;
            }
            winners.push((rx, power));
        }
        let train = self.trains.get_mut(&train_id).expect("train exists");
        train.unresolved -= 1;
        for (rx, power) in winners {
            train.delivered.insert(rx);
            out.push(Delivery {
                train: train_id,
                sender: self.nodes[sender].id.clone(),
                receiver: self.nodes[rx].id.clone(),
                bytes: train.bytes.clone(),
                rssi: rssi_dbm(power),
                received_at: packet.time,
            });
        }
    }

    fn collides(&self, train_id: u64, p: Packet, rx: usize) -> bool {
        self.trains.iter().any(|(&id, other)| {
            id != train_id
                && other.sender != self.trains[&train_id].sender
                && other.packets.iter().any(|q| {
                    q.channel == p.channel
                        && (q.time - p.time).abs() < COLLISION_WINDOW_MS
                        && mean_received_power(&self.radio, self.distance(other.sender, rx, q.time))
                            .is_ok_and(|pw| pw >= self.radio.p_0)
                })
        })
    }

    fn prune(&mut self, now: f64) {
        self.trains.retain(|_, t| {
            t.unresolved > 0
                || t
                    .packets
                    .last()
                    .is_some_and(|p| p.time + 2.0 * COLLISION_WINDOW_MS >= now)
        });
    }

    /// Advertises one message and resolves it against everything currently
    /// on the air.
    pub fn deliver_broadcast(
        &mut self,
        sender: &str,
        bytes: Vec<u8>,
        now: f64,
    ) -> Result<Vec<Delivery>, SimError> {
        let id = self.broadcast(sender, bytes, now)?;
        let end = now + self.timing.t_ad + 2.0 * COLLISION_WINDOW_MS;
        Ok(self
            .resolve_due(end)
            .into_iter()
            .filter(|d| d.train == id)
            .collect())
    }
}

//! Emulated telemetry link between the ground station and the vehicle.
//!
//! Each direction is a FIFO channel with independent Bernoulli loss and a
//! one-way delay of `base_latency / 2 + uniform(0, jitter)`. The base latency
//! of a profile is the round-trip floor, matching how the radios were
//! characterized (command out, feedback back).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProfile {
    pub name: String,
    /// Round-trip latency floor, ms.
    pub base_latency_ms: f64,
    /// Upper bound of the uniform one-way jitter, ms.
    pub jitter_ms: f64,
    pub loss_prob: f64,
    /// Emission frequency above which loss starts to grow, Hz.
    pub max_freq_hz: f64,
    pub cmd_size_bytes: u32,
    pub fb_size_bytes: u32,
}

impl LinkProfile {
    /// Xbee Wifi: lowest latency of the radios tried, no measured loss
    /// (it was out of range at 100 m).
    pub fn xbee_wifi() -> Self {
        LinkProfile {
            name: "xbee-wifi".into(),
            base_latency_ms: 56.5,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            max_freq_hz: 30.0,
            cmd_size_bytes: 21,
            fb_size_bytes: 56,
        }
    }

    pub fn xbee_pro() -> Self {
        LinkProfile {
            name: "xbee-pro".into(),
            base_latency_ms: 70.0,
            jitter_ms: 6.0,
            loss_prob: 0.026,
            max_freq_hz: 30.0,
            cmd_size_bytes: 21,
            fb_size_bytes: 56,
        }
    }

    /// 3DR 915 MHz radio, the default session link.
    pub fn radio_3dr_915() -> Self {
        LinkProfile {
            name: "3dr-915".into(),
            base_latency_ms: 100.0,
            jitter_ms: 4.0,
            loss_prob: 0.02,
            max_freq_hz: 30.0,
            cmd_size_bytes: 21,
            fb_size_bytes: 56,
        }
    }

    /// Lossless, jitter-free link with a fixed one-way delay.
    pub fn fixed_delay(one_way_ms: f64) -> Self {
        LinkProfile {
            name: format!("fixed-{one_way_ms}ms"),
            base_latency_ms: 2.0 * one_way_ms,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            max_freq_hz: f64::INFINITY,
            cmd_size_bytes: 21,
            fb_size_bytes: 56,
        }
    }

    pub fn builtin() -> Vec<LinkProfile> {
        vec![Self::xbee_wifi(), Self::xbee_pro(), Self::radio_3dr_915()]
    }

    pub fn by_name(name: &str) -> Option<LinkProfile> {
        Self::builtin().into_iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_latency_ms >= 0.0 && self.jitter_ms >= 0.0) {
            return Err(format!("{}: latencies must be non-negative", self.name));
        }
        if !(0.0..1.0).contains(&self.loss_prob) {
            return Err(format!("{}: loss_prob {} not in [0, 1)", self.name, self.loss_prob));
        }
        if self.cmd_size_bytes == 0 || self.fb_size_bytes == 0 {
            return Err(format!("{}: packet sizes must be positive", self.name));
        }
        if !(self.max_freq_hz > 0.0) {
            return Err(format!("{}: max_freq_hz must be positive", self.name));
        }
        Ok(())
    }

    /// Loss probability when emitting at `freq`: grows linearly with the
    /// overshoot past `max_freq_hz`.
    pub fn loss_at(&self, freq: f64) -> f64 {
        let over = (freq / self.max_freq_hz - 1.0).max(0.0);
        (self.loss_prob * (1.0 + over)).min(1.0)
    }

    pub fn one_way_floor_s(&self) -> f64 {
        self.base_latency_ms / 2000.0
    }

    pub fn one_way_max_s(&self) -> f64 {
        self.one_way_floor_s() + self.jitter_ms / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketKind {
    Command,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet<T> {
    pub seq: u64,
    pub kind: PacketKind,
    pub payload_size: u32,
    pub sent_at: f64,
    /// `None` when the packet was dropped.
    pub deliver_at: Option<f64>,
    pub payload: T,
}

/// One direction of a link.
#[derive(Debug, Clone)]
pub struct Channel<T> {
    kind: PacketKind,
    payload_size: u32,
    loss_prob: f64,
    floor_s: f64,
    jitter_s: f64,
    rng: ChaCha8Rng,
    next_seq: u64,
    last_sent: f64,
    last_deliver: f64,
    in_flight: VecDeque<Packet<T>>,
    sent: u64,
    dropped: u64,
}

impl<T> Channel<T> {
    pub fn new(profile: &LinkProfile, kind: PacketKind, loss_prob: f64, seed: u64) -> Self {
        let payload_size = match kind {
            PacketKind::Command => profile.cmd_size_bytes,
            PacketKind::Feedback => profile.fb_size_bytes,
        };
        Channel {
            kind,
            payload_size,
            loss_prob,
            floor_s: profile.one_way_floor_s(),
            jitter_s: profile.jitter_ms / 1000.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_seq: 0,
            last_sent: f64::NEG_INFINITY,
            last_deliver: f64::NEG_INFINITY,
            in_flight: VecDeque::new(),
            sent: 0,
            dropped: 0,
        }
    }

    /// Sends `payload` at time `now` and returns the packet record. Delivery
    /// times never go backwards, so packets leave in the order they entered.
    pub fn send(&mut self, payload: T, now: f64) -> Packet<()> {
        debug_assert!(now >= self.last_sent, "send times must not decrease");
        self.last_sent = now;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.sent += 1;
        // Always draw both numbers so the stream does not depend on outcomes.
        let lose = self.rng.random::<f64>() < self.loss_prob;
        let jitter = self.rng.random::<f64>() * self.jitter_s;
        let deliver_at = if lose {
            self.dropped += 1;
            None
        } else {
            let at = (now + self.floor_s + jitter).max(self.last_deliver);
            self.last_deliver = at;
            self.in_flight.push_back(Packet {
                seq,
                kind: self.kind,
                payload_size: self.payload_size,
                sent_at: now,
                deliver_at: Some(at),
                payload,
            });
            Some(at)
        };
        Packet {
            seq,
            kind: self.kind,
            payload_size: self.payload_size,
            sent_at: now,
            deliver_at,
            payload: (),
        }
    }

    /// Removes and returns every packet due by `now`, in delivery order.
    pub fn poll(&mut self, now: f64) -> Vec<Packet<T>> {
        let mut out = Vec::new();
        while let Some(front) = self.in_flight.front() {
            match front.deliver_at {
                Some(at) if at <= now => out.push(self.in_flight.pop_front().unwrap()),
                _ => break,
            }
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Uplink carries commands, downlink carries feedback.
#[derive(Debug, Clone)]
pub struct Link<C, F> {
    pub profile: LinkProfile,
    pub uplink: Channel<C>,
    pub downlink: Channel<F>,
}

impl<C, F> Link<C, F> {
    /// Both directions emit at `freq`, which sets the loss via
    /// [`LinkProfile::loss_at`].
    pub fn new(profile: LinkProfile, freq: f64, seed: u64) -> Self {
        let loss = profile.loss_at(freq);
        let uplink = Channel::new(&profile, PacketKind::Command, loss, seed);
        let downlink = Channel::new(&profile, PacketKind::Feedback, loss, seed ^ 0x9e37_79b9_7f4a_7c15);
        Link {
            profile,
            uplink,
            downlink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub freq_hz: f64,
    pub mean_rtt_ms: f64,
    pub p95_rtt_ms: f64,
    pub min_rtt_ms: f64,
    /// Dropped over emitted packets, both directions, as a fraction despite
    /// the name (the column name is fixed by the CSV format).
    pub loss_pct: f64,
    pub commands: u64,
    pub echoes: u64,
}

/// Emits `n_packets` commands at `freq`; the far end echoes a feedback packet
/// the moment each command arrives. Round trip is echo reception minus command
/// emission.
pub fn measure_roundtrip(profile: &LinkProfile, freq: f64, n_packets: usize, seed: u64) -> LatencyStats {
    assert!(freq > 0.0, "frequency must be positive");
    let mut link: Link<f64, f64> = Link::new(profile.clone(), freq, seed);
    let period = 1.0 / freq;
    let mut rtts = Vec::with_capacity(n_packets);
    for k in 0..n_packets {
        link.uplink.send(k as f64 * period, k as f64 * period);
    }
    for cmd in link.uplink.poll(f64::INFINITY) {
        let at = cmd.deliver_at.expect("delivered");
        link.downlink.send(cmd.payload, at);
    }
    for fb in link.downlink.poll(f64::INFINITY) {
        rtts.push((fb.deliver_at.expect("delivered") - fb.payload) * 1000.0);
    }
    let emitted = link.uplink.sent() + link.downlink.sent();
    let dropped = link.uplink.dropped() + link.downlink.dropped();
    let echoes = rtts.len() as u64;
    let (mean, p95, min) = if rtts.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = rtts.iter().sum::<f64>() / rtts.len() as f64;
        let mut sorted = rtts.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        (mean, sorted[rank - 1], sorted[0])
    };
    LatencyStats {
        freq_hz: freq,
        mean_rtt_ms: mean,
        p95_rtt_ms: p95,
        min_rtt_ms: min,
        loss_pct: if emitted == 0 {
            0.0
        } else {
            dropped as f64 / emitted as f64
        },
        commands: n_packets as u64,
        echoes,
    }
}

/// Writes `freq_hz,mean_rtt_ms,p95_rtt_ms,loss_pct` rows.
pub fn write_latency_csv<W: Write>(rows: &[LatencyStats], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["freq_hz", "mean_rtt_ms", "p95_rtt_ms", "loss_pct"])?;
    for r in rows {
        w.write_record(&[
            r.freq_hz.to_string(),
            r.mean_rtt_ms.to_string(),
            r.p95_rtt_ms.to_string(),
            r.loss_pct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyComponent {
    pub name: String,
    pub latency_ms: f64,
}

impl LatencyComponent {
    pub fn new(name: impl Into<String>, latency_ms: f64) -> Self {
        LatencyComponent {
            name: name.into(),
            latency_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub total_ms: f64,
    pub budget_ms: f64,
    pub pass: bool,
    pub components: Vec<LatencyComponent>,
}

/// Sums a path's latencies and checks the total does not exceed `budget_ms`.
pub fn latency_budget_check(path: &[LatencyComponent], budget_ms: f64) -> BudgetReport {
    assert!(budget_ms > 0.0, "budget must be positive");
    let total_ms: f64 = path.iter().map(|c| c.latency_ms).sum();
    BudgetReport {
        total_ms,
        budget_ms,
        pass: total_ms <= budget_ms,
        components: path.to_vec(),
    }
}

/// Constant latency of the analog FPV video path, ms.
pub const FPV_VIDEO_LATENCY_MS: f64 = 48.0;

/// Head motion reaches the gimbal over the radio uplink and comes back as
/// video.
pub fn gimbal_path(radio: &LinkProfile) -> Vec<LatencyComponent> {
    vec![
        LatencyComponent::new(
            format!("{} uplink", radio.name),
            radio.base_latency_ms / 2.0 + radio.jitter_ms / 2.0,
        ),
        LatencyComponent::new("fpv video", FPV_VIDEO_LATENCY_MS),
    ]
}

pub fn video_path() -> Vec<LatencyComponent> {
    vec![LatencyComponent::new("fpv video", FPV_VIDEO_LATENCY_MS)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_delivery_is_exact() {
        let p = LinkProfile {
            base_latency_ms: 56.5,
            ..LinkProfile::xbee_wifi()
        };
        let mut ch: Channel<u32> = Channel::new(&p, PacketKind::Command, 0.0, 1);
        for k in 0..10 {
            let t = k as f64 * 0.1;
            let pkt = ch.send(k, t);
            assert_eq!(pkt.deliver_at, Some(t + 0.02825));
        }
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let p = LinkProfile {
            loss_prob: 0.99,
            ..LinkProfile::xbee_wifi()
        };
        let mut ch: Channel<u32> = Channel::new(&p, PacketKind::Command, 1.0, 1);
        for k in 0..100 {
            ch.send(k, k as f64);
        }
        assert!(ch.poll(f64::INFINITY).is_empty());
        assert_eq!(ch.dropped(), 100);
    }

    #[test]
    fn poll_semantics() {
        let p = LinkProfile::fixed_delay(10.0);
        let mut ch: Channel<&str> = Channel::new(&p, PacketKind::Feedback, 0.0, 3);
        ch.send("a", 0.0);
        ch.send("b", 0.001);
        assert!(ch.poll(0.005).is_empty());
        let got = ch.poll(0.02);
        assert_eq!(got.iter().map(|p| p.payload).collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(ch.poll(0.02).is_empty());
        assert_eq!(got[0].payload_size, 56);
    }

    #[test]
    fn jitter_never_reorders() {
        let p = LinkProfile {
            jitter_ms: 50.0,
            ..LinkProfile::radio_3dr_915()
        };
        let mut ch: Channel<u64> = Channel::new(&p, PacketKind::Command, p.loss_prob, 9);
        for k in 0..5000 {
            ch.send(k, k as f64 * 0.001);
        }
        let got = ch.poll(f64::INFINITY);
        assert!(got
            .windows(2)
            .all(|w| w[0].seq < w[1].seq && w[0].deliver_at <= w[1].deliver_at));
        assert!(got.iter().all(|p| p.deliver_at.unwrap() >= p.sent_at + 0.05));
    }

    #[test]
    fn xbee_wifi_round_trip() {
        let s = measure_roundtrip(&LinkProfile::xbee_wifi(), 30.0, 500, 0);
        assert_relative_eq!(s.mean_rtt_ms, 56.5, epsilon = 1e-9);
        assert_relative_eq!(s.p95_rtt_ms, 56.5, epsilon = 1e-9);
        assert_eq!(s.loss_pct, 0.0);
        assert_eq!(s.echoes, 500);
    }

    #[test]
    fn loss_grows_past_max_freq() {
        let p = LinkProfile::radio_3dr_915();
        assert_eq!(p.loss_at(10.0), 0.02);
        assert_eq!(p.loss_at(30.0), 0.02);
        assert!(p.loss_at(45.0) > p.loss_at(31.0));
        assert_relative_eq!(p.loss_at(60.0), 0.04, epsilon = 1e-15);
    }

    #[test]
    fn budget_examples() {
        assert!(latency_budget_check(&video_path(), 50.0).pass);
        let gimbal = latency_budget_check(&gimbal_path(&LinkProfile::radio_3dr_915()), 50.0);
        assert!(!gimbal.pass);
        assert_relative_eq!(gimbal.total_ms, 100.0, epsilon = 1e-12);
        let empty = latency_budget_check(&[], 50.0);
        assert_eq!((empty.total_ms, empty.pass), (0.0, true));
    }

    #[test]
    fn csv_header() {
        let s = measure_roundtrip(&LinkProfile::xbee_wifi(), 30.0, 10, 0);
        let mut buf = Vec::new();
        write_latency_csv(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "freq_hz,mean_rtt_ms,p95_rtt_ms,loss_pct");
        assert_eq!(text.lines().nth(1).unwrap(), "30,56.5,56.5,0");
    }
}

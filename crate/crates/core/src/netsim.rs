// Copyright 2026 The sctp-idata Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Deterministic discrete-event network simulation.
//!
//! The canonical topology is a dumbbell: the client host sends through a
//! bottleneck link to the server host, a reverse link of the same shape
//! carries SACKs back, and a UDP source injects background packets into the
//! bottleneck. All randomness comes from seeded ChaCha streams, one per
//! consumer, so a `(config, seed)` pair fully determines the trace.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::VecDeque;
use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::endpoint::AssociationConfig;
use crate::endpoint::Endpoint;
use crate::endpoint::EndpointError;
use crate::endpoint::EndpointEvent;
use crate::endpoint::SenderStats;
use crate::endpoint::TimerId;
use crate::traffic::DelayRecord;
use crate::traffic::GeneratorConfig;
use crate::traffic::Handler;
use crate::traffic::TrafficError;
use crate::wire::decode_packet;
use crate::wire::encode_packet;
use crate::wire::pcap::ipv4_wrap;
use crate::wire::pcap::PcapRecord;
use crate::wire::pcap::IPPROTO_SCTP;
use crate::wire::pcap::IPPROTO_UDP;
use crate::wire::pcap::IPV4_HEADER_SIZE;

pub const CLIENT_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
pub const SERVER_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 1, 1);
pub const UDP_SRC_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
pub const UDP_DST_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 1, 2);
/// PPP framing added to every packet on the serial links.
pub const PPP_OVERHEAD: usize = 4;
const UDP_HEADER_SIZE: usize = 8;

// Independent RNG streams derived from the run seed.
const STREAM_FORWARD_LOSS: u64 = 1;
const STREAM_REVERSE_LOSS: u64 = 2;
const STREAM_UDP: u64 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot schedule at {time}, clock is already at {now}")]
    PastTime { time: f64, now: f64 },
    #[error("invalid topology: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

struct Entry<E> {
    time: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed so the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Simulation clock plus pending events, ordered by time then insertion.
pub struct EventQueue<E> {
    now: f64,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { now: 0.0, next_seq: 0, heap: BinaryHeap::new() }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, event: E) -> Result<(), SimError> {
        if !(time >= self.now) {
            return Err(SimError::PastTime { time, now: self.now });
        }
        self.heap.push(Entry { time, seq: self.next_seq, event });
        self.next_seq += 1;
        Ok(())
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    /// Removes the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(f64, E)> {
        let e = self.heap.pop()?;
        self.now = e.time;
        Some((e.time, e.event))
    }

    /// Pops the next event only if it is due at or before `until`.
    pub fn pop_until(&mut self, until: f64) -> Option<(f64, E)> {
        if self.peek_time()? > until {
            return None;
        }
        self.pop()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub bandwidth_bps: f64,
    pub propagation_delay: f64,
    pub buffer_bytes: usize,
    pub loss_rate: f64,
    /// Link-layer bytes added to every packet for serialization.
    pub framing_overhead: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { bandwidth_bps: 1e6, propagation_delay: 0.01, buffer_bytes: 100_000, loss_rate: 0.0, framing_overhead: 0 }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.bandwidth_bps > 0.0) || !self.bandwidth_bps.is_finite() {
            return bad("bandwidth must be positive");
        }
        if !(self.propagation_delay >= 0.0) || !self.propagation_delay.is_finite() {
            return bad("propagation delay must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return bad("loss rate must be within [0, 1]");
        }
        Ok(())
    }

    /// Seconds to clock `bytes` (plus framing) onto the wire.
    pub fn serialization_time(&self, bytes: usize) -> f64 {
        8.0 * (bytes + self.framing_overhead) as f64 / self.bandwidth_bps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOutcome {
    Delivered,
    DroppedLoss,
    DroppedBuffer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_buffer: u64,
    pub bytes_delivered: u64,
}

/// Point-to-point link with a drop-tail FIFO and Bernoulli loss at ingress.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    rng: ChaCha8Rng,
    /// (serialization end, bytes) of packets not yet fully transmitted.
    queue: VecDeque<(f64, usize)>,
    occupancy: usize,
    busy_until: f64,
    stats: LinkStats,
}

impl Link {
    pub fn new(cfg: LinkConfig, seed: u64, stream: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Link { cfg, rng, queue: VecDeque::new(), occupancy: 0, busy_until: 0.0, stats: LinkStats::default() })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Bytes queued or in transmission at `now`.
    pub fn occupancy(&mut self, now: f64) -> usize {
        self.drain(now);
        self.occupancy
    }

    fn drain(&mut self, now: f64) {
        while let Some(&(end, bytes)) = self.queue.front() {
            if end > now {
                break;
            }
            self.queue.pop_front();
            self.occupancy -= bytes;
        }
    }

    /// Offers a packet of `bytes` at `now`; on success returns the arrival time at the far end.
    pub fn send(&mut self, bytes: usize, now: f64) -> (LinkOutcome, Option<f64>) {
        self.stats.sent += 1;
        self.drain(now);
        if self.cfg.loss_rate > 0.0 && self.rng.random::<f64>() < self.cfg.loss_rate {
            self.stats.dropped_loss += 1;
            return (LinkOutcome::DroppedLoss, None);
        }
        if self.occupancy + bytes > self.cfg.buffer_bytes {
            self.stats.dropped_buffer += 1;
            return (LinkOutcome::DroppedBuffer, None);
        }
        let start = self.busy_until.max(now);
        let end = start + self.cfg.serialization_time(bytes);
        self.busy_until = end;
        self.queue.push_back((end, bytes));
        self.occupancy += bytes;
        self.stats.delivered += 1;
        self.stats.bytes_delivered += bytes as u64;
        (LinkOutcome::Delivered, Some(end + self.cfg.propagation_delay))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdpConfig {
    /// Fraction of the bottleneck bandwidth the source offers on average; 0 disables it.
    pub rate_fraction: f64,
    /// Inclusive IP packet size range.
    pub min_size: usize,
    pub max_size: usize,
    pub start_time: f64,
    pub stop_time: f64,
}

impl Default for UdpConfig {
    fn default() -> Self {
        UdpConfig { rate_fraction: 0.05, min_size: 100, max_size: 300, start_time: 0.0, stop_time: f64::INFINITY }
    }
}

impl UdpConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.rate_fraction) {
            return bad("UDP rate fraction must be within [0, 1)");
        }
        if self.min_size < IPV4_HEADER_SIZE + UDP_HEADER_SIZE || self.min_size > self.max_size {
            return bad("UDP packet sizes must cover at least the IP and UDP headers");
        }
        if !(self.start_time <= self.stop_time) {
            return bad("UDP start time after stop time");
        }
        Ok(())
    }

    fn mean_size(&self) -> f64 {
        (self.min_size + self.max_size) as f64 / 2.0
    }
}

/// Background source with exponential inter-arrival times and uniform sizes.
#[derive(Debug, Clone)]
pub struct UdpSource {
    cfg: UdpConfig,
    mean_interval: f64,
    rng: ChaCha8Rng,
    sent: u64,
}

impl UdpSource {
    pub fn new(cfg: UdpConfig, bottleneck_bps: f64, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_UDP);
        let rate_bytes = cfg.rate_fraction * bottleneck_bps / 8.0;
        let mean_interval = if rate_bytes > 0.0 { cfg.mean_size() / rate_bytes } else { f64::INFINITY };
        Ok(UdpSource { cfg, mean_interval, rng, sent: 0 })
    }

    pub fn enabled(&self) -> bool {
        self.mean_interval.is_finite()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    /// Next emission strictly after `now`, or `None` past the stop time.
    pub fn next_after(&mut self, now: f64) -> Option<f64> {
        if !self.enabled() {
            return None;
        }
        let u: f64 = self.rng.random();
        let t = now.max(self.cfg.start_time) - self.mean_interval * (1.0 - u).ln();
        (t <= self.cfg.stop_time).then_some(t)
    }

    pub fn next_size(&mut self) -> usize {
        self.sent += 1;
        self.rng.random_range(self.cfg.min_size..=self.cfg.max_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumbbellConfig {
    pub bottleneck: LinkConfig,
    pub reverse: LinkConfig,
    pub udp: UdpConfig,
    pub client: AssociationConfig,
    pub server: AssociationConfig,
    pub generators: Vec<GeneratorConfig>,
    pub seed: u64,
    pub duration: f64,
    /// Keep the IP-level trace for pcap output.
    pub capture: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub records: Vec<DelayRecord>,
    pub pcap: Vec<PcapRecord>,
    pub sent_messages: usize,
    pub abandoned_messages: usize,
    pub undelivered_messages: usize,
    pub bottleneck: LinkStats,
    pub reverse: LinkStats,
    pub udp_packets: u64,
    pub sender: SenderStats,
    pub negotiated_idata: Option<bool>,
    pub end_time: f64,
    /// Protocol and simulation notes, capped in length.
    pub diagnostics: Vec<String>,
    /// Unmatched, duplicate or corrupted deliveries; empty on a correct run.
    pub integrity_errors: Vec<String>,
}

#[derive(Debug)]
enum Event {
    Initiate,
    ToServer(Vec<u8>),
    ToClient(Vec<u8>),
    Timer { client: bool, id: TimerId },
    Tick(usize),
    Udp,
}

const MAX_DIAGNOSTICS: usize = 1000;

struct Dumbbell {
    queue: EventQueue<Event>,
    forward: Link,
    reverse: Link,
    udp: UdpSource,
    client: Endpoint,
    server: Endpoint,
    handler: Handler,
    capture: bool,
    pcap: Vec<PcapRecord>,
    ip_id: u16,
    diagnostics: Vec<String>,
}

impl Dumbbell {
    fn diag(&mut self, m: String) {
        if self.diagnostics.len() < MAX_DIAGNOSTICS {
            self.diagnostics.push(m);
        }
    }

    fn capture_packet(&mut self, now: f64, src: Ipv4Addr, dst: Ipv4Addr, proto: u8, payload: &[u8]) -> usize {
        self.ip_id = self.ip_id.wrapping_add(1);
        let ip = ipv4_wrap(src, dst, proto, self.ip_id, payload);
        let len = ip.len();
        if self.capture {
            self.pcap.push(PcapRecord { timestamp: now, data: ip });
        }
        len
    }

    fn process(&mut self, from_client: bool, events: Vec<EndpointEvent>, now: f64) -> Result<(), SimError> {
        for e in events {
            match e {
                EndpointEvent::PacketOut(pkt) => {
                    let bytes = match encode_packet(&pkt) {
                        Ok(b) => b,
                        Err(err) => {
                            self.diag(format!("{now:.6}: encode failed: {err}"));
                            continue;
                        }
                    };
                    let (src, dst) = if from_client { (CLIENT_ADDR, SERVER_ADDR) } else { (SERVER_ADDR, CLIENT_ADDR) };
                    let ip_len = self.capture_packet(now, src, dst, IPPROTO_SCTP, &bytes);
                    let link = if from_client { &mut self.forward } else { &mut self.reverse };
                    if let (LinkOutcome::Delivered, Some(at)) = link.send(ip_len, now) {
                        let ev = if from_client { Event::ToServer(bytes) } else { Event::ToClient(bytes) };
                        self.queue.schedule(at, ev)?;
                    }
                }
                EndpointEvent::TimerSet { id, expiry } => {
                    self.queue.schedule(expiry.max(now), Event::Timer { client: from_client, id })?;
                }
                EndpointEvent::MessageDelivered { sid, payload, at, .. } => {
                    if from_client {
                        self.diag(format!("{now:.6}: unexpected delivery at client on stream {sid}"));
                    } else {
                        self.handler.record_delivery(sid, &payload, at);
                    }
                }
                EndpointEvent::MessageAbandoned { message_id, .. } => {
                    if from_client {
                        self.handler.record_abandoned(message_id);
                    }
                }
                EndpointEvent::Diagnostic(m) => {
                    let side = if from_client { "client" } else { "server" };
                    self.diag(format!("{now:.6} {side}: {m}"));
                }
                EndpointEvent::TimerCancelled(_) | EndpointEvent::AssocEstablished { .. } => {}
            }
        }
        if from_client {
            let more = self.handler.top_up(now, &mut self.client)?;
            if !more.is_empty() {
                return self.process(true, more, now);
            }
        }
        Ok(())
    }

    fn step(&mut self, now: f64, event: Event) -> Result<(), SimError> {
        match event {
            Event::Initiate => {
                let ev = self.client.initiate(now)?;
                self.process(true, ev, now)?;
            }
            Event::ToServer(bytes) => match decode_packet(&bytes) {
                Ok(pkt) => {
                    let ev = self.server.handle_packet(&pkt, now);
                    self.process(false, ev, now)?;
                }
                Err(e) => self.diag(format!("{now:.6} server: undecodable packet: {e}")),
            },
            Event::ToClient(bytes) => match decode_packet(&bytes) {
                Ok(pkt) => {
                    let ev = self.client.handle_packet(&pkt, now);
                    self.process(true, ev, now)?;
                }
                Err(e) => self.diag(format!("{now:.6} client: undecodable packet: {e}")),
            },
            Event::Timer { client, id } => {
                let ev = if client { self.client.on_timer(id, now) } else { self.server.on_timer(id, now) };
                self.process(client, ev, now)?;
            }
            Event::Tick(gen) => {
                let (ev, next) = self.handler.on_tick(gen, now, &mut self.client)?;
                if let Some(t) = next {
                    self.queue.schedule(t, Event::Tick(gen))?;
                }
                self.process(true, ev, now)?;
            }
            Event::Udp => {
                let size = self.udp.next_size();
                let mut payload = vec![0u8; size - IPV4_HEADER_SIZE];
                payload[0..2].copy_from_slice(&9000u16.to_be_bytes());
                payload[2..4].copy_from_slice(&9001u16.to_be_bytes());
                payload[4..6].copy_from_slice(&((size - IPV4_HEADER_SIZE) as u16).to_be_bytes());
                let ip_len = self.capture_packet(now, UDP_SRC_ADDR, UDP_DST_ADDR, IPPROTO_UDP, &payload);
                self.forward.send(ip_len, now);
                if let Some(t) = self.udp.next_after(now) {
                    self.queue.schedule(t, Event::Udp)?;
                }
            }
        }
        Ok(())
    }
}

/// Runs the dumbbell scenario until `duration`, or earlier once all traffic is accounted for.
pub fn run_dumbbell(cfg: &DumbbellConfig) -> Result<SimOutput, SimError> {
    if !(cfg.duration > 0.0) || !cfg.duration.is_finite() {
        return Err(SimError::InvalidConfig("duration must be positive".into()));
    }
    let forward = Link::new(cfg.bottleneck, cfg.seed, STREAM_FORWARD_LOSS)?;
    let reverse = Link::new(cfg.reverse, cfg.seed, STREAM_REVERSE_LOSS)?;
    let udp = UdpSource::new(cfg.udp, cfg.bottleneck.bandwidth_bps, cfg.seed)?;
    let mut sim = Dumbbell {
        queue: EventQueue::new(),
        forward,
        reverse,
        udp,
        client: Endpoint::new(cfg.client.clone())?,
        server: Endpoint::new(cfg.server.clone())?,
        handler: Handler::new(cfg.generators.clone(), cfg.seed)?,
        capture: cfg.capture,
        pcap: Vec::new(),
        ip_id: 0,
        diagnostics: Vec::new(),
    };
    sim.queue.schedule(0.0, Event::Initiate)?;
    for (i, g) in sim.handler.generators().iter().enumerate() {
        sim.queue.schedule(g.first_tick(), Event::Tick(i))?;
    }
    if let Some(t) = sim.udp.next_after(0.0) {
        sim.queue.schedule(t, Event::Udp)?;
    }
    let mut end = 0.0;
    while let Some((now, event)) = sim.queue.pop_until(cfg.duration) {
        end = now;
        sim.step(now, event)?;
        if sim.client.is_established() && sim.handler.complete(now) && sim.client.sender().is_some_and(|s| s.is_idle()) {
            break;
        }
    }
    let diagnostics = std::mem::take(&mut sim.diagnostics);
    let integrity_errors = sim.handler.diagnostics().to_vec();
    Ok(SimOutput {
        sent_messages: sim.handler.sent_count(),
        abandoned_messages: sim.handler.abandoned_count(),
        undelivered_messages: sim.handler.outstanding(),
        bottleneck: sim.forward.stats(),
        reverse: sim.reverse.stats(),
        udp_packets: sim.udp.sent(),
        sender: sim.client.sender().map(|s| s.stats()).unwrap_or_default(),
        negotiated_idata: sim.client.negotiated_idata(),
        end_time: end,
        records: sim.handler.into_records(),
        pcap: sim.pcap,
        diagnostics,
        integrity_errors,
    })
}

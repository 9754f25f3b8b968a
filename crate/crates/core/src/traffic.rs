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

//! Traffic generators, the handler that feeds them into an association, and
//! per-stream delay recording.
//!
//! Generators only decide *when* and *how large*; the [`Handler`] owns the
//! association side and turns their output into user messages. Every payload
//! starts with the big-endian message index so deliveries can be matched back
//! to their send record and checked byte for byte.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::endpoint::Endpoint;
use crate::endpoint::EndpointError;
use crate::endpoint::EndpointEvent;
use crate::sched::StreamId;
use crate::sched::UserMessage;

/// Messages a saturated generator keeps queued: the one in transmission plus a full spare.
pub const SATURATION_DEPTH: usize = 2;
/// Bytes at the start of every payload holding the message index.
pub const INDEX_BYTES: usize = 4;
pub const DEFAULT_TYPENAME: &str = "TrafficgenSimple";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("generator {name}: {reason}")]
    InvalidConfig { name: String, reason: String },
    #[error("generator {name}: {source}")]
    Endpoint { name: String, source: EndpointError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeSpec {
    Fixed(usize),
    /// Inclusive uniform range.
    Uniform(usize, usize),
}

impl SizeSpec {
    pub fn min(self) -> usize {
        match self {
            SizeSpec::Fixed(s) => s,
            SizeSpec::Uniform(a, _) => a,
        }
    }

    pub fn max(self) -> usize {
        match self {
            SizeSpec::Fixed(s) => s,
            SizeSpec::Uniform(_, b) => b,
        }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            SizeSpec::Fixed(s) => s,
            SizeSpec::Uniform(a, b) => rng.random_range(a..=b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub typename: String,
    pub name: String,
    /// Stream the generator drives.
    pub id: StreamId,
    pub priority: u16,
    /// `-1` means unlimited.
    pub packet_count: i64,
    pub packet_size: SizeSpec,
    /// Seconds between messages; 0 means saturated.
    pub packet_interval: f64,
    pub start_time: f64,
    pub stop_time: f64,
    pub ordered: bool,
    pub lifetime: Option<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            typename: DEFAULT_TYPENAME.into(),
            name: String::new(),
            id: 0,
            priority: 0,
            packet_count: -1,
            packet_size: SizeSpec::Fixed(1000),
            packet_interval: 0.0,
            start_time: 0.0,
            stop_time: f64::INFINITY,
            ordered: true,
            lifetime: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |reason: &str| Err(TrafficError::InvalidConfig { name: self.name.clone(), reason: reason.to_string() });
        if self.typename != DEFAULT_TYPENAME {
            return bad(&format!("unsupported typename '{}'", self.typename));
        }
        if !(self.start_time < self.stop_time) || self.start_time < 0.0 {
            return bad("startTime must be non-negative and before stopTime");
        }
        if self.packet_size.min() < INDEX_BYTES || self.packet_size.min() > self.packet_size.max() {
            return bad("packetSize must be at least 4 bytes (the message index is carried in-band)");
        }
        if !(self.packet_interval >= 0.0) || !self.packet_interval.is_finite() {
            return bad("packetInterval must be non-negative");
        }
        if self.packet_count < -1 {
            return bad("packetCount must be -1 or a non-negative count");
        }
        if self.lifetime.is_some_and(|l| !(l > 0.0)) {
            return bad("lifetime must be positive");
        }
        Ok(())
    }

    pub fn is_saturated(&self) -> bool {
        self.packet_interval == 0.0
    }
}

/// Deterministic message content: the index, then filler derived from stream, index and offset.
pub fn message_payload(sid: StreamId, index: u32, size: usize) -> Vec<u8> {
    let mut p = Vec::with_capacity(size);
    p.extend_from_slice(&index.to_be_bytes()[..INDEX_BYTES.min(size)]);
    p.extend((INDEX_BYTES..size).map(|i| ((sid as usize * 131 + index as usize * 31 + i * 7) % 251) as u8));
    p
}

#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    rng: ChaCha8Rng,
    generated: u64,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self, TrafficError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1000 + cfg.id as u64);
        Ok(Generator { cfg, rng, generated: 0 })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    fn exhausted(&self) -> bool {
        self.cfg.packet_count >= 0 && self.generated >= self.cfg.packet_count as u64
    }

    /// True once the generator will never produce another message.
    pub fn finished(&self, now: f64) -> bool {
        self.exhausted() || now >= self.cfg.stop_time
    }

    /// Sizes of the messages to enqueue now. `queued` is the number of this stream's messages
    /// the sender has not finished transmitting.
    pub fn step(&mut self, now: f64, queued: usize) -> Vec<usize> {
        if now < self.cfg.start_time || now >= self.cfg.stop_time {
            return Vec::new();
        }
        let want = if self.cfg.is_saturated() { SATURATION_DEPTH.saturating_sub(queued) } else { 1 };
        let mut out = Vec::new();
        for _ in 0..want {
            if self.exhausted() {
                break;
            }
            out.push(self.cfg.packet_size.sample(&mut self.rng));
            self.generated += 1;
        }
        out
    }

    /// First time the generator should be stepped.
    pub fn first_tick(&self) -> f64 {
        self.cfg.start_time
    }

    /// Next paced tick after `now`; saturated generators have none and are topped up instead.
    pub fn next_tick(&self, now: f64) -> Option<f64> {
        if self.cfg.is_saturated() || self.finished(now) {
            return None;
        }
        let next = now + self.cfg.packet_interval;
        (next < self.cfg.stop_time).then_some(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRecord {
    pub stream: StreamId,
    pub msg_index: u32,
    pub size_bytes: usize,
    pub send_time: f64,
    pub delivery_time: f64,
}

impl DelayRecord {
    pub fn delay(&self) -> f64 {
        self.delivery_time - self.send_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamStats {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub count: usize,
}

/// Mean, median and 99th percentile (nearest rank) of `values`.
pub fn stream_stats(values: &[f64]) -> Option<StreamStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
    Some(StreamStats { mean: v.iter().sum::<f64>() / n as f64, median, p99: v[rank - 1], count: n })
}

#[derive(Debug, Clone, Copy)]
struct SendRecord {
    send_time: f64,
    size: usize,
    delivered: bool,
    abandoned: bool,
}

/// Owns the generators and the bookkeeping between sent and delivered messages.
#[derive(Debug, Clone)]
pub struct Handler {
    generators: Vec<Generator>,
    sent: BTreeMap<(StreamId, u32), SendRecord>,
    next_index: BTreeMap<StreamId, u32>,
    message_ids: BTreeMap<crate::sched::MessageId, (StreamId, u32)>,
    records: Vec<DelayRecord>,
    diagnostics: Vec<String>,
}

impl Handler {
    pub fn new(configs: Vec<GeneratorConfig>, seed: u64) -> Result<Self, TrafficError> {
        let mut seen = BTreeMap::new();
        for c in &configs {
            if let Some(other) = seen.insert(c.id, c.name.clone()) {
                return Err(TrafficError::InvalidConfig {
                    name: c.name.clone(),
                    reason: format!("stream {} already driven by generator {other}", c.id),
                });
            }
        }
        let generators = configs.into_iter().map(|c| Generator::new(c, seed)).collect::<Result<_, _>>()?;
        Ok(Handler {
            generators,
            sent: BTreeMap::new(),
            next_index: BTreeMap::new(),
            message_ids: BTreeMap::new(),
            records: Vec::new(),
            diagnostics: Vec::new(),
        })
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn records(&self) -> &[DelayRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DelayRecord> {
        self.records
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn sent_count(&self) -> usize {
        self.sent.len()
    }

    pub fn abandoned_count(&self) -> usize {
        self.sent.values().filter(|r| r.abandoned).count()
    }

    /// Messages neither delivered nor abandoned.
    pub fn outstanding(&self) -> usize {
        self.sent.values().filter(|r| !r.delivered && !r.abandoned).count()
    }

    /// All generators are done and every message has been accounted for.
    pub fn complete(&self, now: f64) -> bool {
        self.generators.iter().all(|g| g.finished(now)) && self.outstanding() == 0
    }

    fn enqueue(&mut self, gen: usize, sizes: Vec<usize>, now: f64, ep: &mut Endpoint) -> Result<Vec<EndpointEvent>, TrafficError> {
        let cfg = self.generators[gen].config().clone();
        let mut events = Vec::new();
        for size in sizes {
            let idx = self.next_index.entry(cfg.id).or_insert(0);
            let index = *idx;
            *idx += 1;
            let msg = UserMessage {
                sid: cfg.id,
                payload: message_payload(cfg.id, index, size),
                ordered: cfg.ordered,
                ppid: 0,
                enqueue_time: now,
                lifetime: cfg.lifetime,
            };
            let (id, ev) = ep.send_message(msg, now).map_err(|source| TrafficError::Endpoint { name: cfg.name.clone(), source })?;
            self.message_ids.insert(id, (cfg.id, index));
            self.sent.insert((cfg.id, index), SendRecord { send_time: now, size, delivered: false, abandoned: false });
            events.extend(ev);
        }
        Ok(events)
    }

    /// Paced tick of generator `gen`; returns endpoint events and the next tick time.
    pub fn on_tick(&mut self, gen: usize, now: f64, ep: &mut Endpoint) -> Result<(Vec<EndpointEvent>, Option<f64>), TrafficError> {
        if !ep.is_established() {
            // Retry shortly; the association is still coming up.
            let g = &self.generators[gen];
            let retry = (!g.finished(now)).then_some(now + 0.001);
            return Ok((Vec::new(), retry));
        }
        let events = if self.generators[gen].config().is_saturated() {
            self.top_up(now, ep)?
        } else {
            let queued = self.queued(gen, ep);
            let sizes = self.generators[gen].step(now, queued);
            self.enqueue(gen, sizes, now, ep)?
        };
        Ok((events, self.generators[gen].next_tick(now)))
    }

    fn queued(&self, gen: usize, ep: &Endpoint) -> usize {
        let sid = self.generators[gen].config().id;
        ep.sender().and_then(|s| s.scheduler().stream(sid)).map_or(0, |q| q.len())
    }

    /// Keeps every saturated generator's stream at its target depth.
    pub fn top_up(&mut self, now: f64, ep: &mut Endpoint) -> Result<Vec<EndpointEvent>, TrafficError> {
        let mut events = Vec::new();
        if !ep.is_established() {
            return Ok(events);
        }
        for gen in 0..self.generators.len() {
            if !self.generators[gen].config().is_saturated() {
                continue;
            }
            let queued = self.queued(gen, ep);
            let sizes = self.generators[gen].step(now, queued);
            if !sizes.is_empty() {
                events.extend(self.enqueue(gen, sizes, now, ep)?);
            }
        }
        Ok(events)
    }

    /// Matches a delivery to its send record and checks its content.
    pub fn record_delivery(&mut self, sid: StreamId, payload: &[u8], at: f64) {
        if payload.len() < INDEX_BYTES {
            self.diagnostics.push(format!("stream {sid}: delivery of {} bytes too short to carry an index", payload.len()));
            return;
        }
        let index = u32::from_be_bytes(payload[..INDEX_BYTES].try_into().expect("length checked"));
        let Some(rec) = self.sent.get_mut(&(sid, index)) else {
            self.diagnostics.push(format!("stream {sid}: unmatched delivery of message {index}"));
            return;
        };
        if rec.delivered {
            self.diagnostics.push(format!("stream {sid}: message {index} delivered twice"));
            return;
        }
        if payload != message_payload(sid, index, rec.size).as_slice() {
            self.diagnostics.push(format!("stream {sid}: message {index} payload corrupted"));
        }
        rec.delivered = true;
        self.records.push(DelayRecord { stream: sid, msg_index: index, size_bytes: rec.size, send_time: rec.send_time, delivery_time: at });
    }

    pub fn record_abandoned(&mut self, message_id: crate::sched::MessageId) {
        if let Some(key) = self.message_ids.get(&message_id) {
            if let Some(rec) = self.sent.get_mut(key) {
                rec.abandoned = true;
            }
        }
    }

    /// Per-stream statistics over the recorded delays.
    pub fn stats(&self) -> BTreeMap<StreamId, StreamStats> {
        let mut by_stream: BTreeMap<StreamId, Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            by_stream.entry(r.stream).or_default().push(r.delay());
        }
        by_stream.into_iter().filter_map(|(s, v)| stream_stats(&v).map(|st| (s, st))).collect()
    }
}

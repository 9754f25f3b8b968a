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

//! Send side: TSN assignment, the retransmission queue, SACK processing and
//! partial-reliability abandonment.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use super::serial::unwrap_initial;
use super::serial::unwrap_near;
use super::AssociationConfig;
use super::EndpointEvent;
use super::TimerKind;
use super::Timers;
use crate::sched::MessageId;
use crate::sched::OutChunk;
use crate::sched::SchedError;
use crate::sched::Scheduler;
use crate::sched::SchedulerMode;
use crate::sched::StreamId;
use crate::sched::UserMessage;
use crate::wire::Chunk;
use crate::wire::ChunkFlags;
use crate::wire::DataChunk;
use crate::wire::ForwardTsnChunk;
use crate::wire::IDataChunk;
use crate::wire::IForwardTsnChunk;
use crate::wire::SackChunk;
use crate::wire::SctpPacket;
use crate::wire::SkippedMid;
use crate::wire::SkippedSsn;
use crate::wire::DATA_HEADER_SIZE;
use crate::wire::IDATA_HEADER_SIZE;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderStats {
    /// Data chunks sent for the first time.
    pub chunks_sent: u64,
    pub retransmissions: u64,
    pub fast_retransmissions: u64,
    pub t3_expiries: u64,
    pub forward_tsns_sent: u64,
    pub messages_abandoned: u64,
}

#[derive(Debug, Clone)]
struct Outstanding {
    tsn: u64,
    chunk: OutChunk,
    transmit_count: u32,
    last_sent: f64,
    acked: bool,
    abandoned: bool,
    miss_count: u32,
    fast_retransmitted: bool,
}

impl Outstanding {
    fn in_flight(&self) -> bool {
        !self.acked && !self.abandoned
    }
}

/// A started message that was abandoned and still has to be announced in a forward-tsn.
#[derive(Debug, Clone, Copy)]
struct Skip {
    sid: StreamId,
    ordered: bool,
    seq: u32,
    /// Lowest TSN of the message still held; the advanced point never stops between the two.
    min_tsn: u64,
    /// Highest TSN the message used; announced once the advanced point covers it.
    max_tsn: u64,
    announced: bool,
}

#[derive(Debug, Clone)]
pub struct Sender {
    sched: Scheduler,
    idata: bool,
    src_port: u16,
    dst_port: u16,
    peer_tag: u32,
    packet_budget: usize,
    max_inflight: usize,
    fr_threshold: u32,
    initial_rto: f64,
    rto: f64,
    next_tsn: u64,
    cum_ack: u64,
    outstanding: VecDeque<Outstanding>,
    skips: BTreeMap<MessageId, Skip>,
    /// Last TSN of each message that has been started but not finished.
    in_progress: BTreeMap<MessageId, u64>,
    /// Advanced-peer-ack point last announced.
    last_forward: Option<u64>,
    lifetime_deadline: Option<f64>,
    stats: SenderStats,
}

impl Sender {
    pub(crate) fn new(cfg: &AssociationConfig, idata: bool, mode: SchedulerMode, stream_count: usize, peer_tag: u32) -> Self {
        let header = if idata { IDATA_HEADER_SIZE } else { DATA_HEADER_SIZE };
        let initial = unwrap_initial(cfg.initial_tsn);
        Sender {
            sched: Scheduler::new(cfg.scheduler, mode, stream_count, cfg.effective_max_fragment(idata), header),
            idata,
            src_port: cfg.local_port,
            dst_port: cfg.peer_port,
            peer_tag,
            packet_budget: cfg.packet_budget(),
            max_inflight: cfg.max_inflight,
            fr_threshold: cfg.fast_retransmit_threshold,
            initial_rto: cfg.rto,
            rto: cfg.rto,
            next_tsn: initial,
            cum_ack: initial - 1,
            outstanding: VecDeque::new(),
            skips: BTreeMap::new(),
            in_progress: BTreeMap::new(),
            last_forward: None,
            lifetime_deadline: None,
            stats: SenderStats::default(),
        }
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.sched
    }

    pub fn stats(&self) -> SenderStats {
        self.stats
    }

    pub fn rto(&self) -> f64 {
        self.rto
    }

    /// Chunks neither acknowledged nor abandoned.
    pub fn inflight(&self) -> usize {
        self.outstanding.iter().filter(|o| o.in_flight()).count()
    }

    /// Entries still held for retransmission or awaiting cumulative acknowledgement.
    pub fn outstanding_len(&self) -> usize {
        self.outstanding.len()
    }

    pub fn next_tsn(&self) -> u32 {
        self.next_tsn as u32
    }

    pub fn cumulative_ack(&self) -> u32 {
        self.cum_ack as u32
    }

    /// True when nothing is queued, unacknowledged or waiting for a forward-tsn.
    pub fn is_idle(&self) -> bool {
        self.sched.is_empty() && self.outstanding.is_empty() && self.skips.is_empty()
    }

    pub(crate) fn set_priority(&mut self, sid: StreamId, priority: u16) -> Result<(), SchedError> {
        self.sched.set_priority(sid, priority)
    }

    pub(crate) fn enqueue(&mut self, msg: UserMessage) -> Result<MessageId, SchedError> {
        self.sched.enqueue(msg)
    }

    fn packet(&self, chunks: Vec<Chunk>) -> SctpPacket {
        SctpPacket { chunks, ..SctpPacket::new(self.src_port, self.dst_port, self.peer_tag) }
    }

    fn wire_chunk(&self, tsn: u64, c: &OutChunk) -> Chunk {
        if self.idata {
            Chunk::IData(IDataChunk::new(c.flags, tsn as u32, c.sid, c.seq, c.ppid, c.fsn, c.payload.clone()))
        } else {
            Chunk::Data(DataChunk { flags: c.flags, tsn: tsn as u32, sid: c.sid, ssn: c.seq as u16, ppid: c.ppid, payload: c.payload.clone() })
        }
    }

    /// Sends new data while the window allows, bundling up to the MTU.
    pub(crate) fn pump(&mut self, now: f64, timers: &mut Timers, events: &mut Vec<EndpointEvent>) {
        self.abandon_expired(now, timers, events);
        loop {
            let mut chunks = Vec::new();
            let mut budget = self.packet_budget;
            while self.inflight() < self.max_inflight {
                let Some(c) = self.sched.next_chunk(budget) else { break };
                let tsn = self.next_tsn;
                self.next_tsn += 1;
                if c.flags.end {
                    self.in_progress.remove(&c.message_id);
                } else {
                    self.in_progress.insert(c.message_id, tsn);
                }
                let wire = self.wire_chunk(tsn, &c);
                budget -= wire.wire_size();
                chunks.push(wire);
                self.stats.chunks_sent += 1;
                self.outstanding.push_back(Outstanding {
                    tsn,
                    chunk: c,
                    transmit_count: 1,
                    last_sent: now,
                    acked: false,
                    abandoned: false,
                    miss_count: 0,
                    fast_retransmitted: false,
                });
            }
            if chunks.is_empty() {
                break;
            }
            events.push(EndpointEvent::PacketOut(self.packet(chunks)));
            if !timers.is_running(TimerKind::Retransmit) {
                timers.start(TimerKind::Retransmit, now + self.rto, events);
            }
        }
        self.arm_lifetime(timers, events);
    }

    fn arm_lifetime(&mut self, timers: &mut Timers, events: &mut Vec<EndpointEvent>) {
        let outstanding = self.outstanding.iter().filter(|o| o.in_flight()).filter_map(|o| o.chunk.expires_at);
        let next = self.sched.next_deadline().into_iter().chain(outstanding).min_by(f64::total_cmp);
        if next == self.lifetime_deadline && timers.is_running(TimerKind::Lifetime) == next.is_some() {
            return;
        }
        self.lifetime_deadline = next;
        match next {
            Some(t) => timers.start(TimerKind::Lifetime, t, events),
            None => timers.stop(TimerKind::Lifetime, events),
        }
    }

    /// Abandons messages whose lifetime has elapsed and announces the new advanced-peer-ack point.
    pub(crate) fn abandon_expired(&mut self, now: f64, timers: &mut Timers, events: &mut Vec<EndpointEvent>) {
        let mut newly: BTreeMap<MessageId, (StreamId, bool, u32)> = BTreeMap::new();
        for o in self.outstanding.iter_mut() {
            if o.in_flight() && o.chunk.expires_at.is_some_and(|d| d <= now) {
                o.abandoned = true;
                newly.insert(o.chunk.message_id, (o.chunk.sid, o.chunk.ordered, o.chunk.seq));
            }
        }
        // The scheduler holds the unsent remainders; drop those too.
        for a in self.sched.expire(now) {
            if let Some(seq) = a.seq {
                newly.insert(a.message_id, (a.sid, a.ordered, seq));
            } else {
                self.stats.messages_abandoned += 1;
                events.push(EndpointEvent::MessageAbandoned { sid: a.sid, message_id: a.message_id });
            }
        }
        for (id, (sid, ordered, seq)) in newly {
            // Partially sent messages may be abandoned piecewise; mark every sent fragment.
            let partial = self.in_progress.remove(&id);
            let (mut min_tsn, mut max_tsn) = (None, partial);
            for o in self.outstanding.iter_mut().filter(|o| o.chunk.message_id == id) {
                if !o.acked {
                    o.abandoned = true;
                }
                min_tsn = Some(min_tsn.map_or(o.tsn, |m: u64| m.min(o.tsn)));
                max_tsn = Some(max_tsn.map_or(o.tsn, |m: u64| m.max(o.tsn)));
            }
            if partial.is_some() {
                let reserved = self.reserve_skip_tsn(id, sid, seq, ordered);
                min_tsn.get_or_insert(reserved);
                max_tsn = Some(reserved);
            }
            self.sched.abandon(id);
            if !self.skips.contains_key(&id) {
                self.stats.messages_abandoned += 1;
                events.push(EndpointEvent::MessageAbandoned { sid, message_id: id });
                if let (Some(min_tsn), Some(max_tsn)) = (min_tsn.or(max_tsn), max_tsn) {
                    self.skips.insert(id, Skip { sid, ordered, seq, min_tsn, max_tsn, announced: false });
                }
            }
        }
        self.maybe_forward(now, false, timers, events);
    }

    /// Burns a TSN for the unsent tail of a partially sent message. It is never
    /// transmitted, so the peer's cumulative ack can only pass it through a
    /// forward-tsn, which confirms that the skip arrived.
    fn reserve_skip_tsn(&mut self, message_id: MessageId, sid: StreamId, seq: u32, ordered: bool) -> u64 {
        let tsn = self.next_tsn;
        self.next_tsn += 1;
        let chunk = OutChunk {
            message_id,
            sid,
            seq,
            ordered,
            fsn: 0,
            flags: ChunkFlags::default(),
            ppid: 0,
            payload: Vec::new(),
            expires_at: None,
        };
        self.outstanding.push_back(Outstanding {
            tsn,
            chunk,
            transmit_count: 0,
            last_sent: f64::NEG_INFINITY,
            acked: false,
            abandoned: true,
            miss_count: 0,
            fast_retransmitted: false,
        });
        tsn
    }

    /// End of the leading run of acked-or-abandoned entries, if that run contains an abandoned one.
    fn advanced_point(&self) -> Option<u64> {
        let mut point = None;
        let mut any_abandoned = false;
        for o in &self.outstanding {
            if o.in_flight() {
                break;
            }
            any_abandoned |= o.abandoned;
            point = Some(o.tsn);
        }
        // Back off so no abandoned message is covered only in part; its skip
        // entry would otherwise be missing from the chunk that passes its TSNs.
        while let Some(p) = point {
            match self.skips.values().filter(|s| s.min_tsn <= p && p < s.max_tsn).map(|s| s.min_tsn).min() {
                Some(m) if m > self.cum_ack + 1 => point = Some(m - 1),
                Some(_) => point = None,
                None => break,
            }
        }
        point.filter(|_| any_abandoned)
    }

    fn forward_chunk(&self, point: u64) -> Chunk {
        let covered = self.skips.values().filter(|s| s.max_tsn <= point);
        if self.idata {
            let mut latest: BTreeMap<(StreamId, bool), u32> = BTreeMap::new();
            for s in covered {
                let e = latest.entry((s.sid, !s.ordered)).or_insert(s.seq);
                if super::serial::serial_lt(*e, s.seq, 32) {
                    *e = s.seq;
                }
            }
            let skipped = latest.into_iter().map(|((sid, unordered), mid)| SkippedMid { sid, unordered, mid }).collect();
            Chunk::IForwardTsn(IForwardTsnChunk { new_cum_tsn: point as u32, skipped })
        } else {
            // Unordered DATA messages need no stream entry.
            let mut latest: BTreeMap<StreamId, u16> = BTreeMap::new();
            for s in covered.filter(|s| s.ordered) {
                let ssn = s.seq as u16;
                let e = latest.entry(s.sid).or_insert(ssn);
                if super::serial::serial_lt(*e as u32, ssn as u32, 16) {
                    *e = ssn;
                }
            }
            let skipped = latest.into_iter().map(|(sid, ssn)| SkippedSsn { sid, ssn }).collect();
            Chunk::ForwardTsn(ForwardTsnChunk { new_cum_tsn: point as u32, skipped })
        }
    }

    /// New cumulative TSN a forward-tsn should announce, if one is due.
    fn forward_target(&self) -> Option<u64> {
        let point = self.advanced_point().unwrap_or(self.cum_ack).max(self.cum_ack);
        let needed = point > self.cum_ack || self.skips.values().any(|s| s.max_tsn <= point);
        needed.then_some(point)
    }

    /// Emits a forward-tsn when the advanced point moved or a covered skip is unannounced.
    fn maybe_forward(&mut self, now: f64, resend: bool, timers: &mut Timers, events: &mut Vec<EndpointEvent>) {
        let Some(point) = self.forward_target() else { return };
        let fresh = self.last_forward.is_none_or(|l| l < point)
            || self.skips.values().any(|s| s.max_tsn <= point && !s.announced);
        if !resend && !fresh {
            return;
        }
        let chunk = self.forward_chunk(point);
        events.push(EndpointEvent::PacketOut(self.packet(vec![chunk])));
        for s in self.skips.values_mut().filter(|s| s.max_tsn <= point) {
            s.announced = true;
        }
        self.last_forward = Some(point);
        self.stats.forward_tsns_sent += 1;
        if !timers.is_running(TimerKind::Retransmit) {
            timers.start(TimerKind::Retransmit, now + self.rto, events);
        }
    }

    pub(crate) fn on_sack(&mut self, sack: &SackChunk, now: f64, timers: &mut Timers, events: &mut Vec<EndpointEvent>) {
        let cum = unwrap_near(self.cum_ack, sack.cum_tsn_ack, 32);
        if cum < self.cum_ack {
            events.push(EndpointEvent::Diagnostic(format!("SACK cum ack {} moves backwards; ignored", sack.cum_tsn_ack)));
            return;
        }
        if cum >= self.next_tsn {
            events.push(EndpointEvent::Diagnostic(format!("SACK cum ack {} beyond sent data; ignored", sack.cum_tsn_ack)));
            return;
        }
        let mut highest_new: Option<u64> = None;
        let mut cum_moved = cum > self.cum_ack;
        for o in self.outstanding.iter_mut() {
            let gap_acked = o.tsn > cum
                && sack.gap_blocks.iter().any(|g| o.tsn >= cum + g.start as u64 && o.tsn <= cum + g.end as u64);
            if (o.tsn <= cum || gap_acked) && !o.acked {
                if !o.abandoned {
                    highest_new = Some(highest_new.map_or(o.tsn, |h: u64| h.max(o.tsn)));
                }
                o.acked = true;
            }
        }
        self.cum_ack = cum;
        let mut fast = Vec::new();
        if let Some(h) = highest_new {
            for o in self.outstanding.iter_mut() {
                if o.tsn < h && o.in_flight() && !o.fast_retransmitted {
                    o.miss_count += 1;
                    if o.miss_count >= self.fr_threshold {
                        o.fast_retransmitted = true;
                        fast.push(o.tsn);
                    }
                }
            }
        }
        while self.outstanding.front().is_some_and(|o| o.tsn <= cum) {
            self.outstanding.pop_front();
        }
        self.skips.retain(|_, s| !(s.announced && s.max_tsn <= cum));
        if self.last_forward.is_some_and(|l| l <= cum) && self.skips.is_empty() {
            self.last_forward = None;
        }
        if !fast.is_empty() {
            self.stats.fast_retransmissions += fast.len() as u64;
            self.retransmit(&fast, now, events);
        }
        cum_moved |= highest_new.is_some();
        if cum_moved {
            self.rto = self.initial_rto;
            if self.outstanding.iter().any(Outstanding::in_flight) || self.last_forward.is_some() {
                timers.start(TimerKind::Retransmit, now + self.rto, events);
            } else {
                timers.stop(TimerKind::Retransmit, events);
            }
        }
        self.maybe_forward(now, false, timers, events);
        self.pump(now, timers, events);
    }

    /// Resends the given TSNs, packing as many per packet as fit.
    fn retransmit(&mut self, tsns: &[u64], now: f64, events: &mut Vec<EndpointEvent>) {
        let mut chunks: Vec<Chunk> = Vec::new();
        let mut used = 0;
        for &tsn in tsns {
            let Some(idx) = self.outstanding.iter().position(|o| o.tsn == tsn) else { continue };
            let wire = self.wire_chunk(tsn, &self.outstanding[idx].chunk);
            if used + wire.wire_size() > self.packet_budget && !chunks.is_empty() {
                events.push(EndpointEvent::PacketOut(self.packet(std::mem::take(&mut chunks))));
                used = 0;
            }
            used += wire.wire_size();
            chunks.push(wire);
            let o = &mut self.outstanding[idx];
            o.transmit_count += 1;
            o.last_sent = now;
            self.stats.retransmissions += 1;
        }
        if !chunks.is_empty() {
            events.push(EndpointEvent::PacketOut(self.packet(chunks)));
        }
    }

    pub(crate) fn on_t3_expiry(&mut self, now: f64, timers: &mut Timers, events: &mut Vec<EndpointEvent>) {
        self.abandon_expired(now, timers, events);
        let pending_forward = self.forward_target().is_some();
        let mut resend = Vec::new();
        let mut used = 0;
        for o in self.outstanding.iter_mut().filter(|o| o.in_flight()) {
            let size = o.chunk.payload.len() + if self.idata { IDATA_HEADER_SIZE } else { DATA_HEADER_SIZE };
            let size = (size + 3) & !3;
            if used + size > self.packet_budget {
                break;
            }
            used += size;
            o.miss_count = 0;
            o.fast_retransmitted = false;
            resend.push(o.tsn);
        }
        if resend.is_empty() && !pending_forward {
            return;
        }
        self.stats.t3_expiries += 1;
        self.rto = (self.rto * 2.0).min(self.initial_rto * 8.0);
        if pending_forward {
            self.maybe_forward(now, true, timers, events);
        }
        self.retransmit(&resend, now, events);
        timers.start(TimerKind::Retransmit, now + self.rto, events);
    }

    /// Transmit count of the chunk with this TSN, if still held.
    pub fn transmit_count(&self, tsn: u32) -> Option<u32> {
        let t = unwrap_near(self.cum_ack, tsn, 32);
        self.outstanding.iter().find(|o| o.tsn == t).map(|o| o.transmit_count)
    }

    /// Time the chunk with this TSN was last put on the wire.
    pub fn last_sent(&self, tsn: u32) -> Option<f64> {
        let t = unwrap_near(self.cum_ack, tsn, 32);
        self.outstanding.iter().find(|o| o.tsn == t).map(|o| o.last_sent)
    }
}

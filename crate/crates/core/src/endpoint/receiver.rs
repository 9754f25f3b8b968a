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

//! Receive side: TSN bookkeeping, reassembly and ordered delivery.
//!
//! DATA fragments are reassembled per stream by walking consecutive TSNs from
//! a B fragment to an E fragment. I-DATA fragments are keyed by
//! `(sid, unordered, mid)` and reassembled by FSN, so fragments of different
//! messages may arrive interleaved.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use super::serial::serial_lt;
use super::serial::unwrap_initial;
use super::serial::unwrap_near;
use crate::sched::StreamId;
use crate::wire::ChunkFlags;
use crate::wire::DataChunk;
use crate::wire::GapBlock;
use crate::wire::IDataChunk;
use crate::wire::SackChunk;
use crate::wire::SkippedMid;
use crate::wire::SkippedSsn;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub sid: StreamId,
    pub ppid: u32,
    pub ordered: bool,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
struct DataFragment {
    ssn: u16,
    flags: ChunkFlags,
    ppid: u32,
    payload: Vec<u8>,
}

#[derive(Debug, Default, Clone)]
struct Assembly {
    fragments: BTreeMap<u32, Vec<u8>>,
    ppid: Option<u32>,
    last_fsn: Option<u32>,
}

impl Assembly {
    fn is_complete(&self) -> bool {
        match (self.ppid, self.last_fsn) {
            (Some(_), Some(last)) => self.fragments.len() as u64 == last as u64 + 1,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
struct InboundStream {
    /// Next ordered message number to deliver (unwrapped SSN or MID).
    next_expected: u64,
    /// Complete ordered messages waiting for `next_expected`.
    ready: BTreeMap<u64, Delivery>,
    /// DATA fragments by unwrapped TSN.
    data_fragments: BTreeMap<u64, DataFragment>,
}

/// Receiver half of an association.
#[derive(Debug, Clone)]
pub struct Receiver {
    idata: bool,
    seq_bits: u32,
    cum_tsn: u64,
    received: BTreeSet<u64>,
    duplicates: Vec<u32>,
    streams: Vec<InboundStream>,
    assemblies: BTreeMap<(StreamId, bool, u32), Assembly>,
    a_rwnd: u32,
}

/// Outcome of accepting one data chunk.
#[derive(Debug, Default)]
pub struct DataOutcome {
    pub deliveries: Vec<Delivery>,
    pub diagnostics: Vec<String>,
}

impl Receiver {
    pub fn new(peer_initial_tsn: u32, stream_count: usize, idata: bool, a_rwnd: u32) -> Self {
        let seq_bits = if idata { 32 } else { 16 };
        Receiver {
            idata,
            seq_bits,
            cum_tsn: unwrap_initial(peer_initial_tsn) - 1,
            received: BTreeSet::new(),
            duplicates: Vec::new(),
            streams: (0..stream_count)
                .map(|_| InboundStream {
                    next_expected: unwrap_initial(0),
                    ready: BTreeMap::new(),
                    data_fragments: BTreeMap::new(),
                })
                .collect(),
            assemblies: BTreeMap::new(),
            a_rwnd,
        }
    }

    pub fn cumulative_tsn(&self) -> u32 {
        self.cum_tsn as u32
    }

    /// TSNs received above the cumulative point.
    pub fn received_above_cum(&self) -> Vec<u32> {
        self.received.iter().map(|&t| t as u32).collect()
    }

    pub fn next_expected(&self, sid: StreamId) -> Option<u32> {
        self.streams.get(sid as usize).map(|s| s.next_expected as u32)
    }

    /// Number of messages in partial reassembly or waiting for order.
    pub fn buffered(&self) -> usize {
        self.assemblies.len()
            + self.streams.iter().map(|s| s.ready.len()).sum::<usize>()
            + self.streams.iter().filter(|s| !s.data_fragments.is_empty()).count()
    }

    /// Records the TSN; returns false for a duplicate.
    fn record_tsn(&mut self, tsn: u32) -> bool {
        let t = unwrap_near(self.cum_tsn, tsn, 32);
        if t <= self.cum_tsn || !self.received.insert(t) {
            self.duplicates.push(tsn);
            return false;
        }
        self.advance_cum();
        true
    }

    fn advance_cum(&mut self) {
        while self.received.remove(&(self.cum_tsn + 1)) {
            self.cum_tsn += 1;
        }
    }

    pub fn on_data(&mut self, chunk: &DataChunk) -> DataOutcome {
        let mut out = DataOutcome::default();
        if self.idata {
            out.diagnostics.push(format!("DATA chunk tsn {} received on an I-DATA association; dropped", chunk.tsn));
            return out;
        }
        let Some(stream_count) = self.check_sid(chunk.sid, &mut out) else { return out };
        debug_assert!(stream_count > 0);
        let unwrapped = unwrap_near(self.cum_tsn, chunk.tsn, 32);
        if !self.record_tsn(chunk.tsn) {
            return out;
        }
        let stream = &mut self.streams[chunk.sid as usize];
        stream.data_fragments.insert(
            unwrapped,
            DataFragment { ssn: chunk.ssn, flags: chunk.flags, ppid: chunk.ppid, payload: chunk.payload.clone() },
        );
        self.try_assemble_data(chunk.sid, unwrapped, &mut out);
        out
    }

    fn check_sid(&self, sid: StreamId, out: &mut DataOutcome) -> Option<usize> {
        if (sid as usize) < self.streams.len() {
            Some(self.streams.len())
        } else {
            out.diagnostics.push(format!("data for unknown stream {sid}; dropped"));
            None
        }
    }

    fn try_assemble_data(&mut self, sid: StreamId, tsn: u64, out: &mut DataOutcome) {
        let frags = &self.streams[sid as usize].data_fragments;
        let mut first = tsn;
        loop {
            let f = &frags[&first];
            if f.flags.begin {
                break;
            }
            match frags.get(&(first - 1)) {
                Some(prev) if !prev.flags.end => first -= 1,
                _ => return,
            }
        }
        let mut last = tsn;
        loop {
            let f = &frags[&last];
            if f.flags.end {
                break;
            }
            match frags.get(&(last + 1)) {
                Some(next) if !next.flags.begin => last += 1,
                _ => return,
            }
        }
        let head = &frags[&first];
        let (ssn, unordered, ppid) = (head.ssn, head.flags.unordered, head.ppid);
        let consistent = (first..=last).all(|t| {
            let f = &frags[&t];
            f.flags.unordered == unordered && (unordered || f.ssn == ssn)
        });
        let stream = &mut self.streams[sid as usize];
        let pieces: Vec<DataFragment> = (first..=last).filter_map(|t| stream.data_fragments.remove(&t)).collect();
        if !consistent {
            out.diagnostics.push(format!(
                "stream {sid}: fragments at TSN {}..={} disagree on U flag or SSN; dropped",
                first as u32, last as u32
            ));
            return;
        }
        let payload: Vec<u8> = pieces.into_iter().flat_map(|p| p.payload).collect();
        let delivery = Delivery { sid, ppid, ordered: !unordered, payload };
        if unordered {
            out.deliveries.push(delivery);
        } else {
            self.complete_ordered(sid, ssn as u32, delivery, out);
        }
    }

    pub fn on_idata(&mut self, chunk: &IDataChunk) -> DataOutcome {
        let mut out = DataOutcome::default();
        if !self.idata {
            out.diagnostics.push(format!("I-DATA chunk tsn {} received on a DATA association; dropped", chunk.tsn));
            return out;
        }
        if self.check_sid(chunk.sid, &mut out).is_none() {
            return out;
        }
        if !self.record_tsn(chunk.tsn) {
            return out;
        }
        let unordered = chunk.flags.unordered;
        if !unordered {
            let mid = unwrap_near(self.streams[chunk.sid as usize].next_expected, chunk.mid, 32);
            if mid < self.streams[chunk.sid as usize].next_expected {
                out.diagnostics.push(format!("stream {}: I-DATA for already passed MID {}; dropped", chunk.sid, chunk.mid));
                return out;
            }
        }
        let key = (chunk.sid, unordered, chunk.mid);
        let asm = self.assemblies.entry(key).or_default();
        let fsn = chunk.fsn();
        if asm.fragments.contains_key(&fsn) {
            out.diagnostics.push(format!("stream {} MID {}: FSN {fsn} received twice; dropped", chunk.sid, chunk.mid));
            return out;
        }
        asm.fragments.insert(fsn, chunk.payload.clone());
        if let Some(ppid) = chunk.ppid() {
            asm.ppid = Some(ppid);
        }
        if chunk.flags.end {
            asm.last_fsn = Some(fsn);
        }
        if asm.is_complete() {
            let asm = self.assemblies.remove(&key).expect("present");
            let delivery = Delivery {
                sid: chunk.sid,
                ppid: asm.ppid.expect("complete"),
                ordered: !unordered,
                payload: asm.fragments.into_values().flatten().collect(),
            };
            if unordered {
                out.deliveries.push(delivery);
            } else {
                self.complete_ordered(chunk.sid, chunk.mid, delivery, &mut out);
            }
        }
        out
    }

    fn complete_ordered(&mut self, sid: StreamId, seq: u32, delivery: Delivery, out: &mut DataOutcome) {
        let bits = self.seq_bits;
        let stream = &mut self.streams[sid as usize];
        let key = unwrap_near(stream.next_expected, seq, bits);
        if key < stream.next_expected {
            out.diagnostics.push(format!("stream {sid}: message {seq} already delivered or skipped; dropped"));
            return;
        }
        stream.ready.insert(key, delivery);
        Self::release(stream, out);
    }

    fn release(stream: &mut InboundStream, out: &mut DataOutcome) {
        while let Some(d) = stream.ready.remove(&stream.next_expected) {
            out.deliveries.push(d);
            stream.next_expected += 1;
        }
    }

    /// Moves the cumulative TSN forward to `new_cum`. Returns false for a stale value.
    fn forward_cum(&mut self, new_cum: u32) -> Option<u64> {
        let target = unwrap_near(self.cum_tsn, new_cum, 32);
        if target < self.cum_tsn {
            return None;
        }
        if target > self.cum_tsn {
            self.cum_tsn = target;
            self.received = self.received.split_off(&(target + 1));
            self.advance_cum();
        }
        Some(target)
    }

    fn skip_ordered(&mut self, sid: StreamId, seq: u32, out: &mut DataOutcome) {
        let bits = self.seq_bits;
        let Some(stream) = self.streams.get_mut(sid as usize) else {
            out.diagnostics.push(format!("forward-tsn names unknown stream {sid}"));
            return;
        };
        let skipped = unwrap_near(stream.next_expected, seq, bits);
        if skipped < stream.next_expected {
            return;
        }
        // Complete messages up to the skip point still deliver, in order.
        let later = stream.ready.split_off(&(skipped + 1));
        let earlier = std::mem::replace(&mut stream.ready, later);
        out.deliveries.extend(earlier.into_values());
        stream.next_expected = skipped + 1;
        Self::release(stream, out);
    }

    /// Every TSN up to `cum` is now received or skipped, so a fragment at or
    /// below it survives only as part of a chain from a B fragment through
    /// `cum` that later TSNs can still complete.
    fn drop_dead_fragments(stream: &mut InboundStream, cum: u64) {
        let frags = &stream.data_fragments;
        let mut live_from = None;
        if frags.get(&cum).is_some_and(|f| !f.flags.end) {
            let mut t = cum;
            loop {
                if frags[&t].flags.begin {
                    live_from = Some(t);
                    break;
                }
                match t.checked_sub(1).and_then(|p| frags.get(&p)) {
                    Some(prev) if !prev.flags.end => t -= 1,
                    _ => break,
                }
            }
        }
        stream.data_fragments.retain(|&t, _| t > cum || live_from.is_some_and(|b| t >= b));
    }

    pub fn on_forward_tsn(&mut self, new_cum_tsn: u32, skipped: &[SkippedSsn]) -> DataOutcome {
        let mut out = DataOutcome::default();
        if self.idata {
            out.diagnostics.push("FORWARD-TSN received on an I-DATA association; dropped".into());
            return out;
        }
        if self.forward_cum(new_cum_tsn).is_none() {
            return out;
        }
        let cum = self.cum_tsn;
        for stream in &mut self.streams {
            Self::drop_dead_fragments(stream, cum);
        }
        for s in skipped {
            self.skip_ordered(s.sid, s.ssn as u32, &mut out);
        }
        out
    }

    pub fn on_iforward_tsn(&mut self, new_cum_tsn: u32, skipped: &[SkippedMid]) -> DataOutcome {
        let mut out = DataOutcome::default();
        if !self.idata {
            out.diagnostics.push("I-FORWARD-TSN received on a DATA association; dropped".into());
            return out;
        }
        if self.forward_cum(new_cum_tsn).is_none() {
            return out;
        }
        for s in skipped {
            self.assemblies.retain(|&(sid, u, mid), _| {
                !(sid == s.sid && u == s.unordered && (mid == s.mid || serial_lt(mid, s.mid, 32)))
            });
            if !s.unordered {
                self.skip_ordered(s.sid, s.mid, &mut out);
            }
        }
        out
    }

    /// Builds a SACK describing the current TSN set, draining the duplicate list.
    pub fn make_sack(&mut self) -> SackChunk {
        let mut gap_blocks: Vec<GapBlock> = Vec::new();
        for &t in &self.received {
            let off = t - self.cum_tsn;
            if off > u16::MAX as u64 {
                break;
            }
            let off = off as u16;
            match gap_blocks.last_mut() {
                Some(g) if g.end + 1 == off => g.end = off,
                _ => gap_blocks.push(GapBlock { start: off, end: off }),
            }
        }
        SackChunk {
            cum_tsn_ack: self.cum_tsn as u32,
            a_rwnd: self.a_rwnd,
            gap_blocks,
            dup_tsns: std::mem::take(&mut self.duplicates),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(tsn: u32, ssn: u16, flags: &str, payload: &[u8]) -> DataChunk {
        DataChunk { flags: flags.parse().unwrap(), tsn, sid: 0, ssn, ppid: 7, payload: payload.to_vec() }
    }

    fn idata(tsn: u32, mid: u32, fsn: u32, flags: &str, payload: &[u8]) -> IDataChunk {
        IDataChunk::new(flags.parse().unwrap(), tsn, 0, mid, 9, fsn, payload.to_vec())
    }

    #[test]
    fn data_fragments_in_order() {
        let mut r = Receiver::new(1, 1, false, 1000);
        assert!(r.on_data(&data(1, 0, "B", b"ab")).deliveries.is_empty());
        assert!(r.on_data(&data(2, 0, "", b"cd")).deliveries.is_empty());
        let out = r.on_data(&data(3, 0, "E", b"ef"));
        assert_eq!(out.deliveries.len(), 1);
        assert_eq!(out.deliveries[0].payload, b"abcdef");
        assert_eq!(r.cumulative_tsn(), 3);
        assert_eq!(r.buffered(), 0);
    }

    #[test]
    fn data_ordering_by_ssn() {
        let mut r = Receiver::new(1, 1, false, 1000);
        assert!(r.on_data(&data(2, 1, "BE", b"second")).deliveries.is_empty());
        let out = r.on_data(&data(1, 0, "BE", b"first"));
        let got: Vec<_> = out.deliveries.iter().map(|d| d.payload.clone()).collect();
        assert_eq!(got, vec![b"first".to_vec(), b"second".to_vec()]);
    }

    #[test]
    fn inconsistent_u_flag_rejected() {
        let mut r = Receiver::new(1, 1, false, 1000);
        r.on_data(&data(1, 0, "B", b"a"));
        let out = r.on_data(&data(2, 0, "UE", b"b"));
        assert!(out.deliveries.is_empty());
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn idata_all_arrival_orders() {
        let frags = [idata(10, 0, 0, "B", b"aaa"), idata(11, 0, 1, "", b"bbb"), idata(12, 0, 2, "E", b"cc")];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for p in perms {
            let mut r = Receiver::new(10, 1, true, 1000);
            let mut delivered = Vec::new();
            for (i, &idx) in p.iter().enumerate() {
                let out = r.on_idata(&frags[idx]);
                if i < 2 {
                    assert!(out.deliveries.is_empty());
                }
                delivered.extend(out.deliveries);
            }
            assert_eq!(delivered.len(), 1, "{p:?}");
            assert_eq!(delivered[0].payload, b"aaabbbcc");
            assert_eq!(delivered[0].ppid, 9);
        }
    }

    #[test]
    fn idata_interleaved_messages_on_one_stream() {
        let mut r = Receiver::new(1, 1, true, 1000);
        let seq = [
            idata(1, 1, 0, "B", b"x1"),
            idata(2, 0, 0, "B", b"y1"),
            idata(3, 1, 1, "E", b"x2"),
            idata(4, 0, 1, "E", b"y2"),
        ];
        let mut delivered = Vec::new();
        for c in &seq {
            delivered.extend(r.on_idata(c).deliveries);
        }
        let payloads: Vec<_> = delivered.iter().map(|d| d.payload.clone()).collect();
        assert_eq!(payloads, vec![b"y1y2".to_vec(), b"x1x2".to_vec()]);
    }

    #[test]
    fn duplicates_reported_once() {
        let mut r = Receiver::new(1, 1, false, 1000);
        r.on_data(&data(1, 0, "BE", b"a"));
        assert!(r.on_data(&data(1, 0, "BE", b"a")).deliveries.is_empty());
        let sack = r.make_sack();
        assert_eq!(sack.dup_tsns, vec![1]);
        assert!(r.make_sack().dup_tsns.is_empty());
    }

    #[test]
    fn gap_blocks() {
        let mut r = Receiver::new(1, 1, false, 1000);
        for tsn in [1, 3, 4, 6] {
            r.on_data(&data(tsn, tsn as u16, "BE", b"a"));
        }
        let sack = r.make_sack();
        assert_eq!(sack.cum_tsn_ack, 1);
        assert_eq!(sack.gap_blocks, vec![GapBlock { start: 2, end: 3 }, GapBlock { start: 5, end: 5 }]);
    }

    #[test]
    fn iforward_skips_missing_mid() {
        let mut r = Receiver::new(1, 1, true, 1000);
        // MID 0 lost entirely (TSN 1), MID 1 arrives complete.
        assert!(r.on_idata(&idata(2, 1, 0, "BE", b"next")).deliveries.is_empty());
        let out = r.on_iforward_tsn(1, &[SkippedMid { sid: 0, unordered: false, mid: 0 }]);
        assert_eq!(out.deliveries.len(), 1);
        assert_eq!(out.deliveries[0].payload, b"next");
        assert_eq!(r.cumulative_tsn(), 2);
        assert_eq!(r.next_expected(0), Some(2));
    }

    #[test]
    fn forward_tsn_discards_partial() {
        let mut r = Receiver::new(1, 1, false, 1000);
        r.on_data(&data(2, 0, "", b"mid"));
        assert_eq!(r.buffered(), 1);
        r.on_forward_tsn(3, &[SkippedSsn { sid: 0, ssn: 0 }]);
        assert_eq!(r.buffered(), 0);
        assert_eq!(r.cumulative_tsn(), 3);
        let out = r.on_data(&data(4, 1, "BE", b"ok"));
        assert_eq!(out.deliveries.len(), 1);
    }

    #[test]
    fn forward_tsn_keeps_next_message_head() {
        // TSN 1-2 carried abandoned SSN 0; TSN 3 starts SSN 1, whose tail is still in flight.
        let mut r = Receiver::new(1, 1, false, 1000);
        r.on_data(&data(3, 1, "B", b"he"));
        r.on_forward_tsn(3, &[SkippedSsn { sid: 0, ssn: 0 }]);
        assert_eq!(r.cumulative_tsn(), 3);
        assert!(r.on_data(&data(4, 1, "", b"ll")).deliveries.is_empty());
        let out = r.on_data(&data(5, 1, "E", b"o"));
        assert_eq!(out.deliveries.len(), 1);
        assert_eq!(out.deliveries[0].payload, b"hello");
    }

    #[test]
    fn stale_forward_tsn_no_change() {
        let mut r = Receiver::new(1, 1, true, 1000);
        r.on_idata(&idata(1, 0, 0, "BE", b"a"));
        r.on_idata(&idata(2, 1, 0, "BE", b"b"));
        let out = r.on_iforward_tsn(1, &[SkippedMid { sid: 0, unordered: false, mid: 0 }]);
        assert!(out.deliveries.is_empty());
        assert_eq!(r.cumulative_tsn(), 2);
        assert_eq!(r.next_expected(0), Some(2));
    }

    #[test]
    fn family_mismatch() {
        let mut r = Receiver::new(1, 1, true, 1000);
        assert_eq!(r.on_data(&data(1, 0, "BE", b"a")).diagnostics.len(), 1);
        assert_eq!(r.cumulative_tsn(), 0);
    }
}

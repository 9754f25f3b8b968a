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

//! Sender-side queueing: one FIFO per stream, fragmentation, and the stream
//! schedulers that decide which stream feeds the out queue next.
//!
//! In non-interleaving mode a scheduler that has emitted the first fragment
//! of a message stays locked on that stream until the last fragment is out.
//! In interleaving mode it picks a stream again after every chunk.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::wire::pad4;
use crate::wire::ChunkFlags;

pub type StreamId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    RoundRobin,
    Priority,
    Fcfs,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::RoundRobin => "rr",
            SchedulerKind::Priority => "priority",
            SchedulerKind::Fcfs => "fcfs",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rr" | "round_robin" | "roundrobin" => Ok(SchedulerKind::RoundRobin),
            "priority" | "prio" => Ok(SchedulerKind::Priority),
            "fcfs" => Ok(SchedulerKind::Fcfs),
            other => Err(format!("unknown scheduler '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerMode {
    Interleaving,
    NonInterleaving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct UserMessage {
    pub sid: StreamId,
    pub payload: Vec<u8>,
    pub ordered: bool,
    pub ppid: u32,
    /// Simulated seconds.
    pub enqueue_time: f64,
    /// Partial reliability: abandon if not delivered within this many seconds.
    pub lifetime: Option<f64>,
}

impl UserMessage {
    pub fn new(sid: StreamId, payload: Vec<u8>) -> Self {
        UserMessage { sid, payload, ordered: true, ppid: 0, enqueue_time: 0.0, lifetime: None }
    }

    pub fn deadline(&self) -> Option<f64> {
        self.lifetime.map(|l| self.enqueue_time + l)
    }
}

/// One fragment of a message, before sequencing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub fsn: u32,
    pub flags: ChunkFlags,
    pub payload: Vec<u8>,
}

/// Splits `msg` into `ceil(len / max_fragment)` fragments with B on the first and E on the last.
pub fn fragment(msg: &UserMessage, max_fragment: usize) -> Vec<Fragment> {
    assert!(max_fragment >= 1);
    let count = fragment_count(msg.payload.len(), max_fragment);
    (0..count)
        .map(|i| {
            let start = i * max_fragment;
            let end = (start + max_fragment).min(msg.payload.len());
            Fragment {
                fsn: i as u32,
                flags: ChunkFlags { unordered: !msg.ordered, begin: i == 0, end: i + 1 == count, immediate: false },
                payload: msg.payload[start..end].to_vec(),
            }
        })
        .collect()
}

pub fn fragment_count(len: usize, max_fragment: usize) -> usize {
    len.div_ceil(max_fragment).max(1)
}

/// A fragment ready for the out queue. The TSN is assigned by the endpoint at transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct OutChunk {
    pub message_id: MessageId,
    pub sid: StreamId,
    /// SSN (truncated to 16 bits) or MID, depending on the chunk family.
    pub seq: u32,
    pub ordered: bool,
    pub fsn: u32,
    pub flags: ChunkFlags,
    pub ppid: u32,
    pub payload: Vec<u8>,
    pub expires_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbandonedMessage {
    pub message_id: MessageId,
    pub sid: StreamId,
    /// Sequence number, if any fragment was emitted.
    pub seq: Option<u32>,
    pub ordered: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedError {
    #[error("stream {sid} does not exist (stream count {count})")]
    UnknownStream { sid: StreamId, count: usize },
    #[error("empty user message")]
    EmptyMessage,
    #[error("scheduler cannot be reconfigured after data has been scheduled")]
    Reconfigure,
}

#[derive(Debug, Clone)]
struct QueuedMessage {
    id: MessageId,
    msg: UserMessage,
    offset: usize,
    next_fsn: u32,
    seq: Option<u32>,
}

impl QueuedMessage {
    fn started(&self) -> bool {
        self.seq.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct StreamQueue {
    pub sid: StreamId,
    pub priority: u16,
    fifo: VecDeque<QueuedMessage>,
    next_ordered_seq: u32,
    next_unordered_seq: u32,
}

impl StreamQueue {
    fn new(sid: StreamId) -> Self {
        StreamQueue { sid, priority: 0, fifo: VecDeque::new(), next_ordered_seq: 0, next_unordered_seq: 0 }
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    /// Messages not yet started.
    pub fn pending(&self) -> usize {
        self.fifo.iter().filter(|m| !m.started()).count()
    }

    pub fn in_progress(&self) -> bool {
        self.fifo.front().is_some_and(|m| m.started())
    }

    fn head_payload_len(&self, max_fragment: usize) -> Option<usize> {
        self.fifo.front().map(|m| (m.msg.payload.len() - m.offset).min(max_fragment))
    }
}

/// Scheduler state plus the per-stream queues it draws from.
#[derive(Debug, Clone)]
pub struct Scheduler {
    kind: SchedulerKind,
    mode: SchedulerMode,
    streams: Vec<StreamQueue>,
    cursor: usize,
    locked: Option<StreamId>,
    max_fragment: usize,
    chunk_overhead: usize,
    next_message_id: u64,
    produced_any: bool,
}

impl Scheduler {
    /// `chunk_overhead` is the data chunk header size (16 for DATA, 20 for I-DATA).
    pub fn new(kind: SchedulerKind, mode: SchedulerMode, stream_count: usize, max_fragment: usize, chunk_overhead: usize) -> Self {
        assert!(stream_count >= 1 && stream_count <= u16::MAX as usize + 1);
        assert!(max_fragment >= 1);
        Scheduler {
            kind,
            mode,
            streams: (0..stream_count).map(|s| StreamQueue::new(s as StreamId)).collect(),
            cursor: 0,
            locked: None,
            max_fragment,
            chunk_overhead,
            next_message_id: 0,
            produced_any: false,
        }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn mode(&self) -> SchedulerMode {
        self.mode
    }

    pub fn locked_sid(&self) -> Option<StreamId> {
        self.locked
    }

    pub fn max_fragment(&self) -> usize {
        self.max_fragment
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn stream(&self, sid: StreamId) -> Option<&StreamQueue> {
        self.streams.get(sid as usize)
    }

    /// Changes the scheduler discipline; only allowed before any chunk was produced.
    pub fn reconfigure(&mut self, kind: SchedulerKind, mode: SchedulerMode) -> Result<(), SchedError> {
        if self.produced_any {
            return Err(SchedError::Reconfigure);
        }
        self.kind = kind;
        self.mode = mode;
        Ok(())
    }

    pub fn set_priority(&mut self, sid: StreamId, priority: u16) -> Result<(), SchedError> {
        let count = self.streams.len();
        let stream = self.streams.get_mut(sid as usize).ok_or(SchedError::UnknownStream { sid, count })?;
        stream.priority = priority;
        Ok(())
    }

    pub fn enqueue(&mut self, msg: UserMessage) -> Result<MessageId, SchedError> {
        let count = self.streams.len();
        if msg.payload.is_empty() {
            return Err(SchedError::EmptyMessage);
        }
        let stream = self.streams.get_mut(msg.sid as usize).ok_or(SchedError::UnknownStream { sid: msg.sid, count })?;
        let id = MessageId(self.next_message_id);
        self.next_message_id += 1;
        stream.fifo.push_back(QueuedMessage { id, msg, offset: 0, next_fsn: 0, seq: None });
        Ok(id)
    }

    pub fn is_empty(&self) -> bool {
        self.streams.iter().all(StreamQueue::is_empty)
    }

    fn chunk_size(&self, payload_len: usize) -> usize {
        pad4(self.chunk_overhead + payload_len)
    }

    /// Wire size of the chunk `sid` would produce next.
    fn next_size(&self, sid: StreamId) -> Option<usize> {
        self.streams[sid as usize].head_payload_len(self.max_fragment).map(|l| self.chunk_size(l))
    }

    /// Non-empty streams in the order this scheduler prefers them.
    fn candidates(&self) -> Vec<StreamId> {
        let n = self.streams.len();
        let cyclic = |sid: StreamId| (sid as usize + n - self.cursor) % n;
        let mut ids: Vec<StreamId> = self.streams.iter().filter(|s| !s.is_empty()).map(|s| s.sid).collect();
        match self.kind {
            SchedulerKind::RoundRobin => ids.sort_by_key(|&s| cyclic(s)),
            SchedulerKind::Priority => {
                ids.sort_by_key(|&s| (std::cmp::Reverse(self.streams[s as usize].priority), cyclic(s)));
            }
            SchedulerKind::Fcfs => ids.sort_by(|&a, &b| {
                let ta = self.streams[a as usize].fifo[0].msg.enqueue_time;
                let tb = self.streams[b as usize].fifo[0].msg.enqueue_time;
                ta.total_cmp(&tb).then(a.cmp(&b))
            }),
        }
        ids
    }

    /// Produces the next chunk whose wire size fits in `budget`, if any.
    pub fn next_chunk(&mut self, budget: usize) -> Option<OutChunk> {
        let sid = match self.locked {
            Some(sid) => (self.next_size(sid)? <= budget).then_some(sid)?,
            None => self.candidates().into_iter().find(|&s| self.next_size(s).is_some_and(|size| size <= budget))?,
        };
        Some(self.produce(sid))
    }

    /// Produces chunks until the budget is exhausted or nothing fits.
    pub fn next_chunks(&mut self, mut budget: usize) -> Vec<OutChunk> {
        let mut out = Vec::new();
        while let Some(chunk) = self.next_chunk(budget) {
            budget -= self.chunk_size(chunk.payload.len());
            out.push(chunk);
        }
        out
    }

    fn produce(&mut self, sid: StreamId) -> OutChunk {
        let max_fragment = self.max_fragment;
        let stream = &mut self.streams[sid as usize];
        let head = stream.fifo.front_mut().expect("selected stream is non-empty");
        let seq = *head.seq.get_or_insert_with(|| {
            let counter = if head.msg.ordered { &mut stream.next_ordered_seq } else { &mut stream.next_unordered_seq };
            let seq = *counter;
            *counter = counter.wrapping_add(1);
            seq
        });
        let len = head.msg.payload.len();
        let start = head.offset;
        let end = (start + max_fragment).min(len);
        let chunk = OutChunk {
            message_id: head.id,
            sid,
            seq,
            ordered: head.msg.ordered,
            fsn: head.next_fsn,
            flags: ChunkFlags { unordered: !head.msg.ordered, begin: start == 0, end: end == len, immediate: false },
            ppid: head.msg.ppid,
            payload: head.msg.payload[start..end].to_vec(),
            expires_at: head.msg.deadline(),
        };
        head.offset = end;
        head.next_fsn += 1;
        if chunk.flags.end {
            stream.fifo.pop_front();
            self.locked = None;
        } else if self.mode == SchedulerMode::NonInterleaving {
            self.locked = Some(sid);
        }
        self.cursor = (sid as usize + 1) % self.streams.len();
        self.produced_any = true;
        chunk
    }

    /// Drops the locked stream's in-progress message and releases the lock. No-op when unlocked.
    pub fn reset_lock(&mut self) -> Option<AbandonedMessage> {
        let sid = self.locked.take()?;
        let m = self.streams[sid as usize].fifo.pop_front()?;
        Some(AbandonedMessage { message_id: m.id, sid, seq: m.seq, ordered: m.msg.ordered })
    }

    /// Removes the unsent remainder of a message, wherever it is queued.
    pub fn abandon(&mut self, id: MessageId) -> Option<AbandonedMessage> {
        for stream in &mut self.streams {
            if let Some(pos) = stream.fifo.iter().position(|m| m.id == id) {
                let m = stream.fifo.remove(pos).expect("position is valid");
                if m.started() && self.locked == Some(stream.sid) {
                    self.locked = None;
                }
                return Some(AbandonedMessage { message_id: m.id, sid: stream.sid, seq: m.seq, ordered: m.msg.ordered });
            }
        }
        None
    }

    /// Drops every queued message whose deadline is at or before `now`.
    pub fn expire(&mut self, now: f64) -> Vec<AbandonedMessage> {
        let expired: Vec<MessageId> = self
            .streams
            .iter()
            .flat_map(|s| s.fifo.iter())
            .filter(|m| m.msg.deadline().is_some_and(|d| d <= now))
            .map(|m| m.id)
            .collect();
        expired.into_iter().filter_map(|id| self.abandon(id)).collect()
    }

    /// Earliest deadline among queued messages.
    pub fn next_deadline(&self) -> Option<f64> {
        self.streams.iter().flat_map(|s| s.fifo.iter()).filter_map(|m| m.msg.deadline()).min_by(f64::total_cmp)
    }
}

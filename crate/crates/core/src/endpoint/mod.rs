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

//! Sans-IO SCTP association.
//!
//! An [`Endpoint`] never touches a clock or a socket. Every input carries the
//! current time and every reaction comes back as a list of [`EndpointEvent`]s
//! for the caller to act on: packets to put on the wire, timers to arm,
//! messages to hand to the application.

mod receiver;
mod sender;
mod serial;

use std::collections::BTreeSet;

use thiserror::Error;

pub use self::receiver::Delivery;
pub use self::receiver::Receiver;
pub use self::sender::Sender;
pub use self::sender::SenderStats;
pub use self::serial::serial_lt;
use crate::sched::MessageId;
use crate::sched::SchedError;
use crate::sched::SchedulerKind;
use crate::sched::SchedulerMode;
use crate::sched::StreamId;
use crate::sched::UserMessage;
use crate::wire::Chunk;
use crate::wire::Feature;
use crate::wire::InitChunk;
use crate::wire::SctpPacket;
use crate::wire::COMMON_HEADER_SIZE;
use crate::wire::DATA_HEADER_SIZE;
use crate::wire::IDATA_HEADER_SIZE;

/// IPv4 header without options.
pub const IP_HEADER_SIZE: usize = 20;

const COOKIE_MAGIC: &[u8; 4] = b"SCK1";
const COOKIE_LEN: usize = 4 + 4 + 4 + 2 + 2 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SackPolicy {
    /// One SACK per received packet that carried data or forward-tsn chunks.
    Immediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationConfig {
    pub idata_enabled: bool,
    pub stream_count: usize,
    pub a_rwnd: u32,
    /// IP MTU in bytes.
    pub mtu: usize,
    /// Largest fragment payload; clamped so one chunk always fits the MTU.
    pub max_fragment: usize,
    /// Initial retransmission timeout in seconds.
    pub rto: f64,
    /// Window of unacknowledged chunks.
    pub max_inflight: usize,
    pub fast_retransmit_threshold: u32,
    pub sack_policy: SackPolicy,
    pub scheduler: SchedulerKind,
    /// `None` follows the negotiated chunk family.
    pub scheduler_mode: Option<SchedulerMode>,
    pub local_port: u16,
    pub peer_port: u16,
    pub initiate_tag: u32,
    pub initial_tsn: u32,
    /// `(sid, priority)` pairs applied at establishment.
    pub priorities: Vec<(StreamId, u16)>,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            idata_enabled: true,
            stream_count: 2,
            a_rwnd: 65535,
            mtu: 1500,
            max_fragment: 1452,
            rto: 1.0,
            max_inflight: 4,
            fast_retransmit_threshold: 3,
            sack_policy: SackPolicy::Immediate,
            scheduler: SchedulerKind::RoundRobin,
            scheduler_mode: None,
            local_port: 5000,
            peer_port: 5001,
            initiate_tag: 0x1000_0001,
            initial_tsn: 1,
            priorities: Vec::new(),
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<(), EndpointError> {
        let bad = |m: &str| Err(EndpointError::InvalidConfig(m.to_string()));
        if self.stream_count < 1 || self.stream_count > u16::MAX as usize + 1 {
            return bad("stream_count must be in 1..=65536");
        }
        if self.max_inflight < 1 {
            return bad("max_inflight must be at least 1");
        }
        if self.mtu < IP_HEADER_SIZE + COMMON_HEADER_SIZE + IDATA_HEADER_SIZE + 4 || self.mtu > 65535 {
            return bad("mtu too small to carry a data chunk");
        }
        if self.max_fragment < 1 {
            return bad("max_fragment must be at least 1");
        }
        if !(self.rto > 0.0 && self.rto.is_finite()) {
            return bad("rto must be positive");
        }
        if self.fast_retransmit_threshold < 1 {
            return bad("fast_retransmit_threshold must be at least 1");
        }
        if self.initiate_tag == 0 {
            return bad("initiate_tag must be non-zero");
        }
        Ok(())
    }

    /// Bytes available for chunks in one packet.
    pub fn packet_budget(&self) -> usize {
        self.mtu - IP_HEADER_SIZE - COMMON_HEADER_SIZE
    }

    /// Fragment size actually used for the given chunk family.
    pub fn effective_max_fragment(&self, idata: bool) -> usize {
        let header = if idata { IDATA_HEADER_SIZE } else { DATA_HEADER_SIZE };
        // Round down to a multiple of 4 so a full fragment needs no padding.
        let limit = (self.packet_budget() - header) & !3;
        self.max_fragment.min(limit)
    }

    fn offered_extensions(&self) -> BTreeSet<Feature> {
        let mut e = BTreeSet::from([Feature::ForwardTsn]);
        if self.idata_enabled {
            e.insert(Feature::Interleaving);
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    Handshake,
    Retransmit,
    Lifetime,
}

/// Opaque timer handle; a fired timer whose generation is no longer current is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId {
    pub kind: TimerKind,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EndpointEvent {
    PacketOut(SctpPacket),
    MessageDelivered { sid: StreamId, ppid: u32, payload: Vec<u8>, ordered: bool, at: f64 },
    TimerSet { id: TimerId, expiry: f64 },
    TimerCancelled(TimerId),
    AssocEstablished { negotiated_idata: bool },
    MessageAbandoned { sid: StreamId, message_id: MessageId },
    Diagnostic(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EndpointError {
    #[error("association is not established")]
    NotEstablished,
    #[error("association already initiated")]
    AlreadyInitiated,
    #[error("stream {sid} out of range (association has {count})")]
    UnknownStream { sid: StreamId, count: usize },
    #[error("empty user message")]
    EmptyMessage,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<SchedError> for EndpointError {
    fn from(e: SchedError) -> Self {
        match e {
            SchedError::UnknownStream { sid, count } => EndpointError::UnknownStream { sid, count },
            SchedError::EmptyMessage => EndpointError::EmptyMessage,
            SchedError::Reconfigure => EndpointError::InvalidConfig(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocState {
    Closed,
    CookieWait,
    CookieEchoed,
    Established,
}

/// Timer bookkeeping shared by the handshake and the sender.
#[derive(Debug, Clone, Default)]
pub(crate) struct Timers {
    next_generation: u64,
    armed: [Option<TimerId>; 3],
}

impl Timers {
    fn slot(kind: TimerKind) -> usize {
        match kind {
            TimerKind::Handshake => 0,
            TimerKind::Retransmit => 1,
            TimerKind::Lifetime => 2,
        }
    }

    pub(crate) fn is_running(&self, kind: TimerKind) -> bool {
        self.armed[Self::slot(kind)].is_some()
    }

    pub(crate) fn start(&mut self, kind: TimerKind, expiry: f64, events: &mut Vec<EndpointEvent>) {
        self.stop(kind, events);
        self.next_generation += 1;
        let id = TimerId { kind, generation: self.next_generation };
        self.armed[Self::slot(kind)] = Some(id);
        events.push(EndpointEvent::TimerSet { id, expiry });
    }

    pub(crate) fn stop(&mut self, kind: TimerKind, events: &mut Vec<EndpointEvent>) {
        if let Some(id) = self.armed[Self::slot(kind)].take() {
            events.push(EndpointEvent::TimerCancelled(id));
        }
    }

    /// Consumes a fired timer; returns false when it is stale.
    fn fire(&mut self, id: TimerId) -> bool {
        let slot = &mut self.armed[Self::slot(id.kind)];
        if *slot == Some(id) {
            *slot = None;
            true
        } else {
            false
        }
    }
}

/// Peer parameters carried across the stateless INIT / COOKIE-ECHO exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PeerParams {
    tag: u32,
    a_rwnd: u32,
    outbound_streams: u16,
    inbound_streams: u16,
    initial_tsn: u32,
    idata: bool,
}

impl PeerParams {
    fn from_init(init: &InitChunk) -> Self {
        PeerParams {
            tag: init.initiate_tag,
            a_rwnd: init.a_rwnd,
            outbound_streams: init.outbound_streams,
            inbound_streams: init.inbound_streams,
            initial_tsn: init.initial_tsn,
            idata: init.offers_interleaving(),
        }
    }

    fn to_cookie(self) -> Vec<u8> {
        let mut c = Vec::with_capacity(COOKIE_LEN);
        c.extend_from_slice(COOKIE_MAGIC);
        c.extend_from_slice(&self.tag.to_be_bytes());
        c.extend_from_slice(&self.a_rwnd.to_be_bytes());
        c.extend_from_slice(&self.outbound_streams.to_be_bytes());
        c.extend_from_slice(&self.inbound_streams.to_be_bytes());
        c.extend_from_slice(&self.initial_tsn.to_be_bytes());
        c.push(self.idata as u8);
        c
    }

    fn from_cookie(c: &[u8]) -> Option<Self> {
        if c.len() != COOKIE_LEN || &c[..4] != COOKIE_MAGIC {
            return None;
        }
        let u32_at = |o: usize| u32::from_be_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]);
        let u16_at = |o: usize| u16::from_be_bytes([c[o], c[o + 1]]);
        Some(PeerParams {
            tag: u32_at(4),
            a_rwnd: u32_at(8),
            outbound_streams: u16_at(12),
            inbound_streams: u16_at(14),
            initial_tsn: u32_at(16),
            idata: c[20] != 0,
        })
    }
}

/// One side of an association.
#[derive(Debug, Clone)]
pub struct Endpoint {
    cfg: AssociationConfig,
    state: AssocState,
    timers: Timers,
    handshake_rto: f64,
    /// Packet retransmitted by the handshake timer.
    handshake_packet: Option<SctpPacket>,
    peer_tag: u32,
    /// Peer INIT-ACK parameters while waiting for COOKIE-ACK.
    pending_peer: Option<PeerParams>,
    negotiated_idata: Option<bool>,
    sender: Option<Sender>,
    receiver: Option<Receiver>,
}

impl Endpoint {
    pub fn new(cfg: AssociationConfig) -> Result<Self, EndpointError> {
        cfg.validate()?;
        let rto = cfg.rto;
        Ok(Endpoint {
            cfg,
            state: AssocState::Closed,
            timers: Timers::default(),
            handshake_rto: rto,
            handshake_packet: None,
            peer_tag: 0,
            pending_peer: None,
            negotiated_idata: None,
            sender: None,
            receiver: None,
        })
    }

    pub fn config(&self) -> &AssociationConfig {
        &self.cfg
    }

    pub fn state(&self) -> AssocState {
        self.state
    }

    pub fn is_established(&self) -> bool {
        self.state == AssocState::Established
    }

    pub fn negotiated_idata(&self) -> Option<bool> {
        self.negotiated_idata
    }

    pub fn sender(&self) -> Option<&Sender> {
        self.sender.as_ref()
    }

    pub fn receiver(&self) -> Option<&Receiver> {
        self.receiver.as_ref()
    }

    fn packet(&self, vtag: u32) -> SctpPacket {
        SctpPacket::new(self.cfg.local_port, self.cfg.peer_port, vtag)
    }

    fn local_init(&self, cookie: Option<Vec<u8>>) -> InitChunk {
        InitChunk {
            initiate_tag: self.cfg.initiate_tag,
            a_rwnd: self.cfg.a_rwnd,
            outbound_streams: self.cfg.stream_count.min(u16::MAX as usize) as u16,
            inbound_streams: self.cfg.stream_count.min(u16::MAX as usize) as u16,
            initial_tsn: self.cfg.initial_tsn,
            extensions: self.cfg.offered_extensions(),
            cookie,
        }
    }

    /// Sends INIT. The association becomes established after INIT-ACK / COOKIE-ECHO / COOKIE-ACK.
    pub fn initiate(&mut self, now: f64) -> Result<Vec<EndpointEvent>, EndpointError> {
        if self.state != AssocState::Closed {
            return Err(EndpointError::AlreadyInitiated);
        }
        let mut events = Vec::new();
        let pkt = self.packet(0).with_chunk(Chunk::Init(self.local_init(None)));
        self.state = AssocState::CookieWait;
        self.send_handshake(pkt, now, &mut events);
        Ok(events)
    }

    fn send_handshake(&mut self, pkt: SctpPacket, now: f64, events: &mut Vec<EndpointEvent>) {
        events.push(EndpointEvent::PacketOut(pkt.clone()));
        self.handshake_packet = Some(pkt);
        self.timers.start(TimerKind::Handshake, now + self.handshake_rto, events);
    }

    fn establish(&mut self, peer: PeerParams, events: &mut Vec<EndpointEvent>) {
        let idata = self.cfg.idata_enabled && peer.idata;
        let out_streams = self.cfg.stream_count.min(peer.inbound_streams.max(1) as usize);
        let in_streams = self.cfg.stream_count.min(peer.outbound_streams.max(1) as usize);
        let requested = self.cfg.scheduler_mode;
        let mode = match (requested, idata) {
            (Some(SchedulerMode::Interleaving), false) => {
                events.push(EndpointEvent::Diagnostic(
                    "interleaving scheduler requested but I-DATA was not negotiated; using non-interleaving".into(),
                ));
                SchedulerMode::NonInterleaving
            }
            (Some(m), _) => m,
            (None, true) => SchedulerMode::Interleaving,
            (None, false) => SchedulerMode::NonInterleaving,
        };
        let mut sender = Sender::new(&self.cfg, idata, mode, out_streams, peer.tag);
        for &(sid, prio) in &self.cfg.priorities {
            if sender.set_priority(sid, prio).is_err() {
                events.push(EndpointEvent::Diagnostic(format!("priority for stream {sid} ignored: stream out of range")));
            }
        }
        self.sender = Some(sender);
        self.receiver = Some(Receiver::new(peer.initial_tsn, in_streams, idata, self.cfg.a_rwnd));
        self.peer_tag = peer.tag;
        self.negotiated_idata = Some(idata);
        self.state = AssocState::Established;
        self.handshake_packet = None;
        self.timers.stop(TimerKind::Handshake, events);
        events.push(EndpointEvent::AssocEstablished { negotiated_idata: idata });
    }

    /// Queues a user message and tries to transmit.
    pub fn send_message(&mut self, msg: UserMessage, now: f64) -> Result<(MessageId, Vec<EndpointEvent>), EndpointError> {
        let sender = self.sender.as_mut().filter(|_| self.state == AssocState::Established).ok_or(EndpointError::NotEstablished)?;
        let id = sender.enqueue(msg)?;
        let mut events = Vec::new();
        sender.pump(now, &mut self.timers, &mut events);
        Ok((id, events))
    }

    /// Drains the scheduler into packets as far as the window allows.
    pub fn pump(&mut self, now: f64) -> Vec<EndpointEvent> {
        let mut events = Vec::new();
        if let Some(sender) = self.sender.as_mut() {
            sender.pump(now, &mut self.timers, &mut events);
        }
        events
    }

    pub fn abandon_expired(&mut self, now: f64) -> Vec<EndpointEvent> {
        let mut events = Vec::new();
        if let Some(sender) = self.sender.as_mut() {
            sender.abandon_expired(now, &mut self.timers, &mut events);
        }
        events
    }

    pub fn on_timer(&mut self, id: TimerId, now: f64) -> Vec<EndpointEvent> {
        let mut events = Vec::new();
        if !self.timers.fire(id) {
            return events;
        }
        match id.kind {
            TimerKind::Handshake => {
                if let Some(pkt) = self.handshake_packet.clone() {
                    self.handshake_rto = (self.handshake_rto * 2.0).min(self.cfg.rto * 8.0);
                    self.send_handshake(pkt, now, &mut events);
                }
            }
            TimerKind::Retransmit => {
                if let Some(sender) = self.sender.as_mut() {
                    sender.on_t3_expiry(now, &mut self.timers, &mut events);
                }
            }
            TimerKind::Lifetime => {
                if let Some(sender) = self.sender.as_mut() {
                    sender.pump(now, &mut self.timers, &mut events);
                }
            }
        }
        events
    }

    /// Processes one received packet.
    pub fn handle_packet(&mut self, pkt: &SctpPacket, now: f64) -> Vec<EndpointEvent> {
        let mut events = Vec::new();
        let is_init = pkt.chunks.iter().any(|c| matches!(c, Chunk::Init(_)));
        if is_init {
            if pkt.header.verification_tag != 0 {
                events.push(EndpointEvent::Diagnostic("INIT with non-zero verification tag dropped".into()));
                return events;
            }
        } else if pkt.header.verification_tag != self.cfg.initiate_tag {
            events.push(EndpointEvent::Diagnostic(format!(
                "verification tag {:#010x} does not match {:#010x}; packet dropped",
                pkt.header.verification_tag, self.cfg.initiate_tag
            )));
            return events;
        }
        let mut need_sack = false;
        for chunk in &pkt.chunks {
            match chunk {
                Chunk::Init(init) => self.on_init(init, &mut events),
                Chunk::InitAck(ack) => self.on_init_ack(ack, now, &mut events),
                Chunk::CookieEcho(cookie) => self.on_cookie_echo(cookie, &mut events),
                Chunk::CookieAck => self.on_cookie_ack(&mut events),
                Chunk::Data(_) | Chunk::IData(_) | Chunk::ForwardTsn(_) | Chunk::IForwardTsn(_) => {
                    need_sack |= self.on_receive_chunk(chunk, now, &mut events);
                }
                Chunk::Sack(sack) => match (self.state, self.sender.as_mut()) {
                    (AssocState::Established, Some(sender)) => sender.on_sack(sack, now, &mut self.timers, &mut events),
                    _ => events.push(EndpointEvent::Diagnostic("SACK before establishment ignored".into())),
                },
                Chunk::Unknown { chunk_type, .. } => {
                    events.push(EndpointEvent::Diagnostic(format!("unknown chunk type {chunk_type} ignored")));
                }
            }
        }
        if need_sack {
            let sack = self.receiver.as_mut().expect("established").make_sack();
            events.push(EndpointEvent::PacketOut(self.packet(self.peer_tag).with_chunk(Chunk::Sack(sack))));
        }
        events
    }

    /// Returns true if the chunk was accepted (and so warrants a SACK).
    fn on_receive_chunk(&mut self, chunk: &Chunk, now: f64, events: &mut Vec<EndpointEvent>) -> bool {
        let (AssocState::Established, Some(receiver)) = (self.state, self.receiver.as_mut()) else {
            events.push(EndpointEvent::Diagnostic(format!("{} before establishment ignored", chunk.kind())));
            return false;
        };
        let idata = self.negotiated_idata == Some(true);
        let family_ok = match chunk {
            Chunk::Data(_) | Chunk::ForwardTsn(_) => !idata,
            _ => idata,
        };
        if !family_ok {
            let mode = if idata { "I-DATA" } else { "DATA" };
            events.push(EndpointEvent::Diagnostic(format!("{} received on a {mode} association; dropped", chunk.kind())));
            return false;
        }
        let out = match chunk {
            Chunk::Data(d) => receiver.on_data(d),
            Chunk::IData(d) => receiver.on_idata(d),
            Chunk::ForwardTsn(f) => receiver.on_forward_tsn(f.new_cum_tsn, &f.skipped),
            Chunk::IForwardTsn(f) => receiver.on_iforward_tsn(f.new_cum_tsn, &f.skipped),
            _ => unreachable!("filtered above"),
        };
        events.extend(out.diagnostics.into_iter().map(EndpointEvent::Diagnostic));
        events.extend(out.deliveries.into_iter().map(|d| EndpointEvent::MessageDelivered {
            sid: d.sid,
            ppid: d.ppid,
            payload: d.payload,
            ordered: d.ordered,
            at: now,
        }));
        true
    }

    fn on_init(&mut self, init: &InitChunk, events: &mut Vec<EndpointEvent>) {
        if matches!(self.state, AssocState::Established | AssocState::CookieEchoed) {
            events.push(EndpointEvent::Diagnostic(format!("INIT in state {:?} ignored", self.state)));
            return;
        }
        if init.initiate_tag == 0 {
            events.push(EndpointEvent::Diagnostic("INIT with zero initiate tag ignored".into()));
            return;
        }
        // Stateless reply: everything needed later travels in the cookie.
        let cookie = PeerParams::from_init(init).to_cookie();
        let ack = self.local_init(Some(cookie));
        events.push(EndpointEvent::PacketOut(self.packet(init.initiate_tag).with_chunk(Chunk::InitAck(ack))));
    }

    fn on_init_ack(&mut self, ack: &InitChunk, now: f64, events: &mut Vec<EndpointEvent>) {
        if self.state != AssocState::CookieWait {
            events.push(EndpointEvent::Diagnostic(format!("INIT-ACK in state {:?} ignored", self.state)));
            return;
        }
        let Some(cookie) = ack.cookie.clone() else {
            events.push(EndpointEvent::Diagnostic("INIT-ACK without state cookie ignored".into()));
            return;
        };
        self.pending_peer = Some(PeerParams::from_init(ack));
        self.state = AssocState::CookieEchoed;
        self.handshake_rto = self.cfg.rto;
        let pkt = self.packet(ack.initiate_tag).with_chunk(Chunk::CookieEcho(cookie));
        self.send_handshake(pkt, now, events);
    }

    fn on_cookie_echo(&mut self, cookie: &[u8], events: &mut Vec<EndpointEvent>) {
        let Some(peer) = PeerParams::from_cookie(cookie) else {
            events.push(EndpointEvent::Diagnostic("COOKIE-ECHO with invalid cookie ignored".into()));
            return;
        };
        match self.state {
            AssocState::Established if peer.tag == self.peer_tag => {}
            AssocState::Established => {
                events.push(EndpointEvent::Diagnostic("COOKIE-ECHO for a different association ignored".into()));
                return;
            }
            _ => self.establish(peer, events),
        }
        events.push(EndpointEvent::PacketOut(self.packet(peer.tag).with_chunk(Chunk::CookieAck)));
    }

    fn on_cookie_ack(&mut self, events: &mut Vec<EndpointEvent>) {
        if self.state != AssocState::CookieEchoed {
            events.push(EndpointEvent::Diagnostic(format!("COOKIE-ACK in state {:?} ignored", self.state)));
            return;
        }
        let peer = self.pending_peer.take().expect("set with COOKIE-ECHO");
        self.establish(peer, events);
    }
}

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

//! Executes scripts against one endpoint on a virtual clock.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::parse_bool;
use super::parse_features;
use super::parse_gaps;
use super::parse_hex;
use super::parse_int;
use super::parse_script;
use super::parse_skipped;
use super::parse_tsn_list;
use super::Action;
use super::ChunkTemplate;
use super::Field;
use super::FieldValue;
use super::Script;
use super::ScriptTime;
use crate::endpoint::AssociationConfig;
use crate::endpoint::Endpoint;
use crate::endpoint::EndpointEvent;
use crate::endpoint::TimerId;
use crate::sched::UserMessage;
use crate::wire::Chunk;
use crate::wire::ChunkFlags;
use crate::wire::ChunkKind;
use crate::wire::DataChunk;
use crate::wire::Feature;
use crate::wire::ForwardTsnChunk;
use crate::wire::GapBlock;
use crate::wire::IDataChunk;
use crate::wire::IForwardTsnChunk;
use crate::wire::InitChunk;
use crate::wire::SackChunk;
use crate::wire::SctpPacket;
use crate::wire::SkippedMid;
use crate::wire::SkippedSsn;

/// Features every run declares to `ifdef` guards.
pub const DEFAULT_FEATURES: &[&str] = &["SIMULATION"];
const DEFAULT_PEER_TAG: u32 = 0x0000_BEEF;
const DEFAULT_COOKIE: &[u8] = b"script-cookie";
const DEFAULT_DATA_LEN: usize = 16;

/// Byte `i` of a synthetic payload that starts at message offset `off`.
pub fn payload_pattern(off: usize, len: usize) -> Vec<u8> {
    (off..off + len).map(|i| ((i * 31 + 7) % 251) as u8).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub line: usize,
    pub time: f64,
    pub expected: String,
    pub actual: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub failure: Option<Mismatch>,
    /// Every packet and delivery exchanged, with its virtual time.
    pub log: Vec<String>,
    /// Chunk kinds the endpoint emitted, in order.
    pub emitted: Vec<ChunkKind>,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

struct Options {
    cfg: AssociationConfig,
    peer_idata: bool,
    peer_streams: u16,
    peer_initial_tsn: u32,
    peer_tag: u32,
    window: f64,
    strict: bool,
}

fn opt_err<E: ToString>(key: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("option {key}: {}", e.to_string())
}

fn options(script: &Script, base: &AssociationConfig, features: &BTreeSet<String>) -> Result<Options, String> {
    let mut o = Options {
        cfg: base.clone(),
        peer_idata: true,
        peer_streams: base.stream_count as u16,
        peer_initial_tsn: 1,
        peer_tag: DEFAULT_PEER_TAG,
        window: 1.0,
        strict: false,
    };
    for opt in script.options.iter().filter(|o| o.guard.iter().all(|g| features.contains(g))) {
        let (k, v) = (opt.key.as_str(), opt.value.as_str());
        let int = || parse_int(v).map_err(opt_err(k));
        let float = || v.parse::<f64>().map_err(opt_err(k));
        let boolean = || parse_bool(v).map_err(opt_err(k));
        match k {
            "local.idata" => o.cfg.idata_enabled = boolean()?,
            "local.streams" => o.cfg.stream_count = int()? as usize,
            "local.scheduler" => o.cfg.scheduler = v.parse().map_err(opt_err(k))?,
            "local.max_inflight" => o.cfg.max_inflight = int()? as usize,
            "local.rto" => o.cfg.rto = float()?,
            "local.mtu" => o.cfg.mtu = int()? as usize,
            "local.max_fragment" => o.cfg.max_fragment = int()? as usize,
            "local.initial_tsn" => o.cfg.initial_tsn = int()? as u32,
            "local.tag" => o.cfg.initiate_tag = int()? as u32,
            "local.a_rwnd" => o.cfg.a_rwnd = int()? as u32,
            "peer.idata" => o.peer_idata = boolean()?,
            "peer.streams" => o.peer_streams = int()? as u16,
            "peer.initial_tsn" => o.peer_initial_tsn = int()? as u32,
            "peer.tag" => o.peer_tag = int()? as u32,
            "expect.window" => o.window = float()?,
            "strict" => o.strict = boolean()?,
            other => return Err(format!("unknown option '{other}'")),
        }
    }
    Ok(o)
}

fn describe(chunk: &Chunk) -> String {
    match chunk {
        Chunk::Data(d) => format!("DATA [tsn={}, sid={}, ssn={}, ppid={}, flags={}, len={}]", d.tsn, d.sid, d.ssn, d.ppid, flags_str(d.flags), d.payload.len()),
        Chunk::IData(d) => {
            let pf = match d.ppid() {
                Some(p) => format!("ppid={p}"),
                None => format!("fsn={}", d.fsn()),
            };
            format!("I-DATA [tsn={}, sid={}, mid={}, {pf}, flags={}, len={}]", d.tsn, d.sid, d.mid, flags_str(d.flags), d.payload.len())
        }
        Chunk::Sack(s) => {
            let gaps: Vec<String> = s.gap_blocks.iter().map(|g| format!("{}-{}", g.start, g.end)).collect();
            let dups: Vec<String> = s.dup_tsns.iter().map(|t| t.to_string()).collect();
            format!("SACK [cum_tsn_ack={}, a_rwnd={}, gaps={}, dups={}]", s.cum_tsn_ack, s.a_rwnd, join(&gaps), join(&dups))
        }
        Chunk::ForwardTsn(f) => {
            let s: Vec<String> = f.skipped.iter().map(|s| format!("{}:{}", s.sid, s.ssn)).collect();
            format!("FORWARD-TSN [new_cum_tsn={}, skipped={}]", f.new_cum_tsn, join(&s))
        }
        Chunk::IForwardTsn(f) => {
            let s: Vec<String> = f.skipped.iter().map(|s| format!("{}:{}{}", s.sid, s.mid, if s.unordered { ":u" } else { "" })).collect();
            format!("I-FORWARD-TSN [new_cum_tsn={}, skipped={}]", f.new_cum_tsn, join(&s))
        }
        Chunk::Init(i) | Chunk::InitAck(i) => {
            let ext: Vec<String> = i.extensions.iter().map(|e| e.to_string()).collect();
            format!(
                "{} [initiate_tag={:#x}, a_rwnd={}, outbound_streams={}, inbound_streams={}, initial_tsn={}, extensions={}]",
                chunk.kind(),
                i.initiate_tag,
                i.a_rwnd,
                i.outbound_streams,
                i.inbound_streams,
                i.initial_tsn,
                join(&ext)
            )
        }
        Chunk::CookieEcho(c) => format!("COOKIE-ECHO [len={}]", c.len()),
        Chunk::CookieAck => "COOKIE-ACK []".into(),
        Chunk::Unknown { chunk_type, body, .. } => format!("UNKNOWN-{chunk_type} [len={}]", body.len()),
    }
}

fn flags_str(f: ChunkFlags) -> String {
    let s = f.to_string();
    if s.is_empty() { "-".into() } else { s }
}

fn join(items: &[String]) -> String {
    if items.is_empty() { "none".into() } else { items.join("+") }
}

fn describe_template(t: &ChunkTemplate) -> String {
    let fields: Vec<String> = t
        .fields
        .iter()
        .map(|f| match &f.value {
            FieldValue::Wildcard => format!("{}=*", f.key),
            FieldValue::Literal(v) => format!("{}={v}", f.key),
        })
        .collect();
    format!("{} [{}]", t.kind, fields.join(", "))
}

fn int_of(t: &ChunkTemplate, key: &str) -> Option<u64> {
    t.literal(key).map(|v| parse_int(v).expect("validated at parse time"))
}

fn data_flags(t: &ChunkTemplate) -> ChunkFlags {
    t.literal("flags").map(|v| ChunkFlags::from_str(v).expect("validated at parse time")).unwrap_or(ChunkFlags::complete())
}

fn payload_of(t: &ChunkTemplate) -> Vec<u8> {
    let len = int_of(t, "len").map_or(DEFAULT_DATA_LEN, |v| v as usize);
    payload_pattern(int_of(t, "off").unwrap_or(0) as usize, len)
}

/// True iff every constrained field of `t` equals the corresponding field of `chunk`.
pub fn match_chunk(t: &ChunkTemplate, chunk: &Chunk) -> Result<(), String> {
    if t.kind != chunk.kind() {
        return Err(format!("chunk kind mismatch: expected {}, got {}", t.kind, chunk.kind()));
    }
    for f in &t.fields {
        let FieldValue::Literal(lit) = &f.value else { continue };
        if f.key == "vtag" {
            continue;
        }
        let want_int = || parse_int(lit).expect("validated at parse time");
        let ok = match (chunk, f.key.as_str()) {
            (Chunk::Data(d), "tsn") => d.tsn as u64 == want_int(),
            (Chunk::Data(d), "sid") => d.sid as u64 == want_int(),
            (Chunk::Data(d), "ssn") => d.ssn as u64 == want_int(),
            (Chunk::Data(d), "ppid") => d.ppid as u64 == want_int(),
            (Chunk::Data(d), "flags") => d.flags == data_flags(t),
            (Chunk::Data(d), "len") => d.payload.len() as u64 == want_int(),
            (Chunk::Data(d), "off") => d.payload == payload_pattern(want_int() as usize, d.payload.len()),
            (Chunk::IData(d), "tsn") => d.tsn as u64 == want_int(),
            (Chunk::IData(d), "sid") => d.sid as u64 == want_int(),
            (Chunk::IData(d), "mid") => d.mid as u64 == want_int(),
            (Chunk::IData(d), "fsn") => d.fsn() as u64 == want_int(),
            (Chunk::IData(d), "ppid") => d.ppid().map(u64::from) == Some(want_int()),
            (Chunk::IData(d), "flags") => d.flags == data_flags(t),
            (Chunk::IData(d), "len") => d.payload.len() as u64 == want_int(),
            (Chunk::IData(d), "off") => d.payload == payload_pattern(want_int() as usize, d.payload.len()),
            (Chunk::Sack(s), "cum_tsn_ack") => s.cum_tsn_ack as u64 == want_int(),
            (Chunk::Sack(s), "a_rwnd") => s.a_rwnd as u64 == want_int(),
            (Chunk::Sack(s), "gaps") => {
                let got: Vec<(u16, u16)> = s.gap_blocks.iter().map(|g| (g.start, g.end)).collect();
                parse_gaps(lit).expect("validated at parse time") == got
            }
            (Chunk::Sack(s), "dups") => parse_tsn_list(lit).expect("validated at parse time") == s.dup_tsns,
            (Chunk::ForwardTsn(fw), "new_cum_tsn") => fw.new_cum_tsn as u64 == want_int(),
            (Chunk::ForwardTsn(fw), "skipped") => {
                let got: Vec<(u16, u32, bool)> = fw.skipped.iter().map(|s| (s.sid, s.ssn as u32, false)).collect();
                parse_skipped(lit).expect("validated at parse time") == got
            }
            (Chunk::IForwardTsn(fw), "new_cum_tsn") => fw.new_cum_tsn as u64 == want_int(),
            (Chunk::IForwardTsn(fw), "skipped") => {
                let got: Vec<(u16, u32, bool)> = fw.skipped.iter().map(|s| (s.sid, s.mid, s.unordered)).collect();
                parse_skipped(lit).expect("validated at parse time") == got
            }
            (Chunk::Init(i) | Chunk::InitAck(i), key) => match key {
                "initiate_tag" => i.initiate_tag as u64 == want_int(),
                "a_rwnd" => i.a_rwnd as u64 == want_int(),
                "outbound_streams" => i.outbound_streams as u64 == want_int(),
                "inbound_streams" => i.inbound_streams as u64 == want_int(),
                "initial_tsn" => i.initial_tsn as u64 == want_int(),
                "extensions" => parse_features(lit).expect("validated at parse time").into_iter().collect::<BTreeSet<_>>() == i.extensions,
                "has" => i.extensions.contains(&Feature::from_str(lit).expect("validated at parse time")),
                "lacks" => !i.extensions.contains(&Feature::from_str(lit).expect("validated at parse time")),
                "cookie" => i.cookie.as_deref() == Some(parse_hex(lit).expect("validated at parse time").as_slice()),
                _ => false,
            },
            (Chunk::CookieEcho(c), "cookie") => *c == parse_hex(lit).expect("validated at parse time"),
            _ => false,
        };
        if !ok {
            return Err(format!("field {} mismatch: expected {lit}", f.key));
        }
    }
    Ok(())
}

struct Delivered {
    sid: u16,
    ppid: u32,
    ordered: bool,
    payload: Vec<u8>,
}

struct Runner {
    ep: Endpoint,
    opts: Options,
    now: f64,
    timers: BTreeMap<(u64, u64), TimerId>,
    timer_seq: u64,
    chunks: VecDeque<(f64, u32, Chunk)>,
    deliveries: VecDeque<Delivered>,
    last_cookie: Option<Vec<u8>>,
    log: Vec<String>,
    emitted: Vec<ChunkKind>,
}

/// Total order on finite non-negative times.
fn time_key(t: f64) -> u64 {
    t.max(0.0).to_bits()
}

impl Runner {
    fn process(&mut self, events: Vec<EndpointEvent>) {
        for e in events {
            match e {
                EndpointEvent::PacketOut(pkt) => {
                    for c in pkt.chunks {
                        self.log(format!("{:.6} < {} vtag={:#x}", self.now, describe(&c), pkt.header.verification_tag));
                        if let Chunk::InitAck(ack) = &c {
                            self.last_cookie = ack.cookie.clone();
                        }
                        self.emitted.push(c.kind());
                        self.chunks.push_back((self.now, pkt.header.verification_tag, c));
                    }
                }
                EndpointEvent::TimerSet { id, expiry } => {
                    self.timers.retain(|_, t| *t != id);
                    self.timers.insert((time_key(expiry), self.timer_seq), id);
                    self.timer_seq += 1;
                }
                EndpointEvent::TimerCancelled(id) => self.timers.retain(|_, t| *t != id),
                EndpointEvent::MessageDelivered { sid, ppid, payload, ordered, .. } => {
                    self.log(format!("{:.6} deliver sid={sid} ppid={ppid} ordered={ordered} len={}", self.now, payload.len()));
                    self.deliveries.push_back(Delivered { sid, ppid, ordered, payload });
                }
                EndpointEvent::MessageAbandoned { sid, message_id } => {
                    self.log(format!("{:.6} abandoned sid={sid} message={}", self.now, message_id.0));
                }
                EndpointEvent::Diagnostic(m) => {
                    self.log(format!("{:.6} note {m}", self.now));
                }
                EndpointEvent::AssocEstablished { negotiated_idata } => {
                    self.log(format!("{:.6} established idata={negotiated_idata}", self.now));
                }
            }
        }
    }

    fn log(&mut self, line: String) {
        self.log.push(line);
    }

    /// Fires every timer due at or before `t`, then sets the clock to `t`.
    fn advance_to(&mut self, t: f64) {
        while let Some((&(key, seq), &id)) = self.timers.iter().next() {
            let at = f64::from_bits(key);
            if at > t {
                break;
            }
            self.timers.remove(&(key, seq));
            self.now = self.now.max(at);
            let ev = self.ep.on_timer(id, self.now);
            self.process(ev);
        }
        self.now = self.now.max(t);
    }

    /// Lets the clock run until `ready` holds or the window closes.
    fn wait_until(&mut self, deadline: f64, ready: impl Fn(&Runner) -> bool) -> bool {
        loop {
            if ready(self) {
                return true;
            }
            match self.timers.keys().next().map(|&(k, _)| f64::from_bits(k)) {
                Some(at) if at <= deadline => self.advance_to(at),
                _ => {
                    self.now = self.now.max(deadline);
                    return ready(self);
                }
            }
        }
    }

    fn build_chunk(&self, t: &ChunkTemplate) -> Result<Chunk, String> {
        let int = |k: &str, d: u64| int_of(t, k).unwrap_or(d);
        let narrow = |k: &str, v: u64, max: u64| if v > max { Err(format!("field {k} out of range")) } else { Ok(v) };
        let required = |k: &str| int_of(t, k).ok_or_else(|| format!("{} needs field {k}", t.kind));
        let peer_ext = || {
            let mut e = BTreeSet::from([Feature::ForwardTsn]);
            if self.opts.peer_idata {
                e.insert(Feature::Interleaving);
            }
            e
        };
        let init = |cookie: Option<Vec<u8>>| -> Result<InitChunk, String> {
            Ok(InitChunk {
                initiate_tag: narrow("initiate_tag", int("initiate_tag", self.opts.peer_tag as u64), u32::MAX as u64)? as u32,
                a_rwnd: narrow("a_rwnd", int("a_rwnd", 65535), u32::MAX as u64)? as u32,
                outbound_streams: narrow("outbound_streams", int("outbound_streams", self.opts.peer_streams as u64), u16::MAX as u64)? as u16,
                inbound_streams: narrow("inbound_streams", int("inbound_streams", self.opts.peer_streams as u64), u16::MAX as u64)? as u16,
                initial_tsn: narrow("initial_tsn", int("initial_tsn", self.opts.peer_initial_tsn as u64), u32::MAX as u64)? as u32,
                extensions: match t.literal("extensions") {
                    Some(v) => parse_features(v)?.into_iter().collect(),
                    None => peer_ext(),
                },
                cookie,
            })
        };
        Ok(match t.kind {
            ChunkKind::Data => Chunk::Data(DataChunk {
                flags: data_flags(t),
                tsn: narrow("tsn", required("tsn")?, u32::MAX as u64)? as u32,
                sid: narrow("sid", int("sid", 0), u16::MAX as u64)? as u16,
                ssn: narrow("ssn", int("ssn", 0), u16::MAX as u64)? as u16,
                ppid: narrow("ppid", int("ppid", 0), u32::MAX as u64)? as u32,
                payload: payload_of(t),
            }),
            ChunkKind::IData => {
                let flags = data_flags(t);
                Chunk::IData(IDataChunk::new(
                    flags,
                    narrow("tsn", required("tsn")?, u32::MAX as u64)? as u32,
                    narrow("sid", int("sid", 0), u16::MAX as u64)? as u16,
                    narrow("mid", int("mid", 0), u32::MAX as u64)? as u32,
                    narrow("ppid", int("ppid", 0), u32::MAX as u64)? as u32,
                    narrow("fsn", int("fsn", 0), u32::MAX as u64)? as u32,
                    payload_of(t),
                ))
            }
            ChunkKind::Sack => Chunk::Sack(SackChunk {
                cum_tsn_ack: narrow("cum_tsn_ack", required("cum_tsn_ack")?, u32::MAX as u64)? as u32,
                a_rwnd: narrow("a_rwnd", int("a_rwnd", 65535), u32::MAX as u64)? as u32,
                gap_blocks: t.literal("gaps").map(parse_gaps).transpose()?.unwrap_or_default().into_iter().map(|(start, end)| GapBlock { start, end }).collect(),
                dup_tsns: t.literal("dups").map(parse_tsn_list).transpose()?.unwrap_or_default(),
            }),
            ChunkKind::ForwardTsn => {
                let skipped = t.literal("skipped").map(parse_skipped).transpose()?.unwrap_or_default();
                let skipped = skipped
                    .into_iter()
                    .map(|(sid, seq, u)| if u || seq > u16::MAX as u32 { Err("FORWARD-TSN skips are sid:ssn".to_string()) } else { Ok(SkippedSsn { sid, ssn: seq as u16 }) })
                    .collect::<Result<_, _>>()?;
                Chunk::ForwardTsn(ForwardTsnChunk { new_cum_tsn: narrow("new_cum_tsn", required("new_cum_tsn")?, u32::MAX as u64)? as u32, skipped })
            }
            ChunkKind::IForwardTsn => {
                let skipped = t.literal("skipped").map(parse_skipped).transpose()?.unwrap_or_default();
                let skipped = skipped.into_iter().map(|(sid, mid, unordered)| SkippedMid { sid, unordered, mid }).collect();
                Chunk::IForwardTsn(IForwardTsnChunk { new_cum_tsn: narrow("new_cum_tsn", required("new_cum_tsn")?, u32::MAX as u64)? as u32, skipped })
            }
            ChunkKind::Init => {
                if t.get("cookie").is_some() {
                    return Err("INIT carries no cookie".into());
                }
                Chunk::Init(init(None)?)
            }
            ChunkKind::InitAck => {
                let cookie = t.literal("cookie").map(parse_hex).transpose()?.unwrap_or_else(|| DEFAULT_COOKIE.to_vec());
                Chunk::InitAck(init(Some(cookie))?)
            }
            ChunkKind::CookieEcho => {
                let cookie = match t.literal("cookie") {
                    Some(v) => parse_hex(v)?,
                    None => self.last_cookie.clone().ok_or("COOKIE-ECHO needs a cookie and none was offered")?,
                };
                Chunk::CookieEcho(cookie)
            }
            ChunkKind::CookieAck => Chunk::CookieAck,
            ChunkKind::Unknown(c) => return Err(format!("cannot inject chunk type {c}")),
        })
    }

    fn inject(&mut self, t: &ChunkTemplate) -> Result<(), String> {
        let chunk = self.build_chunk(t)?;
        let default_tag = if t.kind == ChunkKind::Init { 0 } else { self.opts.cfg.initiate_tag };
        let vtag = int_of(t, "vtag").map_or(Ok(default_tag), |v| u32::try_from(v).map_err(|e| e.to_string()))?;
        self.log(format!("{:.6} > {} vtag={vtag:#x}", self.now, describe(&chunk)));
        let pkt = SctpPacket::new(self.opts.cfg.peer_port, self.opts.cfg.local_port, vtag).with_chunk(chunk);
        // Through the codec, so injected chunks obey the same limits as real traffic.
        let bytes = crate::wire::encode_packet(&pkt).map_err(|e| format!("cannot encode: {e}"))?;
        let pkt = crate::wire::decode_packet(&bytes).map_err(|e| format!("cannot decode: {e}"))?;
        let ev = self.ep.handle_packet(&pkt, self.now);
        self.process(ev);
        Ok(())
    }

    fn expect(&mut self, t: &ChunkTemplate, skip_sacks: bool) -> Result<(), (String, Option<String>)> {
        let deadline = self.now + self.opts.window;
        loop {
            let skip = |r: &Runner| r.chunks.iter().position(|(_, _, c)| !(skip_sacks && matches!(c, Chunk::Sack(_))));
            if !self.wait_until(deadline, |r| skip(r).is_some()) {
                return Err(("no matching emission within the expect window".into(), None));
            }
            let idx = skip(self).expect("wait returned ready");
            let skipped: Vec<_> = self.chunks.drain(..idx).collect();
            for (at, _, c) in skipped {
                self.log(format!("{at:.6} skipped {}", describe(&c)));
            }
            let (_, vtag, chunk) = self.chunks.pop_front().expect("index in range");
            let actual = Some(describe(&chunk));
            if let Some(want) = int_of(t, "vtag") {
                if want != vtag as u64 {
                    return Err((format!("vtag mismatch: expected {want:#x}, got {vtag:#x}"), actual));
                }
            }
            return match_chunk(t, &chunk).map_err(|r| (r, actual));
        }
    }

    fn send(&mut self, fields: &[Field]) -> Result<(), String> {
        let get = |k: &str| fields.iter().find(|f| f.key == k).and_then(|f| match &f.value {
            FieldValue::Literal(v) => Some(v.as_str()),
            FieldValue::Wildcard => None,
        });
        let sid = get("sid").map(parse_int).transpose()?.unwrap_or(0);
        let len = get("len").map(parse_int).transpose()?.unwrap_or(DEFAULT_DATA_LEN as u64) as usize;
        let mut msg = UserMessage::new(u16::try_from(sid).map_err(|e| e.to_string())?, payload_pattern(0, len));
        msg.ordered = get("ordered").map(parse_bool).transpose()?.unwrap_or(true);
        msg.ppid = get("ppid").map(parse_int).transpose()?.unwrap_or(0) as u32;
        msg.lifetime = get("lifetime").map(|v| v.parse::<f64>().map_err(|e| e.to_string())).transpose()?;
        msg.enqueue_time = self.now;
        self.log(format!("{:.6} send sid={sid} len={len}", self.now));
        let (_, ev) = self.ep.send_message(msg, self.now).map_err(|e| e.to_string())?;
        self.process(ev);
        Ok(())
    }

    fn recv(&mut self, fields: &[Field]) -> Result<(), (String, Option<String>)> {
        let deadline = self.now + self.opts.window;
        if !self.wait_until(deadline, |r| !r.deliveries.is_empty()) {
            return Err(("no delivery within the expect window".into(), None));
        }
        let d = self.deliveries.pop_front().expect("ready");
        let actual = Some(format!("deliver [sid={}, len={}, ordered={}, ppid={}]", d.sid, d.payload.len(), d.ordered, d.ppid));
        let mut off = 0usize;
        for f in fields {
            let FieldValue::Literal(v) = &f.value else { continue };
            let ok = match f.key.as_str() {
                "sid" => parse_int(v).ok() == Some(d.sid as u64),
                "len" => parse_int(v).ok() == Some(d.payload.len() as u64),
                "ppid" => parse_int(v).ok() == Some(d.ppid as u64),
                "ordered" => parse_bool(v).ok() == Some(d.ordered),
                "off" => {
                    off = parse_int(v).unwrap_or(0) as usize;
                    true
                }
                _ => false,
            };
            if !ok {
                return Err((format!("delivery field {} mismatch: expected {v}", f.key), actual));
            }
        }
        if d.payload != payload_pattern(off, d.payload.len()) {
            return Err(("delivered payload differs from the injected bytes".into(), actual));
        }
        Ok(())
    }
}

fn format_fields(fields: &[Field]) -> String {
    let parts: Vec<String> = fields
        .iter()
        .map(|f| match &f.value {
            FieldValue::Wildcard => format!("{}=*", f.key),
            FieldValue::Literal(v) => format!("{}={v}", f.key),
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

/// Runs `script` against a fresh endpoint built from `base` plus the script's options.
///
/// Events and options whose `ifdef` guards are not all in `features` are skipped.
pub fn run_script(script: &Script, base: &AssociationConfig, features: &[String]) -> RunResult {
    let mut declared: BTreeSet<String> = DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect();
    declared.extend(features.iter().cloned());
    let fail = |line: usize, time: f64, expected: String, actual: Option<String>, reason: String, log: Vec<String>, emitted: Vec<ChunkKind>| RunResult {
        failure: Some(Mismatch { line, time, expected, actual, reason }),
        log,
        emitted,
    };
    let opts = match options(script, base, &declared) {
        Ok(o) => o,
        Err(e) => return fail(0, 0.0, "valid options".into(), None, e, Vec::new(), Vec::new()),
    };
    let ep = match Endpoint::new(opts.cfg.clone()) {
        Ok(ep) => ep,
        Err(e) => return fail(0, 0.0, "valid endpoint configuration".into(), None, e.to_string(), Vec::new(), Vec::new()),
    };
    let mut r = Runner {
        ep,
        opts,
        now: 0.0,
        timers: BTreeMap::new(),
        timer_seq: 0,
        chunks: VecDeque::new(),
        deliveries: VecDeque::new(),
        last_cookie: None,
        log: Vec::new(),
        emitted: Vec::new(),
    };
    let mut last = 0.0;
    for ev in script.events.iter().filter(|e| e.guard.iter().all(|g| declared.contains(g))) {
        let at = match ev.time {
            ScriptTime::Relative(d) => last + d,
            ScriptTime::Absolute(t) => t,
        };
        last = at.max(last);
        r.advance_to(last);
        let outcome: Result<(), (String, Option<String>)> = match &ev.action {
            Action::Inject(t) => r.inject(t).map_err(|e| (e, None)),
            Action::Expect { template, skip_sacks } => r.expect(template, *skip_sacks),
            Action::Connect => match r.ep.initiate(r.now) {
                Ok(events) => {
                    r.process(events);
                    Ok(())
                }
                Err(e) => Err((e.to_string(), None)),
            },
            Action::Send(fields) => r.send(fields).map_err(|e| (e, None)),
            Action::Recv(fields) => r.recv(fields),
            Action::Wait => Ok(()),
        };
        if let Err((reason, actual)) = outcome {
            let expected = match &ev.action {
                Action::Expect { template, .. } | Action::Inject(template) => describe_template(template),
                Action::Recv(fields) => format!("deliver {}", format_fields(fields)),
                other => other.to_string(),
            };
            let now = r.now;
            return fail(ev.line, now, expected, actual, reason, r.log, r.emitted);
        }
        // Expect waits may have moved the clock past the script time.
        last = last.max(r.now);
    }
    if r.opts.strict {
        if let Some((at, _, c)) = r.chunks.iter().find(|(_, _, c)| !matches!(c, Chunk::Sack(_))) {
            let (at, actual) = (*at, describe(c));
            return fail(0, at, "no further emissions (strict)".into(), Some(actual), "unexpected emission".into(), r.log, r.emitted);
        }
        if let Some(d) = r.deliveries.front() {
            let actual = format!("deliver [sid={}, len={}]", d.sid, d.payload.len());
            let now = r.now;
            return fail(0, now, "no further deliveries (strict)".into(), Some(actual), "unexpected delivery".into(), r.log, r.emitted);
        }
    }
    RunResult { failure: None, log: r.log, emitted: r.emitted }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    /// `Err` holds a read or parse failure.
    pub result: Result<RunResult, String>,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.result.as_ref().is_ok_and(|r| r.passed())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed())
    }

    pub fn failed_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.passed()).count()
    }

    /// TAP report: plan, one line per script, diagnostics for failures, and a summary.
    pub fn tap(&self) -> String {
        let mut out = format!("1..{}\n", self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            let n = i + 1;
            match &e.result {
                Ok(r) if r.passed() => writeln!(out, "ok {n} {}", e.name),
                Ok(r) => {
                    let m = r.failure.as_ref().expect("failed run has a mismatch");
                    writeln!(out, "not ok {n} {}", e.name).and_then(|_| {
                        writeln!(out, "#   line {} at {:.6}s: {}", m.line, m.time, m.reason)?;
                        writeln!(out, "#   expected: {}", m.expected)?;
                        writeln!(out, "#   actual:   {}", m.actual.as_deref().unwrap_or("nothing"))
                    })
                }
                Err(reason) => writeln!(out, "not ok {n} {}", e.name).and_then(|_| writeln!(out, "#   {reason}")),
            }
            .expect("write to String");
        }
        let total = self.entries.len();
        let failed = self.failed_count();
        writeln!(out, "# {total} tests, {} passed, {failed} failed", total - failed).expect("write to String");
        out
    }
}

/// Runs every `.pdr` file in `dir`, sorted by file name.
pub fn run_suite(dir: &Path, features: &[String]) -> std::io::Result<SuiteReport> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pdr"))
        .collect();
    paths.sort();
    let base = AssociationConfig::default();
    let entries = paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let result = std::fs::read_to_string(&p)
                .map_err(|e| format!("cannot read {}: {e}", p.display()))
                .and_then(|text| parse_script(&text).map_err(|e| e.to_string()))
                .map(|script| run_script(&script, &base, features));
            SuiteEntry { name, result }
        })
        .collect();
    Ok(SuiteReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> RunResult {
        let s = parse_script(text).unwrap();
        run_script(&s, &AssociationConfig::default(), &[])
    }

    fn assert_pass(text: &str) {
        let r = run(text);
        assert!(r.passed(), "{:?}\n{}", r.failure, r.log.join("\n"));
    }

    const HANDSHAKE: &str = "\
opt local.idata = true
opt peer.idata = true
+0 connect
+0 expect INIT [initiate_tag=0x10000001, has=INTERLEAVING]
+0.05 inject INIT-ACK []
+0 expect COOKIE-ECHO []
+0.05 inject COOKIE-ACK []
";

    #[test]
    fn client_handshake_then_idata() {
        let t = HANDSHAKE;
        assert_pass(&format!("{t}+0 send [sid=1, len=40, ppid=7]\n+0 expect I-DATA [tsn=1, sid=1, mid=0, ppid=7, flags=BE, len=40, off=0]\n"));
    }

    #[test]
    fn idata_expected_but_data_sent() {
        let t = HANDSHAKE.replace("opt peer.idata = true", "opt peer.idata = false");
        let r = run(&format!("{t}+0 send [len=40]\n+0 expect I-DATA []\n"));
        let m = r.failure.unwrap();
        assert!(m.reason.contains("chunk kind mismatch"), "{}", m.reason);
        assert!(m.actual.unwrap().starts_with("DATA"));
    }

    #[test]
    fn duplicate_tsn_reported() {
        let t = HANDSHAKE;
        assert_pass(&format!(
            "{t}+0 inject I-DATA [tsn=1, len=10]\n+0 expect SACK [cum_tsn_ack=1, dups=none]\n+0 recv [sid=0, len=10]\n\
             +0 inject I-DATA [tsn=1, len=10]\n+0 expect SACK [cum_tsn_ack=1, dups=1]\n"
        ));
    }

    #[test]
    fn expect_times_out() {
        let r = run("+0 expect INIT []\n");
        let m = r.failure.unwrap();
        assert!(m.reason.contains("window"));
        assert_eq!(m.time, 1.0);
    }

    #[test]
    fn timers_drive_retransmission() {
        let t = HANDSHAKE;
        assert_pass(&format!("{t}+0 send [len=40]\n+0 expect I-DATA [tsn=1]\n+0.5 expect I-DATA [tsn=1]\n"));
    }

    #[test]
    fn strict_flags_leftovers() {
        let t = HANDSHAKE;
        let r = run(&format!("opt strict = true\n{t}+0 send [len=40]\n"));
        assert_eq!(r.failure.unwrap().reason, "unexpected emission");
        assert!(!run("opt strict = true\n+0 connect\n").passed());
        assert!(run("+0 connect\n").passed());
    }

    #[test]
    fn guarded_events_skipped_unless_declared() {
        let text = "ifdef STRICT_INPUT\n+0 expect INIT []\nendif\n";
        assert!(run(text).passed());
        let s = parse_script(text).unwrap();
        assert!(!run_script(&s, &AssociationConfig::default(), &["STRICT_INPUT".into()]).passed());
        assert!(run("ifdef SIMULATION\n+0 connect\n+0 expect INIT []\nendif\n").passed());
    }

    #[test]
    fn flag_string_matching() {
        let chunk = Chunk::Data(DataChunk { flags: ChunkFlags::complete(), tsn: 3, sid: 0, ssn: 0, ppid: 0, payload: vec![1] });
        let tpl = |f: &str| super::super::parse_script(&format!("+0 expect DATA [{f}]\n")).map(|s| match &s.events[0].action {
            Action::Expect { template, .. } => template.clone(),
            _ => unreachable!(),
        });
        assert!(match_chunk(&tpl("flags=BE").unwrap(), &chunk).is_ok());
        assert!(match_chunk(&tpl("flags=UBE").unwrap(), &chunk).is_err());
        assert!(match_chunk(&tpl("tsn=*, sid=*").unwrap(), &chunk).is_ok());
        assert!(match_chunk(&tpl("tsn=4").unwrap(), &chunk).is_err());
        assert!(match_chunk(&tpl("").unwrap(), &Chunk::CookieAck).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let t = HANDSHAKE;
        let text = format!("{t}+0 send [len=4000]\n+0 expect I-DATA [] skip-sacks\n");
        assert_eq!(run(&text), run(&text));
    }

    #[test]
    fn suite_on_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_suite(dir.path(), &[]).unwrap();
        assert!(report.passed());
        assert!(report.tap().contains("# 0 tests"));
    }

    #[test]
    fn suite_names_failures() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a_good.pdr"), "+0 connect\n+0 expect INIT []\n").unwrap();
        std::fs::write(dir.path().join("b_bad.pdr"), "+0 connect\n+0 expect DATA []\n").unwrap();
        std::fs::write(dir.path().join("c_broken.pdr"), "ifdef X\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let report = run_suite(dir.path(), &[]).unwrap();
        let tap = report.tap();
        assert!(!report.passed());
        assert!(tap.contains("ok 1 a_good\n"));
        assert!(tap.contains("not ok 2 b_bad\n"));
        assert!(tap.contains("not ok 3 c_broken\n"));
        assert!(tap.contains("# 3 tests, 1 passed, 2 failed"));
    }
}

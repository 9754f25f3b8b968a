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

//! Chunk records for the base (DATA, FORWARD-TSN) and interleaving (I-DATA,
//! I-FORWARD-TSN) families, plus the handshake and SACK chunks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::DecodeError;
use super::EncodeError;

pub const CHUNK_HEADER_SIZE: usize = 4;
pub const DATA_HEADER_SIZE: usize = 16;
pub const IDATA_HEADER_SIZE: usize = 20;
const SACK_MIN_SIZE: usize = 16;
const FORWARD_TSN_MIN_SIZE: usize = 8;
const INIT_MIN_SIZE: usize = 20;
const MAX_CHUNK_LENGTH: usize = u16::MAX as usize;

pub const TYPE_DATA: u8 = 0;
pub const TYPE_INIT: u8 = 1;
pub const TYPE_INIT_ACK: u8 = 2;
pub const TYPE_SACK: u8 = 3;
pub const TYPE_COOKIE_ECHO: u8 = 10;
pub const TYPE_COOKIE_ACK: u8 = 11;
pub const TYPE_IDATA: u8 = 64;
pub const TYPE_FORWARD_TSN: u8 = 192;
pub const TYPE_IFORWARD_TSN: u8 = 194;

/// Supported Extensions parameter carried in INIT / INIT-ACK.
pub const PARAM_SUPPORTED_EXTENSIONS: u16 = 0x8008;

const FLAG_IMMEDIATE: u8 = 0x08;
const FLAG_UNORDERED: u8 = 0x04;
const FLAG_BEGIN: u8 = 0x02;
const FLAG_END: u8 = 0x01;

/// Flags byte of DATA and I-DATA chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ChunkFlags {
    pub unordered: bool,
    pub begin: bool,
    pub end: bool,
    pub immediate: bool,
}

impl ChunkFlags {
    /// B and E set: a message carried in a single chunk.
    pub const fn complete() -> Self {
        ChunkFlags { unordered: false, begin: true, end: true, immediate: false }
    }

    pub fn from_byte(b: u8) -> Self {
        ChunkFlags {
            unordered: b & FLAG_UNORDERED != 0,
            begin: b & FLAG_BEGIN != 0,
            end: b & FLAG_END != 0,
            immediate: b & FLAG_IMMEDIATE != 0,
        }
    }

    pub fn to_byte(self) -> u8 {
        let mut b = 0;
        if self.unordered {
            b |= FLAG_UNORDERED;
        }
        if self.begin {
            b |= FLAG_BEGIN;
        }
        if self.end {
            b |= FLAG_END;
        }
        if self.immediate {
            b |= FLAG_IMMEDIATE;
        }
        b
    }
}

/// Renders as the letters of the set flags in `UIBE` order, e.g. `"BE"`, `"U"`, or `""`.
impl fmt::Display for ChunkFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (set, c) in [(self.unordered, 'U'), (self.immediate, 'I'), (self.begin, 'B'), (self.end, 'E')] {
            if set {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for ChunkFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut flags = ChunkFlags::default();
        if s == "-" {
            return Ok(flags);
        }
        for c in s.chars() {
            let slot = match c {
                'U' => &mut flags.unordered,
                'I' => &mut flags.immediate,
                'B' => &mut flags.begin,
                'E' => &mut flags.end,
                other => return Err(format!("unknown flag '{other}'")),
            };
            if *slot {
                return Err(format!("flag '{c}' repeated"));
            }
            *slot = true;
        }
        Ok(flags)
    }
}

/// DATA chunk.
///
/// ```txt
///  0                   1                   2                   3
///  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |   Type = 0    |  Res  |I|U|B|E|           Length              |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |                              TSN                              |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |      Stream Identifier        |   Stream Sequence Number      |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |                  Payload Protocol Identifier                  |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// /                          User Data                            /
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataChunk {
    pub flags: ChunkFlags,
    pub tsn: u32,
    pub sid: u16,
    pub ssn: u16,
    pub ppid: u32,
    pub payload: Vec<u8>,
}

/// I-DATA chunk.
///
/// ```txt
///  0                   1                   2                   3
///  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |   Type = 64   |  Res  |I|U|B|E|           Length              |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |                              TSN                              |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |      Stream Identifier        |           Reserved            |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |                      Message Identifier                       |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |    Payload Protocol Identifier / Fragment Sequence Number     |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// /                           User Data                           /
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// ```
///
/// The fifth word holds the PPID on the B fragment, whose FSN is 0, and the
/// FSN on every other fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IDataChunk {
    pub flags: ChunkFlags,
    pub tsn: u32,
    pub sid: u16,
    pub mid: u32,
    pub ppid_or_fsn: u32,
    pub payload: Vec<u8>,
}

impl IDataChunk {
    /// Builds a fragment, placing `ppid` or `fsn` in the shared field according to the B flag.
    pub fn new(flags: ChunkFlags, tsn: u32, sid: u16, mid: u32, ppid: u32, fsn: u32, payload: Vec<u8>) -> Self {
        let ppid_or_fsn = if flags.begin { ppid } else { fsn };
        IDataChunk { flags, tsn, sid, mid, ppid_or_fsn, payload }
    }

    pub fn ppid(&self) -> Option<u32> {
        self.flags.begin.then_some(self.ppid_or_fsn)
    }

    pub fn fsn(&self) -> u32 {
        if self.flags.begin {
            0
        } else {
            self.ppid_or_fsn
        }
    }
}

/// Gap ack block, offsets relative to the cumulative TSN ack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapBlock {
    pub start: u16,
    pub end: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SackChunk {
    pub cum_tsn_ack: u32,
    pub a_rwnd: u32,
    pub gap_blocks: Vec<GapBlock>,
    pub dup_tsns: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkippedSsn {
    pub sid: u16,
    pub ssn: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardTsnChunk {
    pub new_cum_tsn: u32,
    pub skipped: Vec<SkippedSsn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkippedMid {
    pub sid: u16,
    pub unordered: bool,
    pub mid: u32,
}

/// I-FORWARD-TSN chunk. Each skipped entry is `sid(16) | reserved(15) U(1) | mid(32)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IForwardTsnChunk {
    pub new_cum_tsn: u32,
    pub skipped: Vec<SkippedMid>,
}

/// Extension advertised through the Supported Extensions parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    /// I-DATA (user message interleaving).
    Interleaving,
    ForwardTsn,
    IForwardTsn,
    Other(u8),
}

impl Feature {
    pub fn from_code(code: u8) -> Self {
        match code {
            TYPE_IDATA => Feature::Interleaving,
            TYPE_FORWARD_TSN => Feature::ForwardTsn,
            TYPE_IFORWARD_TSN => Feature::IForwardTsn,
            other => Feature::Other(other),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Feature::Interleaving => TYPE_IDATA,
            Feature::ForwardTsn => TYPE_FORWARD_TSN,
            Feature::IForwardTsn => TYPE_IFORWARD_TSN,
            Feature::Other(c) => c,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Interleaving => f.write_str("INTERLEAVING"),
            Feature::ForwardTsn => f.write_str("FORWARD_TSN"),
            Feature::IForwardTsn => f.write_str("I_FORWARD_TSN"),
            Feature::Other(c) => write!(f, "EXT_{c}"),
        }
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INTERLEAVING" => Ok(Feature::Interleaving),
            "FORWARD_TSN" => Ok(Feature::ForwardTsn),
            "I_FORWARD_TSN" => Ok(Feature::IForwardTsn),
            other => other
                .strip_prefix("EXT_")
                .and_then(|c| c.parse::<u8>().ok())
                .map(Feature::from_code)
                .ok_or_else(|| format!("unknown feature '{other}'")),
        }
    }
}

/// Body shared by INIT and INIT-ACK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitChunk {
    pub initiate_tag: u32,
    pub a_rwnd: u32,
    pub outbound_streams: u16,
    pub inbound_streams: u16,
    pub initial_tsn: u32,
    pub extensions: BTreeSet<Feature>,
    /// State cookie; only meaningful in INIT-ACK.
    pub cookie: Option<Vec<u8>>,
}

impl InitChunk {
    pub fn offers_interleaving(&self) -> bool {
        self.extensions.contains(&Feature::Interleaving)
    }
}

const PARAM_STATE_COOKIE: u16 = 7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Chunk {
    Data(DataChunk),
    Init(InitChunk),
    InitAck(InitChunk),
    Sack(SackChunk),
    CookieEcho(Vec<u8>),
    CookieAck,
    IData(IDataChunk),
    ForwardTsn(ForwardTsnChunk),
    IForwardTsn(IForwardTsnChunk),
    /// Any chunk type this codec does not interpret.
    Unknown { chunk_type: u8, flags: u8, body: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChunkKind {
    Data,
    Init,
    InitAck,
    Sack,
    CookieEcho,
    CookieAck,
    IData,
    ForwardTsn,
    IForwardTsn,
    Unknown(u8),
}

impl ChunkKind {
    pub fn type_code(self) -> u8 {
        match self {
            ChunkKind::Data => TYPE_DATA,
            ChunkKind::Init => TYPE_INIT,
            ChunkKind::InitAck => TYPE_INIT_ACK,
            ChunkKind::Sack => TYPE_SACK,
            ChunkKind::CookieEcho => TYPE_COOKIE_ECHO,
            ChunkKind::CookieAck => TYPE_COOKIE_ACK,
            ChunkKind::IData => TYPE_IDATA,
            ChunkKind::ForwardTsn => TYPE_FORWARD_TSN,
            ChunkKind::IForwardTsn => TYPE_IFORWARD_TSN,
            ChunkKind::Unknown(t) => t,
        }
    }

    fn min_length(self) -> usize {
        match self {
            ChunkKind::Data => DATA_HEADER_SIZE + 1,
            ChunkKind::IData => IDATA_HEADER_SIZE + 1,
            ChunkKind::Init | ChunkKind::InitAck => INIT_MIN_SIZE,
            ChunkKind::Sack => SACK_MIN_SIZE,
            ChunkKind::ForwardTsn | ChunkKind::IForwardTsn => FORWARD_TSN_MIN_SIZE,
            ChunkKind::CookieEcho | ChunkKind::CookieAck | ChunkKind::Unknown(_) => CHUNK_HEADER_SIZE,
        }
    }

    fn from_code(code: u8) -> Self {
        match code {
            TYPE_DATA => ChunkKind::Data,
            TYPE_INIT => ChunkKind::Init,
            TYPE_INIT_ACK => ChunkKind::InitAck,
            TYPE_SACK => ChunkKind::Sack,
            TYPE_COOKIE_ECHO => ChunkKind::CookieEcho,
            TYPE_COOKIE_ACK => ChunkKind::CookieAck,
            TYPE_IDATA => ChunkKind::IData,
            TYPE_FORWARD_TSN => ChunkKind::ForwardTsn,
            TYPE_IFORWARD_TSN => ChunkKind::IForwardTsn,
            other => ChunkKind::Unknown(other),
        }
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ChunkKind::Data => "DATA",
            ChunkKind::Init => "INIT",
            ChunkKind::InitAck => "INIT-ACK",
            ChunkKind::Sack => "SACK",
            ChunkKind::CookieEcho => "COOKIE-ECHO",
            ChunkKind::CookieAck => "COOKIE-ACK",
            ChunkKind::IData => "I-DATA",
            ChunkKind::ForwardTsn => "FORWARD-TSN",
            ChunkKind::IForwardTsn => "I-FORWARD-TSN",
            ChunkKind::Unknown(t) => return write!(f, "UNKNOWN-{t}"),
        };
        f.write_str(name)
    }
}

impl FromStr for ChunkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "DATA" => ChunkKind::Data,
            "INIT" => ChunkKind::Init,
            "INIT-ACK" => ChunkKind::InitAck,
            "SACK" => ChunkKind::Sack,
            "COOKIE-ECHO" => ChunkKind::CookieEcho,
            "COOKIE-ACK" => ChunkKind::CookieAck,
            "I-DATA" => ChunkKind::IData,
            "FORWARD-TSN" => ChunkKind::ForwardTsn,
            "I-FORWARD-TSN" => ChunkKind::IForwardTsn,
            other => return Err(format!("unknown chunk name '{other}'")),
        })
    }
}

impl Chunk {
    pub fn kind(&self) -> ChunkKind {
        match self {
            Chunk::Data(_) => ChunkKind::Data,
            Chunk::Init(_) => ChunkKind::Init,
            Chunk::InitAck(_) => ChunkKind::InitAck,
            Chunk::Sack(_) => ChunkKind::Sack,
            Chunk::CookieEcho(_) => ChunkKind::CookieEcho,
            Chunk::CookieAck => ChunkKind::CookieAck,
            Chunk::IData(_) => ChunkKind::IData,
            Chunk::ForwardTsn(_) => ChunkKind::ForwardTsn,
            Chunk::IForwardTsn(_) => ChunkKind::IForwardTsn,
            Chunk::Unknown { chunk_type, .. } => ChunkKind::Unknown(*chunk_type),
        }
    }

    /// Value of the chunk length field (header plus body, padding excluded).
    pub fn length(&self) -> usize {
        CHUNK_HEADER_SIZE
            + match self {
                Chunk::Data(d) => DATA_HEADER_SIZE - CHUNK_HEADER_SIZE + d.payload.len(),
                Chunk::IData(d) => IDATA_HEADER_SIZE - CHUNK_HEADER_SIZE + d.payload.len(),
                Chunk::Init(i) | Chunk::InitAck(i) => init_body_len(i),
                Chunk::Sack(s) => 12 + 4 * s.gap_blocks.len() + 4 * s.dup_tsns.len(),
                Chunk::CookieEcho(c) => c.len(),
                Chunk::CookieAck => 0,
                Chunk::ForwardTsn(f) => 4 + 4 * f.skipped.len(),
                Chunk::IForwardTsn(f) => 4 + 8 * f.skipped.len(),
                Chunk::Unknown { body, .. } => body.len(),
            }
    }

    /// Bytes the chunk occupies on the wire, including padding.
    pub fn wire_size(&self) -> usize {
        pad4(self.length())
    }

    /// Appends the chunk (with padding) to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), EncodeError> {
        let length = self.length();
        let kind = self.kind();
        if length > MAX_CHUNK_LENGTH {
            return Err(EncodeError::ChunkTooLarge { chunk_type: kind.type_code(), length });
        }
        let flags = match self {
            Chunk::Data(d) => {
                if d.payload.is_empty() {
                    return Err(EncodeError::EmptyPayload);
                }
                d.flags.to_byte()
            }
            Chunk::IData(d) => {
                if d.payload.is_empty() {
                    return Err(EncodeError::EmptyPayload);
                }
                d.flags.to_byte()
            }
            Chunk::Unknown { flags, .. } => *flags,
            _ => 0,
        };
        let start = out.len();
        out.push(kind.type_code());
        out.push(flags);
        out.extend_from_slice(&(length as u16).to_be_bytes());
        match self {
            Chunk::Data(d) => {
                out.extend_from_slice(&d.tsn.to_be_bytes());
                out.extend_from_slice(&d.sid.to_be_bytes());
                out.extend_from_slice(&d.ssn.to_be_bytes());
                out.extend_from_slice(&d.ppid.to_be_bytes());
                out.extend_from_slice(&d.payload);
            }
            Chunk::IData(d) => {
                out.extend_from_slice(&d.tsn.to_be_bytes());
                out.extend_from_slice(&d.sid.to_be_bytes());
                out.extend_from_slice(&[0, 0]);
                out.extend_from_slice(&d.mid.to_be_bytes());
                out.extend_from_slice(&d.ppid_or_fsn.to_be_bytes());
                out.extend_from_slice(&d.payload);
            }
            Chunk::Init(i) | Chunk::InitAck(i) => encode_init(i, out),
            Chunk::Sack(s) => {
                out.extend_from_slice(&s.cum_tsn_ack.to_be_bytes());
                out.extend_from_slice(&s.a_rwnd.to_be_bytes());
                out.extend_from_slice(&(s.gap_blocks.len() as u16).to_be_bytes());
                out.extend_from_slice(&(s.dup_tsns.len() as u16).to_be_bytes());
                for g in &s.gap_blocks {
                    out.extend_from_slice(&g.start.to_be_bytes());
                    out.extend_from_slice(&g.end.to_be_bytes());
                }
                for d in &s.dup_tsns {
                    out.extend_from_slice(&d.to_be_bytes());
                }
            }
            Chunk::CookieEcho(c) => out.extend_from_slice(c),
            Chunk::CookieAck => {}
            Chunk::ForwardTsn(f) => {
                out.extend_from_slice(&f.new_cum_tsn.to_be_bytes());
                for s in &f.skipped {
                    out.extend_from_slice(&s.sid.to_be_bytes());
                    out.extend_from_slice(&s.ssn.to_be_bytes());
                }
            }
            Chunk::IForwardTsn(f) => {
                out.extend_from_slice(&f.new_cum_tsn.to_be_bytes());
                for s in &f.skipped {
                    out.extend_from_slice(&s.sid.to_be_bytes());
                    out.extend_from_slice(&u16::from(s.unordered).to_be_bytes());
                    out.extend_from_slice(&s.mid.to_be_bytes());
                }
            }
            Chunk::Unknown { body, .. } => out.extend_from_slice(body),
        }
        debug_assert_eq!(out.len() - start, length);
        out.resize(start + pad4(length), 0);
        Ok(())
    }

    /// Parses one chunk from the front of `data`, returning it and the bytes after its padding.
    pub fn decode(data: &[u8]) -> Result<(Chunk, &[u8]), DecodeError> {
        if data.len() < CHUNK_HEADER_SIZE {
            return Err(DecodeError::Truncated { needed: CHUNK_HEADER_SIZE, available: data.len() });
        }
        let chunk_type = data[0];
        let flags = data[1];
        let length = u16::from_be_bytes([data[2], data[3]]) as usize;
        let kind = ChunkKind::from_code(chunk_type);
        if length < kind.min_length() {
            return Err(DecodeError::ChunkTooShort { chunk_type, length, minimum: kind.min_length() });
        }
        if length > data.len() {
            return Err(DecodeError::Truncated { needed: length, available: data.len() });
        }
        let body = &data[CHUNK_HEADER_SIZE..length];
        let rest = &data[pad4(length).min(data.len())..];
        let chunk = match kind {
            ChunkKind::Data => Chunk::Data(DataChunk {
                flags: ChunkFlags::from_byte(flags),
                tsn: be32(&body[0..]),
                sid: be16(&body[4..]),
                ssn: be16(&body[6..]),
                ppid: be32(&body[8..]),
                payload: body[12..].to_vec(),
            }),
            ChunkKind::IData => Chunk::IData(IDataChunk {
                flags: ChunkFlags::from_byte(flags),
                tsn: be32(&body[0..]),
                sid: be16(&body[4..]),
                mid: be32(&body[8..]),
                ppid_or_fsn: be32(&body[12..]),
                payload: body[16..].to_vec(),
            }),
            ChunkKind::Init => Chunk::Init(decode_init(chunk_type, body)?),
            ChunkKind::InitAck => Chunk::InitAck(decode_init(chunk_type, body)?),
            ChunkKind::Sack => {
                let gaps = be16(&body[8..]) as usize;
                let dups = be16(&body[10..]) as usize;
                let needed = 12 + 4 * gaps + 4 * dups;
                if body.len() != needed {
                    return Err(DecodeError::ChunkTooShort {
                        chunk_type,
                        length,
                        minimum: CHUNK_HEADER_SIZE + needed,
                    });
                }
                let gap_blocks = body[12..12 + 4 * gaps]
                    .chunks_exact(4)
                    .map(|g| GapBlock { start: be16(g), end: be16(&g[2..]) })
                    .collect();
                let dup_tsns = body[12 + 4 * gaps..].chunks_exact(4).map(be32).collect();
                Chunk::Sack(SackChunk { cum_tsn_ack: be32(body), a_rwnd: be32(&body[4..]), gap_blocks, dup_tsns })
            }
            ChunkKind::CookieEcho => Chunk::CookieEcho(body.to_vec()),
            ChunkKind::CookieAck => Chunk::CookieAck,
            ChunkKind::ForwardTsn => {
                if (body.len() - 4) % 4 != 0 {
                    return Err(DecodeError::Malformed { chunk_type, reason: "skip list not a multiple of 4 bytes" });
                }
                let skipped = body[4..].chunks_exact(4).map(|s| SkippedSsn { sid: be16(s), ssn: be16(&s[2..]) }).collect();
                Chunk::ForwardTsn(ForwardTsnChunk { new_cum_tsn: be32(body), skipped })
            }
            ChunkKind::IForwardTsn => {
                if (body.len() - 4) % 8 != 0 {
                    return Err(DecodeError::Malformed { chunk_type, reason: "skip list not a multiple of 8 bytes" });
                }
                let skipped = body[4..]
                    .chunks_exact(8)
                    .map(|s| SkippedMid { sid: be16(s), unordered: be16(&s[2..]) & 1 != 0, mid: be32(&s[4..]) })
                    .collect();
                Chunk::IForwardTsn(IForwardTsnChunk { new_cum_tsn: be32(body), skipped })
            }
            ChunkKind::Unknown(_) => Chunk::Unknown { chunk_type, flags, body: body.to_vec() },
        };
        Ok((chunk, rest))
    }
}

fn init_body_len(i: &InitChunk) -> usize {
    let mut len = 16;
    if !i.extensions.is_empty() {
        len += pad4(4 + i.extensions.len());
    }
    if let Some(cookie) = &i.cookie {
        len += pad4(4 + cookie.len());
    }
    len
}

fn encode_init(i: &InitChunk, out: &mut Vec<u8>) {
    out.extend_from_slice(&i.initiate_tag.to_be_bytes());
    out.extend_from_slice(&i.a_rwnd.to_be_bytes());
    out.extend_from_slice(&i.outbound_streams.to_be_bytes());
    out.extend_from_slice(&i.inbound_streams.to_be_bytes());
    out.extend_from_slice(&i.initial_tsn.to_be_bytes());
    if !i.extensions.is_empty() {
        let codes: Vec<u8> = i.extensions.iter().map(|f| f.code()).collect();
        push_param(out, PARAM_SUPPORTED_EXTENSIONS, &codes);
    }
    if let Some(cookie) = &i.cookie {
        push_param(out, PARAM_STATE_COOKIE, cookie);
    }
}

fn push_param(out: &mut Vec<u8>, param_type: u16, value: &[u8]) {
    let len = 4 + value.len();
    out.extend_from_slice(&param_type.to_be_bytes());
    out.extend_from_slice(&(len as u16).to_be_bytes());
    out.extend_from_slice(value);
    out.resize(out.len() + pad4(len) - len, 0);
}

fn decode_init(chunk_type: u8, body: &[u8]) -> Result<InitChunk, DecodeError> {
    let mut init = InitChunk {
        initiate_tag: be32(body),
        a_rwnd: be32(&body[4..]),
        outbound_streams: be16(&body[8..]),
        inbound_streams: be16(&body[10..]),
        initial_tsn: be32(&body[12..]),
        extensions: BTreeSet::new(),
        cookie: None,
    };
    let mut params = &body[16..];
    while !params.is_empty() {
        if params.len() < 4 {
            return Err(DecodeError::Malformed { chunk_type, reason: "truncated parameter header" });
        }
        let param_type = be16(params);
        let len = be16(&params[2..]) as usize;
        if len < 4 || len > params.len() {
            return Err(DecodeError::Malformed { chunk_type, reason: "bad parameter length" });
        }
        let value = &params[4..len];
        match param_type {
            PARAM_SUPPORTED_EXTENSIONS => init.extensions.extend(value.iter().map(|&c| Feature::from_code(c))),
            PARAM_STATE_COOKIE => init.cookie = Some(value.to_vec()),
            _ => {}
        }
        params = &params[pad4(len).min(params.len())..];
    }
    Ok(init)
}

pub(crate) const fn pad4(n: usize) -> usize {
    (n + 3) & !3
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(chunk: &Chunk) -> Vec<u8> {
        let mut out = Vec::new();
        chunk.encode_into(&mut out).unwrap();
        out
    }

    #[test]
    fn idata_single_fragment_length() {
        let c = Chunk::IData(IDataChunk::new(ChunkFlags::complete(), 1, 0, 0, 50, 0, vec![1, 2, 3, 4]));
        let bytes = encode(&c);
        assert_eq!(u16::from_be_bytes([bytes[2], bytes[3]]), 24);
        assert_eq!(bytes.len(), 24);
        assert_eq!(bytes[0], 64);
        assert_eq!(bytes[1], 0x03);
        // Reserved is zero and the shared field carries the PPID.
        assert_eq!(&bytes[8..12], &[0, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &50u32.to_be_bytes());
    }

    #[test]
    fn data_one_byte_payload_is_padded() {
        let c = Chunk::Data(DataChunk { flags: ChunkFlags::complete(), tsn: 7, sid: 1, ssn: 2, ppid: 3, payload: vec![0xAA] });
        let bytes = encode(&c);
        assert_eq!(u16::from_be_bytes([bytes[2], bytes[3]]), 17);
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[17..], &[0, 0, 0]);
        let (decoded, rest) = Chunk::decode(&bytes).unwrap();
        assert!(rest.is_empty());
        assert_eq!(decoded, c);
    }

    #[test]
    fn ppid_fsn_union() {
        let first = IDataChunk::new(ChunkFlags { begin: true, ..Default::default() }, 1, 0, 9, 51, 0, vec![0]);
        assert_eq!(first.ppid(), Some(51));
        assert_eq!(first.fsn(), 0);
        let middle = IDataChunk::new(ChunkFlags::default(), 2, 0, 9, 51, 1, vec![0]);
        assert_eq!(middle.ppid(), None);
        assert_eq!(middle.fsn(), 1);
        assert_eq!(middle.ppid_or_fsn, 1);
    }

    #[test]
    fn flags_strings() {
        assert_eq!("BE".parse::<ChunkFlags>().unwrap(), ChunkFlags::complete());
        assert_eq!(ChunkFlags { unordered: true, begin: true, end: true, immediate: false }.to_string(), "UBE");
        assert_eq!("-".parse::<ChunkFlags>().unwrap(), ChunkFlags::default());
        assert!("BB".parse::<ChunkFlags>().is_err());
        assert!("X".parse::<ChunkFlags>().is_err());
    }

    #[test]
    fn init_extensions_parameter() {
        let init = InitChunk {
            initiate_tag: 0x01020304,
            a_rwnd: 65535,
            outbound_streams: 2,
            inbound_streams: 2,
            initial_tsn: 100,
            extensions: [Feature::Interleaving, Feature::ForwardTsn].into_iter().collect(),
            cookie: None,
        };
        let bytes = encode(&Chunk::Init(init.clone()));
        // 4 header + 16 fixed + parameter (4 + 2 codes, padded to 8).
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[20..22], &[0x80, 0x08]);
        assert_eq!(&bytes[22..24], &[0, 6]);
        assert_eq!(&bytes[24..26], &[64, 192]);
        let (decoded, _) = Chunk::decode(&bytes).unwrap();
        assert_eq!(decoded, Chunk::Init(init));
    }

    #[test]
    fn sack_with_blocks() {
        let sack = Chunk::Sack(SackChunk {
            cum_tsn_ack: 10,
            a_rwnd: 1000,
            gap_blocks: vec![GapBlock { start: 2, end: 3 }, GapBlock { start: 5, end: 5 }],
            dup_tsns: vec![9],
        });
        let bytes = encode(&sack);
        assert_eq!(bytes.len(), 16 + 8 + 4);
        assert_eq!(Chunk::decode(&bytes).unwrap().0, sack);
    }

    #[test]
    fn iforward_tsn_layout() {
        let c = Chunk::IForwardTsn(IForwardTsnChunk {
            new_cum_tsn: 12,
            skipped: vec![SkippedMid { sid: 3, unordered: true, mid: 0x0A0B0C0D }],
        });
        let bytes = encode(&c);
        assert_eq!(bytes, vec![194, 0, 0, 16, 0, 0, 0, 12, 0, 3, 0, 1, 0x0A, 0x0B, 0x0C, 0x0D]);
        assert_eq!(Chunk::decode(&bytes).unwrap().0, c);
    }

    #[test]
    fn short_chunks_are_rejected() {
        // DATA with length 16 has no payload.
        let bytes = [0u8, 3, 0, 16, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        assert!(matches!(
            Chunk::decode(&bytes),
            Err(DecodeError::ChunkTooShort { chunk_type: 0, length: 16, minimum: 17 })
        ));
        assert!(matches!(Chunk::decode(&[3, 0, 0]), Err(DecodeError::Truncated { .. })));
    }

    #[test]
    fn empty_payload_rejected_on_encode() {
        let c = Chunk::Data(DataChunk { flags: ChunkFlags::complete(), tsn: 1, sid: 0, ssn: 0, ppid: 0, payload: vec![] });
        assert_eq!(c.encode_into(&mut Vec::new()), Err(EncodeError::EmptyPayload));
    }

    #[test]
    fn oversized_chunk_rejected() {
        let c = Chunk::Data(DataChunk {
            flags: ChunkFlags::complete(),
            tsn: 1,
            sid: 0,
            ssn: 0,
            ppid: 0,
            payload: vec![0; 65536],
        });
        assert!(matches!(c.encode_into(&mut Vec::new()), Err(EncodeError::ChunkTooLarge { chunk_type: 0, .. })));
    }
}

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

use super::crc32c::crc32c;
use super::crc32c::crc32c_parts;
use super::Chunk;
use super::DecodeError;
use super::EncodeError;

pub const COMMON_HEADER_SIZE: usize = 12;

/// SCTP common header.
///
/// ```txt
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |      Source Port Number       |    Destination Port Number    |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |                       Verification Tag                        |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// |                           Checksum                            |
/// +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
/// ```
///
/// `checksum` holds the CRC-32C value; on the wire it is stored in the
/// little-endian byte order a reflected CRC naturally produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CommonHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub verification_tag: u32,
    pub checksum: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SctpPacket {
    pub header: CommonHeader,
    pub chunks: Vec<Chunk>,
}

impl SctpPacket {
    pub fn new(src_port: u16, dst_port: u16, verification_tag: u32) -> Self {
        SctpPacket {
            header: CommonHeader { src_port, dst_port, verification_tag, checksum: 0 },
            chunks: Vec::new(),
        }
    }

    pub fn with_chunk(mut self, chunk: Chunk) -> Self {
        self.chunks.push(chunk);
        self
    }

    /// Encoded size in bytes.
    pub fn wire_size(&self) -> usize {
        COMMON_HEADER_SIZE + self.chunks.iter().map(Chunk::wire_size).sum::<usize>()
    }
}

/// Serializes `pkt`, computing the checksum. The input checksum field is ignored.
pub fn encode_packet(pkt: &SctpPacket) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(pkt.wire_size());
    out.extend_from_slice(&pkt.header.src_port.to_be_bytes());
    out.extend_from_slice(&pkt.header.dst_port.to_be_bytes());
    out.extend_from_slice(&pkt.header.verification_tag.to_be_bytes());
    out.extend_from_slice(&[0; 4]);
    for chunk in &pkt.chunks {
        chunk.encode_into(&mut out)?;
    }
    let crc = crc32c(&out);
    out[8..12].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_packet(data: &[u8]) -> Result<SctpPacket, DecodeError> {
    if data.len() < COMMON_HEADER_SIZE {
        return Err(DecodeError::Truncated { needed: COMMON_HEADER_SIZE, available: data.len() });
    }
    let header = CommonHeader {
        src_port: u16::from_be_bytes([data[0], data[1]]),
        dst_port: u16::from_be_bytes([data[2], data[3]]),
        verification_tag: u32::from_be_bytes([data[4], data[5], data[6], data[7]]),
        checksum: u32::from_le_bytes([data[8], data[9], data[10], data[11]]),
    };
    let computed = crc32c_parts(&[&data[..8], &[0; 4], &data[12..]]);
    if computed != header.checksum {
        return Err(DecodeError::ChecksumMismatch { stored: header.checksum, computed });
    }
    let mut chunks = Vec::new();
    let mut rest = &data[COMMON_HEADER_SIZE..];
    while !rest.is_empty() {
        let (chunk, next) = Chunk::decode(rest)?;
        chunks.push(chunk);
        rest = next;
    }
    Ok(SctpPacket { header, chunks })
}

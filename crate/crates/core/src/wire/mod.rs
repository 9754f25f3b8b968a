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

//! SCTP packet codec, CRC-32C and pcap output.

mod chunk;
mod crc32c;
mod packet;
pub mod pcap;

use thiserror::Error;

pub use self::chunk::*;
pub use self::crc32c::crc32c;
pub use self::packet::decode_packet;
pub use self::packet::encode_packet;
pub use self::packet::CommonHeader;
pub use self::packet::SctpPacket;
pub use self::packet::COMMON_HEADER_SIZE;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("chunk type {chunk_type} has length {length}, minimum is {minimum}")]
    ChunkTooShort { chunk_type: u8, length: usize, minimum: usize },
    #[error("malformed chunk type {chunk_type}: {reason}")]
    Malformed { chunk_type: u8, reason: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("chunk type {chunk_type} would need length {length}, exceeding the 16-bit length field")]
    ChunkTooLarge { chunk_type: u8, length: usize },
    #[error("data chunk with empty payload")]
    EmptyPayload,
}

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

//! Classic pcap output with link type 101 (raw IP), plus the IPv4 framing
//! needed so analyzers see real SCTP-over-IP packets.

use std::fs::File;
use std::io;
use std::io::BufWriter;
use std::io::Read;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::Path;

pub const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
pub const LINKTYPE_RAW: u32 = 101;
pub const GLOBAL_HEADER_SIZE: usize = 24;
pub const RECORD_HEADER_SIZE: usize = 16;
pub const IPV4_HEADER_SIZE: usize = 20;
pub const IPPROTO_SCTP: u8 = 132;
pub const IPPROTO_UDP: u8 = 17;
const SNAPLEN: u32 = 65535;

#[derive(Debug, Clone, PartialEq)]
pub struct PcapRecord {
    pub timestamp: f64,
    pub data: Vec<u8>,
}

/// Writes the records to `path` as a classic little-endian pcap file.
pub fn pcap_write(path: &Path, records: &[PcapRecord]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&pcap_bytes(records)?)?;
    out.flush()
}

pub fn pcap_bytes(records: &[PcapRecord]) -> io::Result<Vec<u8>> {
    let mut out = Vec::with_capacity(GLOBAL_HEADER_SIZE + records.iter().map(|r| RECORD_HEADER_SIZE + r.data.len()).sum::<usize>());
    out.extend_from_slice(&PCAP_MAGIC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&SNAPLEN.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_RAW.to_le_bytes());
    let mut last = f64::NEG_INFINITY;
    for r in records {
        if !(r.timestamp >= last) || r.timestamp < 0.0 {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("timestamp {} out of order", r.timestamp)));
        }
        last = r.timestamp;
        let mut secs = r.timestamp.floor() as u32;
        let mut micros = ((r.timestamp - r.timestamp.floor()) * 1e6).round() as u32;
        if micros >= 1_000_000 {
            secs += 1;
            micros -= 1_000_000;
        }
        let len = r.data.len() as u32;
        out.extend_from_slice(&secs.to_le_bytes());
        out.extend_from_slice(&micros.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&r.data);
    }
    Ok(out)
}

/// Reads a classic pcap file in either byte order.
pub fn pcap_read(path: &Path) -> io::Result<(u32, Vec<PcapRecord>)> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    pcap_parse(&data)
}

/// Returns the link type and records of an in-memory pcap image.
pub fn pcap_parse(data: &[u8]) -> io::Result<(u32, Vec<PcapRecord>)> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if data.len() < GLOBAL_HEADER_SIZE {
        return Err(bad("short global header"));
    }
    let magic = [data[0], data[1], data[2], data[3]];
    let le = if u32::from_le_bytes(magic) == PCAP_MAGIC {
        true
    } else if u32::from_be_bytes(magic) == PCAP_MAGIC {
        false
    } else {
        return Err(bad("bad magic"));
    };
    let u32_at = |off: usize| {
        let b = [data[off], data[off + 1], data[off + 2], data[off + 3]];
        if le {
            u32::from_le_bytes(b)
        } else {
            u32::from_be_bytes(b)
        }
    };
    let link_type = u32_at(20);
    let mut records = Vec::new();
    let mut off = GLOBAL_HEADER_SIZE;
    while off < data.len() {
        if off + RECORD_HEADER_SIZE > data.len() {
            return Err(bad("short record header"));
        }
        let secs = u32_at(off);
        let micros = u32_at(off + 4);
        let incl = u32_at(off + 8) as usize;
        off += RECORD_HEADER_SIZE;
        if off + incl > data.len() {
            return Err(bad("short record body"));
        }
        records.push(PcapRecord { timestamp: secs as f64 + micros as f64 * 1e-6, data: data[off..off + incl].to_vec() });
        off += incl;
    }
    Ok((link_type, records))
}

/// Prepends a minimal IPv4 header (no options, DF set, TTL 64) to `payload`.
pub fn ipv4_wrap(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, id: u16, payload: &[u8]) -> Vec<u8> {
    let total = (IPV4_HEADER_SIZE + payload.len()) as u16;
    let mut out = Vec::with_capacity(total as usize);
    out.push(0x45);
    out.push(0);
    out.extend_from_slice(&total.to_be_bytes());
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&0x4000u16.to_be_bytes());
    out.push(64);
    out.push(protocol);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&src.octets());
    out.extend_from_slice(&dst.octets());
    let csum = ipv4_checksum(&out);
    out[10..12].copy_from_slice(&csum.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits an IPv4 packet into (protocol, payload). Returns `None` if it is not IPv4.
pub fn ipv4_payload(packet: &[u8]) -> Option<(u8, &[u8])> {
    if packet.len() < IPV4_HEADER_SIZE || packet[0] >> 4 != 4 {
        return None;
    }
    let ihl = (packet[0] & 0x0F) as usize * 4;
    let total = u16::from_be_bytes([packet[2], packet[3]]) as usize;
    if ihl < IPV4_HEADER_SIZE || total < ihl || total > packet.len() {
        return None;
    }
    Some((packet[9], &packet[ihl..total]))
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header.chunks(2).map(|w| u16::from_be_bytes([w[0], *w.get(1).unwrap_or(&0)]) as u32).sum();
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_global_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.pcap");
        pcap_write(&path, &[]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[0..4], &[0xD4, 0xC3, 0xB2, 0xA1]);
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 2);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 4);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 101);
    }

    #[test]
    fn one_record_framing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.pcap");
        let data = ipv4_wrap(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), IPPROTO_SCTP, 1, &[0u8; 20]);
        assert_eq!(data.len(), 40);
        pcap_write(&path, &[PcapRecord { timestamp: 1.5, data: data.clone() }]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 24 + 16 + 40);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 500_000);
        let (link, records) = pcap_read(&path).unwrap();
        assert_eq!(link, 101);
        assert_eq!(records, vec![PcapRecord { timestamp: 1.5, data }]);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let recs = [PcapRecord { timestamp: 2.0, data: vec![] }, PcapRecord { timestamp: 1.0, data: vec![] }];
        assert!(pcap_bytes(&recs).is_err());
    }

    #[test]
    fn ipv4_header_checksum_verifies() {
        let pkt = ipv4_wrap(Ipv4Addr::new(192, 168, 1, 1), Ipv4Addr::new(192, 168, 1, 2), IPPROTO_SCTP, 7, b"abcd");
        // Summing a header with its checksum gives all ones.
        assert_eq!(ipv4_checksum(&pkt[..20]), 0);
        assert_eq!(ipv4_payload(&pkt), Some((IPPROTO_SCTP, &b"abcd"[..])));
    }
}

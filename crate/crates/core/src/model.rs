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

//! Analytical end-to-end delay of a small high-priority message competing
//! with a saturated stream of large messages.
//!
//! Without interleaving the small message waits, on average, for half of the
//! large message (plus its per-fragment headers) to drain through the
//! bottleneck. With interleaving it waits for at most one packet.

use thiserror::Error;

/// 12 common header + 16 DATA chunk header + 20 IPv4 + 4 PPP.
pub const S_HDR_DATA: usize = 12 + 16 + 20 + 4;
/// Same with the 20-byte I-DATA chunk header.
pub const S_HDR_IDATA: usize = 12 + 20 + 20 + 4;
/// PPP bytes counted in `s_hdr` but carried outside the IP MTU.
pub const LINK_FRAMING: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("s_frag + s_hdr = {total} exceeds mtu {mtu} plus link framing")]
    FragmentTooLarge { total: f64, mtu: f64 },
    #[error("message size must be at least 1 byte")]
    EmptyMessage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModelParams {
    /// Per-packet header overhead in bytes.
    pub s_hdr: f64,
    /// Maximum fragment payload in bytes.
    pub s_frag: f64,
    /// Available bandwidth in bytes per second.
    pub bw: f64,
    pub mtu: f64,
    pub d_link: f64,
    pub d_buffer: f64,
}

impl DelayModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("s_hdr", self.s_hdr), ("s_frag", self.s_frag), ("bw", self.bw), ("mtu", self.mtu), ("d_link", self.d_link)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositive { name, value });
            }
        }
        // A scenario may legitimately have an empty bottleneck queue.
        if !(self.d_buffer >= 0.0) || !self.d_buffer.is_finite() {
            return Err(ModelError::NonPositive { name: "d_buffer", value: self.d_buffer });
        }
        if self.s_frag + self.s_hdr > self.mtu + LINK_FRAMING as f64 {
            return Err(ModelError::FragmentTooLarge { total: self.s_frag + self.s_hdr, mtu: self.mtu });
        }
        Ok(())
    }

    /// Expected delay without interleaving for a competing message of `s_msg` bytes.
    pub fn delay_noninterleaving(&self, s_msg: usize) -> Result<f64, ModelError> {
        self.validate()?;
        if s_msg == 0 {
            return Err(ModelError::EmptyMessage);
        }
        let fragments = (s_msg as f64 / self.s_frag).ceil();
        Ok((s_msg as f64 + self.s_hdr * fragments) / (2.0 * self.bw) + self.d_link + self.d_buffer)
    }

    /// Expected delay with interleaving; independent of the competing message size.
    pub fn delay_interleaving(&self) -> Result<f64, ModelError> {
        self.validate()?;
        Ok(self.mtu / (2.0 * self.bw) + self.d_link + self.d_buffer)
    }
}

/// Mean bottleneck queueing delay for a sender limited to `max_inflight` full frames.
///
/// One slot belongs to the packet being sent; the rest are split between the
/// bottleneck queue and the return path, which holds `return_path` seconds
/// worth of packets (forward propagation, SACK serialization, reverse
/// propagation). Whatever the return path cannot hold sits in the queue.
pub fn window_queue_delay(max_inflight: usize, frame_bytes: f64, bw: f64, return_path: f64) -> f64 {
    let window = max_inflight.saturating_sub(1) as f64 * frame_bytes;
    (window - bw * return_path).max(0.0) / bw
}

/// Geometric size sweep `start, start*factor, ...` up to and including `end`.
pub fn geometric_sweep(start: usize, end: usize, factor: usize) -> Vec<usize> {
    assert!(start >= 1 && factor >= 2);
    let mut out = Vec::new();
    let mut s = start;
    while s <= end {
        out.push(s);
        match s.checked_mul(factor) {
            Some(n) => s = n,
            None => break,
        }
    }
    out
}

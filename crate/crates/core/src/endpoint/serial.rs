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

//! Serial number arithmetic for TSN, SSN and MID.

/// `a < b` in `bits`-wide serial arithmetic: `(b - a) mod 2^bits` lies in `(0, 2^(bits-1))`.
pub fn serial_lt(a: u32, b: u32, bits: u32) -> bool {
    assert!((1..=32).contains(&bits));
    let modulus = 1u64 << bits;
    let mask = modulus - 1;
    let diff = ((b as u64 & mask) + modulus - (a as u64 & mask)) & mask;
    diff > 0 && diff < modulus / 2
}

/// Unwrapped values start here so that stepping backwards never underflows.
pub(crate) const UNWRAP_BASE: u64 = 1 << 48;

/// Maps a `bits`-wide serial `value` to the 64-bit integer congruent to it that is closest to `reference`.
pub(crate) fn unwrap_near(reference: u64, value: u32, bits: u32) -> u64 {
    let modulus = 1i64 << bits;
    let mask = modulus - 1;
    let mut delta = (value as i64 - (reference as i64 & mask)) & mask;
    if delta >= modulus / 2 {
        delta -= modulus;
    }
    (reference as i64 + delta) as u64
}

/// Initial unwrapped position for a serial value with no history.
pub(crate) fn unwrap_initial(value: u32) -> u64 {
    UNWRAP_BASE + value as u64
}

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

//! SCTP data transfer with user message interleaving (I-DATA / I-FORWARD-TSN),
//! pluggable stream schedulers, and a deterministic network simulator for
//! measuring sender-side head-of-line blocking.

pub mod cli;
pub mod endpoint;
pub mod model;
pub mod netsim;
pub mod sched;
pub mod script;
pub mod traffic;
pub mod wire;

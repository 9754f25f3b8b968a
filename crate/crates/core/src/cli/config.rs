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

//! Scenario files: flat `key = value` lines with dotted keys.
//!
//! Generator keys follow the OMNeT++ style `gen[i].packetSize`; a packet size
//! may be a multiplicative sweep `${ps=4 .. 128 step 2}kB`, which expands the
//! scenario into one run per value.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::Path;
use std::path::PathBuf;

use thiserror::Error;

use crate::endpoint::AssociationConfig;
use crate::model::window_queue_delay;
use crate::model::DelayModelParams;
use crate::model::S_HDR_DATA;
use crate::model::S_HDR_IDATA;
use crate::netsim::DumbbellConfig;
use crate::netsim::LinkConfig;
use crate::netsim::UdpConfig;
use crate::netsim::PPP_OVERHEAD;
use crate::sched::SchedulerKind;
use crate::sched::SchedulerMode;
use crate::traffic::GeneratorConfig;
use crate::traffic::SizeSpec;
use crate::wire::pcap::IPV4_HEADER_SIZE;
use crate::wire::COMMON_HEADER_SIZE;

/// Bytes of a SACK without gap blocks or duplicates.
const SACK_CHUNK_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {key}: {reason}")]
    Key { line: usize, key: String, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Packet size of a generator before sweep expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeValue {
    Spec(SizeSpec),
    Sweep { name: Option<String>, values: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTemplate {
    pub config: GeneratorConfig,
    pub size: SizeValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub bottleneck: LinkConfig,
    pub reverse: LinkConfig,
    pub udp: UdpConfig,
    pub client: AssociationConfig,
    pub server: AssociationConfig,
    pub generators: Vec<GeneratorTemplate>,
    pub seed: u64,
    pub duration: f64,
    pub d_buffer: Option<f64>,
    pub s_hdr: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub pcap: bool,
}

/// One fully expanded simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub index: usize,
    /// Size of the competing large messages: the swept value, or the largest fixed saturated size.
    pub size_bytes: usize,
    pub sim: DumbbellConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let link = LinkConfig { framing_overhead: PPP_OVERHEAD, ..LinkConfig::default() };
        let client = AssociationConfig::default();
        let server = AssociationConfig {
            local_port: client.peer_port,
            peer_port: client.local_port,
            initiate_tag: 0x2000_0002,
            ..AssociationConfig::default()
        };
        ScenarioConfig {
            bottleneck: link,
            reverse: link,
            udp: UdpConfig::default(),
            client,
            server,
            generators: Vec::new(),
            seed: 1,
            duration: 60.0,
            d_buffer: None,
            s_hdr: None,
            output_dir: None,
            pcap: false,
        }
    }
}

fn split_number(s: &str) -> (&str, &str) {
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || ((c == 'e' || c == 'E') && i > 0 && s[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-'))))
        .map_or(s.len(), |(i, _)| i);
    (&s[..end], s[end..].trim())
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() { Ok(v) } else { Err(format!("'{s}' is not finite")) }
}

/// Seconds, with optional `s`, `ms` or `us`.
pub fn parse_time(s: &str) -> Result<f64, String> {
    let (n, unit) = split_number(s.trim());
    let scale = match unit {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        "us" => 1e-6,
        other => return Err(format!("unknown time unit '{other}'")),
    };
    Ok(number(n)? * scale)
}

fn size_scale(unit: &str) -> Result<usize, String> {
    // Binary multiples: a "4kB" message is 4096 bytes.
    match unit {
        "" | "B" => Ok(1),
        "kB" | "KB" | "KiB" => Ok(1024),
        "MB" | "MiB" => Ok(1024 * 1024),
        other => Err(format!("unknown size unit '{other}'")),
    }
}

/// Bytes, with optional `B`, `kB` or `MB` (binary multiples).
pub fn parse_size(s: &str) -> Result<usize, String> {
    let (n, unit) = split_number(s.trim());
    let scale = size_scale(unit)?;
    let v: usize = n.parse().map_err(|_| format!("'{s}' is not a byte count"))?;
    v.checked_mul(scale).ok_or_else(|| format!("'{s}' overflows"))
}

/// Bits per second, with optional `bps`, `kbps`, `Mbps` or `Gbps` (decimal multiples).
pub fn parse_bandwidth(s: &str) -> Result<f64, String> {
    let (n, unit) = split_number(s.trim());
    let scale = match unit {
        "" | "bps" => 1.0,
        "kbps" => 1e3,
        "Mbps" => 1e6,
        "Gbps" => 1e9,
        other => return Err(format!("unknown bandwidth unit '{other}'")),
    };
    Ok(number(n)? * scale)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(format!("'{other}' is not a boolean")),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("'{}' is not a valid integer", s.trim()))
}

/// `a .. b step k` with a multiplicative step, applying `unit` to each value.
fn expand_sweep(body: &str, unit: &str) -> Result<(Option<String>, Vec<usize>), String> {
    let (name, range) = match body.split_once('=') {
        Some((n, r)) => (Some(n.trim().to_string()), r),
        None => (None, body),
    };
    let (bounds, step) = range.split_once("step").ok_or("sweep needs 'step'")?;
    let (a, b) = bounds.split_once("..").ok_or("sweep needs 'a .. b'")?;
    let a: usize = parse_int(a)?;
    let b: usize = parse_int(b)?;
    let k: usize = parse_int(step)?;
    if a == 0 || k < 2 || a > b {
        return Err("sweep needs 0 < a <= b and step >= 2".into());
    }
    let scale = size_scale(unit)?;
    let values = crate::model::geometric_sweep(a, b, k).into_iter().map(|v| v * scale).collect();
    Ok((name, values))
}

pub fn parse_size_value(s: &str) -> Result<SizeValue, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("${") {
        let (body, unit) = rest.split_once('}').ok_or("unterminated sweep")?;
        let (name, values) = expand_sweep(body, unit.trim())?;
        return Ok(SizeValue::Sweep { name, values });
    }
    if let Some(rest) = s.strip_prefix("uniform(") {
        let inner = rest.strip_suffix(')').ok_or("unterminated uniform(")?;
        let (a, b) = inner.split_once(',').ok_or("uniform needs two bounds")?;
        let (a, b) = (parse_size(a)?, parse_size(b)?);
        if a > b {
            return Err("uniform bounds are reversed".into());
        }
        return Ok(SizeValue::Spec(SizeSpec::Uniform(a, b)));
    }
    Ok(SizeValue::Spec(SizeSpec::Fixed(parse_size(s)?)))
}

fn parse_mode(s: &str) -> Result<Option<SchedulerMode>, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "auto" => Ok(None),
        "interleaving" => Ok(Some(SchedulerMode::Interleaving)),
        "non_interleaving" | "noninterleaving" => Ok(Some(SchedulerMode::NonInterleaving)),
        other => Err(format!("unknown scheduler mode '{other}'")),
    }
}

/// Splits `gen[3].packetSize` into `(3, "packetSize")`.
fn generator_key(key: &str) -> Option<Result<(usize, &str), String>> {
    let rest = key.strip_prefix("gen[")?;
    Some((|| {
        let (idx, field) = rest.split_once("].").ok_or("expected gen[i].field")?;
        Ok((parse_int(idx)?, field))
    })())
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut peer_idata = None;
        let mut streams = None;
        let mut gens: BTreeMap<usize, GeneratorTemplate> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::Syntax { line, reason: format!("expected 'key = value', got '{content}'") })?;
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Key { line, key: key.into(), reason: "duplicate key".into() });
            }
            let err = |reason: String| ConfigError::Key { line, key: key.into(), reason };
            if let Some(parsed) = generator_key(key) {
                let (idx, field) = parsed.map_err(err)?;
                let entry = gens.entry(idx).or_insert_with(|| {
                    let config = GeneratorConfig { name: format!("gen{idx}"), id: idx as u16, ..GeneratorConfig::default() };
                    let size = SizeValue::Spec(config.packet_size);
                    GeneratorTemplate { config, size }
                });
                let g = entry;
                match field {
                    "typename" => g.config.typename = value.trim_matches('"').to_string(),
                    "name" => g.config.name = value.trim_matches('"').to_string(),
                    "id" => g.config.id = parse_int(value).map_err(err)?,
                    "priority" => g.config.priority = parse_int(value).map_err(err)?,
                    "packetCount" => g.config.packet_count = parse_int(value).map_err(err)?,
                    "packetSize" => g.size = parse_size_value(value).map_err(err)?,
                    "packetInterval" => g.config.packet_interval = parse_time(value).map_err(err)?,
                    "startTime" => g.config.start_time = parse_time(value).map_err(err)?,
                    "stopTime" => g.config.stop_time = parse_time(value).map_err(err)?,
                    "ordered" => g.config.ordered = parse_bool(value).map_err(err)?,
                    "lifetime" => g.config.lifetime = Some(parse_time(value).map_err(err)?),
                    _ => return Err(err("unknown generator key".into())),
                }
                continue;
            }
            match key {
                "network.bandwidth" => cfg.bottleneck.bandwidth_bps = parse_bandwidth(value).map_err(err)?,
                "network.delay" => cfg.bottleneck.propagation_delay = parse_time(value).map_err(err)?,
                "network.bufferSize" => cfg.bottleneck.buffer_bytes = parse_size(value).map_err(err)?,
                "network.lossRate" => cfg.bottleneck.loss_rate = number(value).map_err(err)?,
                "network.reverseLossRate" => cfg.reverse.loss_rate = number(value).map_err(err)?,
                "network.framing" => cfg.bottleneck.framing_overhead = parse_size(value).map_err(err)?,
                "udp.rate" => cfg.udp.rate_fraction = number(value).map_err(err)?,
                "udp.minSize" => cfg.udp.min_size = parse_size(value).map_err(err)?,
                "udp.maxSize" => cfg.udp.max_size = parse_size(value).map_err(err)?,
                "udp.startTime" => cfg.udp.start_time = parse_time(value).map_err(err)?,
                "udp.stopTime" => cfg.udp.stop_time = parse_time(value).map_err(err)?,
                "sctp.idata" => cfg.client.idata_enabled = parse_bool(value).map_err(err)?,
                "sctp.peerIdata" => peer_idata = Some(parse_bool(value).map_err(err)?),
                "sctp.scheduler" => cfg.client.scheduler = value.parse::<SchedulerKind>().map_err(err)?,
                "sctp.schedulerMode" => cfg.client.scheduler_mode = parse_mode(value).map_err(err)?,
                "sctp.maxInflight" => cfg.client.max_inflight = parse_int(value).map_err(err)?,
                "sctp.rto" => cfg.client.rto = parse_time(value).map_err(err)?,
                "sctp.maxFragment" => cfg.client.max_fragment = parse_size(value).map_err(err)?,
                "sctp.mtu" => cfg.client.mtu = parse_size(value).map_err(err)?,
                "sctp.streams" => streams = Some(parse_int::<usize>(value).map_err(err)?),
                "sctp.arwnd" => cfg.client.a_rwnd = parse_int(value).map_err(err)?,
                "sim.seed" => cfg.seed = parse_int(value).map_err(err)?,
                "sim.duration" => cfg.duration = parse_time(value).map_err(err)?,
                "model.dBuffer" => cfg.d_buffer = Some(parse_time(value).map_err(err)?),
                "model.sHdr" => cfg.s_hdr = Some(number(value).map_err(err)?),
                "output.dir" => cfg.output_dir = Some(PathBuf::from(value.trim_matches('"'))),
                "output.pcap" => cfg.pcap = parse_bool(value).map_err(err)?,
                _ => return Err(err("unknown key".into())),
            }
        }
        cfg.generators = gens.into_values().collect();
        // The reverse path mirrors the bottleneck apart from its loss rate.
        cfg.reverse = LinkConfig { loss_rate: cfg.reverse.loss_rate, ..cfg.bottleneck };
        let max_id = cfg.generators.iter().map(|g| g.config.id as usize + 1).max().unwrap_or(1);
        cfg.client.stream_count = streams.unwrap_or(max_id);
        cfg.client.priorities = cfg.generators.iter().map(|g| (g.config.id, g.config.priority)).collect();
        cfg.server = AssociationConfig {
            idata_enabled: peer_idata.unwrap_or(cfg.client.idata_enabled),
            stream_count: cfg.client.stream_count,
            a_rwnd: cfg.client.a_rwnd,
            mtu: cfg.client.mtu,
            max_fragment: cfg.client.max_fragment,
            rto: cfg.client.rto,
            max_inflight: cfg.client.max_inflight,
            ..cfg.server
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.generators.is_empty() {
            return invalid("no generators configured".into());
        }
        if !(self.duration > 0.0) {
            return invalid("sim.duration must be positive".into());
        }
        let sweeps: Vec<_> = self.generators.iter().filter(|g| matches!(g.size, SizeValue::Sweep { .. })).collect();
        if sweeps.len() > 1 {
            return invalid("only one generator may sweep its packetSize".into());
        }
        self.bottleneck.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.udp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.client.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut ids = HashSet::new();
        for g in &self.generators {
            if !ids.insert(g.config.id) {
                return invalid(format!("generator {}: stream {} is already driven by another generator", g.config.name, g.config.id));
            }
            if g.config.id as usize >= self.client.stream_count {
                return invalid(format!("generator {}: stream {} exceeds sctp.streams", g.config.name, g.config.id));
            }
        }
        for run in self.expand() {
            for g in &run.sim.generators {
                g.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn sweep_values(&self) -> Option<&[usize]> {
        self.generators.iter().find_map(|g| match &g.size {
            SizeValue::Sweep { values, .. } => Some(values.as_slice()),
            SizeValue::Spec(_) => None,
        })
    }

    /// One run per sweep value (or a single run); seeds are the base seed plus the run index.
    pub fn expand(&self) -> Vec<RunSpec> {
        let points: Vec<Option<usize>> = match self.sweep_values() {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        points
            .into_iter()
            .enumerate()
            .map(|(index, point)| {
                let generators: Vec<GeneratorConfig> = self
                    .generators
                    .iter()
                    .map(|g| {
                        let packet_size = match &g.size {
                            SizeValue::Spec(s) => *s,
                            SizeValue::Sweep { .. } => SizeSpec::Fixed(point.unwrap_or(1)),
                        };
                        GeneratorConfig { packet_size, ..g.config.clone() }
                    })
                    .collect();
                let size_bytes = point.unwrap_or_else(|| {
                    generators.iter().filter(|g| g.is_saturated()).map(|g| g.packet_size.max()).max().unwrap_or(0)
                });
                let sim = DumbbellConfig {
                    bottleneck: self.bottleneck,
                    reverse: self.reverse,
                    udp: self.udp,
                    client: self.client.clone(),
                    server: self.server.clone(),
                    generators,
                    seed: self.seed.wrapping_add(index as u64),
                    duration: self.duration,
                    capture: self.pcap,
                };
                RunSpec { index, size_bytes, sim }
            })
            .collect()
    }

    pub fn negotiated_idata(&self) -> bool {
        self.client.idata_enabled && self.server.idata_enabled
    }

    /// Bandwidth left to SCTP after the background source, in bytes per second.
    pub fn available_bandwidth(&self) -> f64 {
        self.bottleneck.bandwidth_bps / 8.0 * (1.0 - self.udp.rate_fraction)
    }

    /// Analytical model inputs derived from the scenario.
    pub fn model_params(&self) -> DelayModelParams {
        let idata = self.negotiated_idata();
        let bw = self.available_bandwidth();
        let d_buffer = self.d_buffer.unwrap_or_else(|| {
            let frame = (self.client.mtu + self.bottleneck.framing_overhead) as f64;
            let sack = IPV4_HEADER_SIZE + COMMON_HEADER_SIZE + SACK_CHUNK_SIZE;
            let return_path = self.bottleneck.propagation_delay + self.reverse.serialization_time(sack) + self.reverse.propagation_delay;
            window_queue_delay(self.client.max_inflight, frame, bw, return_path)
        });
        DelayModelParams {
            s_hdr: self.s_hdr.unwrap_or(if idata { S_HDR_IDATA } else { S_HDR_DATA } as f64),
            s_frag: self.client.effective_max_fragment(idata) as f64,
            bw,
            mtu: self.client.mtu as f64,
            d_link: self.bottleneck.propagation_delay,
            d_buffer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER: &str = "\
# two streams over the bottleneck
network.bandwidth = 1Mbps
network.delay = 10ms
sctp.idata = true
sctp.scheduler = priority
gen[0].typename = \"TrafficgenSimple\"
gen[0].name = \"saturated\"
gen[0].id = 1
gen[0].priority = 128
gen[0].packetCount = -1
gen[0].packetSize = ${ps=4 .. 128 step 2}kB
gen[0].packetInterval = 0s
gen[0].startTime = 5s
gen[0].stopTime = 65s
gen[1].id = 0
gen[1].priority = 255
gen[1].packetSize = uniform(8B, 16B)
gen[1].packetInterval = 200ms
gen[1].startTime = 5s
gen[1].stopTime = 65s
sim.duration = 70s
";

    #[test]
    fn units() {
        assert_eq!(parse_time("200ms").unwrap(), 0.2);
        assert_eq!(parse_time("5").unwrap(), 5.0);
        assert_eq!(parse_size("4kB").unwrap(), 4096);
        assert_eq!(parse_size("12").unwrap(), 12);
        assert_eq!(parse_bandwidth("1Mbps").unwrap(), 1e6);
        assert_eq!(parse_bandwidth("1.5e6").unwrap(), 1.5e6);
        assert!(parse_time("3 fortnights").is_err());
    }

    #[test]
    fn sweep_is_multiplicative() {
        let v = parse_size_value("${ps=4 .. 128 step 2}kB").unwrap();
        assert_eq!(v, SizeValue::Sweep { name: Some("ps".into()), values: vec![4096, 8192, 16384, 32768, 65536, 131072] });
        assert_eq!(parse_size_value("${1..8 step 2}").unwrap(), SizeValue::Sweep { name: None, values: vec![1, 2, 4, 8] });
        assert!(parse_size_value("${4 .. 128}kB").is_err());
    }

    #[test]
    fn paper_scenario_expands_to_six_runs() {
        let cfg = ScenarioConfig::parse(PAPER).unwrap();
        let runs = cfg.expand();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs[5].size_bytes, 131072);
        assert_eq!(runs[2].sim.seed, cfg.seed + 2);
        assert_eq!(cfg.client.stream_count, 2);
        assert_eq!(cfg.client.priorities, vec![(1, 128), (0, 255)]);
        assert_eq!(runs[0].sim.generators[1].packet_size, SizeSpec::Uniform(8, 16));
        assert_eq!(cfg.bottleneck.framing_overhead, 4);
        let p = cfg.model_params();
        assert!((p.bw - 118_750.0).abs() < 1e-9);
        assert_eq!(p.s_hdr, 56.0);
        assert_eq!(p.s_frag, 1448.0);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = ScenarioConfig::parse("gen[0].packetSize = 100\ngen[0].pakcetCount = 3\n").unwrap_err();
        assert_eq!(err.to_string(), "line 2: gen[0].pakcetCount: unknown generator key");
        let err = ScenarioConfig::parse("gen[0].packetSize = 100\nnetwork.bandwith = 1\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2: network.bandwith"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(ScenarioConfig::parse("gen[0].packetSize = lots\n"), Err(ConfigError::Key { line: 1, .. })));
        assert!(matches!(ScenarioConfig::parse("gen[0].packetSize = 100\ngen[0].packetSize = 200\n"), Err(ConfigError::Key { line: 2, .. })));
        assert!(matches!(ScenarioConfig::parse("just words\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ScenarioConfig::parse("sim.seed = 4\n"), Err(ConfigError::Invalid(_))));
        let two = "gen[0].packetSize = ${1..4 step 2}kB\ngen[1].packetSize = ${1..4 step 2}kB\n";
        assert!(matches!(ScenarioConfig::parse(two), Err(ConfigError::Invalid(_))));
        let clash = "gen[0].packetSize = 100\ngen[1].id = 0\n";
        assert!(matches!(ScenarioConfig::parse(clash), Err(ConfigError::Invalid(_))));
        let start = "gen[0].packetSize = 100\ngen[0].startTime = 9\ngen[0].stopTime = 2\n";
        assert!(matches!(ScenarioConfig::parse(start), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn peer_idata_defaults_to_local() {
        let cfg = ScenarioConfig::parse("gen[0].packetSize = 100\nsctp.idata = false\n").unwrap();
        assert!(!cfg.server.idata_enabled);
        let cfg = ScenarioConfig::parse("gen[0].packetSize = 100\nsctp.peerIdata = false\n").unwrap();
        assert!(cfg.client.idata_enabled && !cfg.negotiated_idata());
        assert_eq!(cfg.model_params().s_hdr, 52.0);
    }
}

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

//! Packetdrill-style conformance scripts (`.pdr`).
//!
//! A script drives a single endpoint on a virtual clock. The script plays
//! the peer: `inject` hands a crafted chunk to the endpoint, `expect` checks
//! the next chunk the endpoint emits. Socket-level actions (`connect`,
//! `send`, `recv`, `wait`) stand in for the application.
//!
//! ```text
//! opt local.idata = true
//! +0.0 connect
//! +0.0 expect INIT [has=INTERLEAVING]
//! +0.1 inject INIT-ACK []
//! +0.0 expect COOKIE-ECHO [cookie=*]
//! ifdef STRICT_INPUT
//! +0.0 inject DATA [tsn=1]
//! endif
//! ```

mod runner;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::wire::ChunkFlags;
use crate::wire::ChunkKind;
use crate::wire::Feature;

pub use self::runner::match_chunk;
pub use self::runner::payload_pattern;
pub use self::runner::run_script;
pub use self::runner::run_suite;
pub use self::runner::Mismatch;
pub use self::runner::RunResult;
pub use self::runner::SuiteEntry;
pub use self::runner::SuiteReport;
pub use self::runner::DEFAULT_FEATURES;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptTime {
    /// Offset from the previous event.
    Relative(f64),
    /// Seconds since the start of the run.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldValue {
    Wildcard,
    /// Validated at parse time against the key's type; kept verbatim for printing.
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub key: String,
    pub value: FieldValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkTemplate {
    pub kind: ChunkKind,
    pub fields: Vec<Field>,
}

impl ChunkTemplate {
    pub fn get(&self, key: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|f| f.key == key).map(|f| &f.value)
    }

    /// Literal value of `key`, or `None` when absent or wildcarded.
    pub fn literal(&self, key: &str) -> Option<&str> {
        match self.get(key)? {
            FieldValue::Literal(s) => Some(s),
            FieldValue::Wildcard => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Inject(ChunkTemplate),
    Expect { template: ChunkTemplate, skip_sacks: bool },
    /// Start the association from the endpoint side.
    Connect,
    /// Queue a user message; fields `sid`, `len`, `ordered`, `ppid`, `lifetime`.
    Send(Vec<Field>),
    /// Expect the next user delivery; fields `sid`, `len`, `ordered`, `ppid`, `off`.
    Recv(Vec<Field>),
    /// Let the clock run.
    Wait,
}

#[derive(Debug, Clone)]
pub struct ScriptEvent {
    pub line: usize,
    pub time: ScriptTime,
    pub action: Action,
    /// Enclosing `ifdef` features, outermost first.
    pub guard: Vec<String>,
}

// Source positions are not part of a script's meaning.
impl PartialEq for ScriptEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.action == other.action && self.guard == other.guard
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptOption {
    pub key: String,
    pub value: String,
    pub guard: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub options: Vec<ScriptOption>,
    pub events: Vec<ScriptEvent>,
}

/// Option keys understood by the runner.
pub const OPTION_KEYS: &[&str] = &[
    "local.idata",
    "local.streams",
    "local.scheduler",
    "local.max_inflight",
    "local.rto",
    "local.mtu",
    "local.max_fragment",
    "local.initial_tsn",
    "local.tag",
    "local.a_rwnd",
    "peer.idata",
    "peer.streams",
    "peer.initial_tsn",
    "peer.tag",
    "expect.window",
    "strict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueType {
    Int,
    Bool,
    Float,
    Flags,
    Features,
    Feature,
    Gaps,
    TsnList,
    Skipped,
    Hex,
}

fn chunk_keys(kind: ChunkKind) -> &'static [(&'static str, ValueType)] {
    use ValueType::*;
    match kind {
        ChunkKind::Data => &[("tsn", Int), ("sid", Int), ("ssn", Int), ("ppid", Int), ("flags", Flags), ("len", Int), ("off", Int)],
        ChunkKind::IData => &[("tsn", Int), ("sid", Int), ("mid", Int), ("fsn", Int), ("ppid", Int), ("flags", Flags), ("len", Int), ("off", Int)],
        ChunkKind::Sack => &[("cum_tsn_ack", Int), ("a_rwnd", Int), ("gaps", Gaps), ("dups", TsnList)],
        ChunkKind::ForwardTsn | ChunkKind::IForwardTsn => &[("new_cum_tsn", Int), ("skipped", Skipped)],
        ChunkKind::Init | ChunkKind::InitAck => &[
            ("initiate_tag", Int),
            ("a_rwnd", Int),
            ("outbound_streams", Int),
            ("inbound_streams", Int),
            ("initial_tsn", Int),
            ("extensions", Features),
            ("has", Feature),
            ("lacks", Feature),
            ("cookie", Hex),
        ],
        ChunkKind::CookieEcho => &[("cookie", Hex)],
        ChunkKind::CookieAck | ChunkKind::Unknown(_) => &[],
    }
}

const SEND_KEYS: &[(&str, ValueType)] = &[("sid", ValueType::Int), ("len", ValueType::Int), ("ordered", ValueType::Bool), ("ppid", ValueType::Int), ("lifetime", ValueType::Float)];
const RECV_KEYS: &[(&str, ValueType)] = &[("sid", ValueType::Int), ("len", ValueType::Int), ("ordered", ValueType::Bool), ("ppid", ValueType::Int), ("off", ValueType::Int)];

pub(crate) fn parse_int(s: &str) -> Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|_| format!("'{s}' is not an integer"))
}

pub(crate) fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("'{s}' is not true or false")),
    }
}

fn list<'a>(s: &'a str) -> impl Iterator<Item = &'a str> {
    (s != "none").then(|| s.split('+')).into_iter().flatten()
}

pub(crate) fn parse_features(s: &str) -> Result<Vec<Feature>, String> {
    list(s).map(Feature::from_str).collect()
}

/// `start-end` gap blocks joined by `+`, or `none`.
pub(crate) fn parse_gaps(s: &str) -> Result<Vec<(u16, u16)>, String> {
    list(s)
        .map(|g| {
            let (a, b) = g.split_once('-').ok_or_else(|| format!("gap '{g}' is not start-end"))?;
            let a = u16::try_from(parse_int(a)?).map_err(|e| e.to_string())?;
            let b = u16::try_from(parse_int(b)?).map_err(|e| e.to_string())?;
            Ok((a, b))
        })
        .collect()
}

pub(crate) fn parse_tsn_list(s: &str) -> Result<Vec<u32>, String> {
    list(s).map(|t| parse_int(t).and_then(|v| u32::try_from(v).map_err(|e| e.to_string()))).collect()
}

/// `sid:seq` or `sid:seq:u` entries joined by `+`, or `none`.
pub(crate) fn parse_skipped(s: &str) -> Result<Vec<(u16, u32, bool)>, String> {
    list(s)
        .map(|e| {
            let parts: Vec<&str> = e.split(':').collect();
            let (sid, seq, unordered) = match parts.as_slice() {
                [sid, seq] => (sid, seq, false),
                [sid, seq, "u"] => (sid, seq, true),
                _ => return Err(format!("skip entry '{e}' is not sid:seq[:u]")),
            };
            let sid = u16::try_from(parse_int(sid)?).map_err(|e| e.to_string())?;
            let seq = u32::try_from(parse_int(seq)?).map_err(|e| e.to_string())?;
            Ok((sid, seq, unordered))
        })
        .collect()
}

pub(crate) fn parse_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.len() % 2 != 0 {
        return Err(format!("hex '{s}' has odd length"));
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| format!("'{s}' is not hex"))).collect()
}

fn check_value(ty: ValueType, v: &str) -> Result<(), String> {
    match ty {
        ValueType::Int => parse_int(v).map(drop),
        ValueType::Bool => parse_bool(v).map(drop),
        ValueType::Float => v.parse::<f64>().map(drop).map_err(|_| format!("'{v}' is not a number")),
        ValueType::Flags => ChunkFlags::from_str(v).map(drop).map_err(|e| e.to_string()),
        ValueType::Features => parse_features(v).map(drop),
        ValueType::Feature => Feature::from_str(v).map(drop),
        ValueType::Gaps => parse_gaps(v).map(drop),
        ValueType::TsnList => parse_tsn_list(v).map(drop),
        ValueType::Skipped => parse_skipped(v).map(drop),
        ValueType::Hex => parse_hex(v).map(drop),
    }
}

fn parse_fields(body: &str, keys: &[(&str, ValueType)], allow_wildcard: bool) -> Result<Vec<Field>, String> {
    let mut fields: Vec<Field> = Vec::new();
    for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| format!("field '{item}' is not key=value"))?;
        let ty = if key == "vtag" {
            ValueType::Int
        } else {
            keys.iter().find(|(k, _)| *k == key).map(|&(_, t)| t).ok_or_else(|| format!("unknown field '{key}'"))?
        };
        if fields.iter().any(|f| f.key == key) {
            return Err(format!("field '{key}' given twice"));
        }
        let value = if value == "*" {
            if !allow_wildcard {
                return Err(format!("wildcard not allowed for '{key}' here"));
            }
            FieldValue::Wildcard
        } else {
            check_value(ty, value).map_err(|e| format!("field '{key}': {e}"))?;
            FieldValue::Literal(value.to_string())
        };
        fields.push(Field { key: key.to_string(), value });
    }
    Ok(fields)
}

/// Splits `KIND [a=1, b=2] flag` into its parts.
fn split_bracket(rest: &str) -> Result<(&str, &str, Vec<&str>), String> {
    let Some(open) = rest.find('[') else {
        let mut it = rest.split_whitespace();
        let head = it.next().unwrap_or("");
        return Ok((head, "", it.collect()));
    };
    let close = rest.rfind(']').ok_or("unterminated '['")?;
    if close < open {
        return Err("unterminated '['".into());
    }
    Ok((rest[..open].trim(), &rest[open + 1..close], rest[close + 1..].split_whitespace().collect()))
}

fn parse_time(tok: &str) -> Result<ScriptTime, String> {
    let (rel, num) = match tok.strip_prefix('+') {
        Some(n) => (true, n),
        None => (false, tok),
    };
    let v: f64 = num.parse().map_err(|_| format!("bad time '{tok}'"))?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(format!("bad time '{tok}'"));
    }
    Ok(if rel { ScriptTime::Relative(v) } else { ScriptTime::Absolute(v) })
}

fn parse_event(content: &str) -> Result<(ScriptTime, Action), String> {
    let (time_tok, rest) = content.split_once(char::is_whitespace).ok_or("event needs a time and an action")?;
    let time = parse_time(time_tok)?;
    let rest = rest.trim();
    let (verb, rest) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
    let action = match verb {
        "inject" | "expect" => {
            let (name, body, flags) = split_bracket(rest)?;
            let kind = ChunkKind::from_str(name)?;
            let inject = verb == "inject";
            let fields = parse_fields(body, chunk_keys(kind), !inject)?;
            let template = ChunkTemplate { kind, fields };
            let mut skip_sacks = false;
            for f in flags {
                match f {
                    "skip-sacks" if !inject => skip_sacks = true,
                    other => return Err(format!("unknown flag '{other}'")),
                }
            }
            if inject {
                Action::Inject(template)
            } else {
                Action::Expect { template, skip_sacks }
            }
        }
        "send" | "recv" => {
            let (head, body, flags) = split_bracket(rest)?;
            if !head.is_empty() || !flags.is_empty() {
                return Err(format!("unexpected text after {verb}"));
            }
            if verb == "send" {
                Action::Send(parse_fields(body, SEND_KEYS, false)?)
            } else {
                Action::Recv(parse_fields(body, RECV_KEYS, true)?)
            }
        }
        "connect" | "wait" if rest.is_empty() => {
            if verb == "connect" {
                Action::Connect
            } else {
                Action::Wait
            }
        }
        "connect" | "wait" => return Err(format!("unexpected text after {verb}")),
        other => return Err(format!("unknown action '{other}'")),
    };
    Ok((time, action))
}

/// Parses a script; every error carries its line number.
pub fn parse_script(text: &str) -> Result<Script, ParseError> {
    let mut script = Script::default();
    let mut guards: Vec<(String, usize)> = Vec::new();
    let mut last_absolute = 0.0;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |message: String| ParseError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let guard: Vec<String> = guards.iter().map(|(g, _)| g.clone()).collect();
        if let Some(feature) = content.strip_prefix("ifdef ") {
            let feature = feature.trim();
            if feature.is_empty() || feature.contains(char::is_whitespace) {
                return Err(err("ifdef needs one feature name".into()));
            }
            guards.push((feature.to_string(), line));
        } else if content == "endif" {
            if guards.pop().is_none() {
                return Err(err("endif without ifdef".into()));
            }
        } else if let Some(opt) = content.strip_prefix("opt ") {
            if !script.events.is_empty() {
                return Err(err("options must precede all events".into()));
            }
            let (key, value) = opt.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| err("expected 'opt key = value'".into()))?;
            if !OPTION_KEYS.contains(&key) {
                return Err(err(format!("unknown option '{key}'")));
            }
            if value.is_empty() {
                return Err(err(format!("option '{key}' has no value")));
            }
            script.options.push(ScriptOption { key: key.to_string(), value: value.to_string(), guard });
        } else {
            let (time, action) = parse_event(content).map_err(err)?;
            if let ScriptTime::Absolute(t) = time {
                if t < last_absolute {
                    return Err(err(format!("time {t} goes backwards")));
                }
                last_absolute = t;
            }
            script.events.push(ScriptEvent { line, time, action, guard });
        }
    }
    if let Some((feature, line)) = guards.pop() {
        return Err(ParseError { line, message: format!("ifdef {feature} is never closed") });
    }
    Ok(script)
}

fn write_fields(f: &mut fmt::Formatter<'_>, fields: &[Field]) -> fmt::Result {
    f.write_str("[")?;
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        match &field.value {
            FieldValue::Wildcard => write!(f, "{}=*", field.key)?,
            FieldValue::Literal(v) => write!(f, "{}={v}", field.key)?,
        }
    }
    f.write_str("]")
}

impl fmt::Display for ScriptTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptTime::Relative(t) => write!(f, "+{t:?}"),
            ScriptTime::Absolute(t) => write!(f, "{t:?}"),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Inject(t) => {
                write!(f, "inject {} ", t.kind)?;
                write_fields(f, &t.fields)
            }
            Action::Expect { template, skip_sacks } => {
                write!(f, "expect {} ", template.kind)?;
                write_fields(f, &template.fields)?;
                if *skip_sacks {
                    f.write_str(" skip-sacks")?;
                }
                Ok(())
            }
            Action::Connect => f.write_str("connect"),
            Action::Send(fields) => {
                f.write_str("send ")?;
                write_fields(f, fields)
            }
            Action::Recv(fields) => {
                f.write_str("recv ")?;
                write_fields(f, fields)
            }
            Action::Wait => f.write_str("wait"),
        }
    }
}

/// Emits the `endif`/`ifdef` lines that move from guard `from` to guard `to`.
fn switch_guard(out: &mut String, from: &[String], to: &[String]) {
    let common = from.iter().zip(to).take_while(|(a, b)| a == b).count();
    for _ in common..from.len() {
        out.push_str("endif\n");
    }
    for g in &to[common..] {
        out.push_str(&format!("ifdef {g}\n"));
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let mut current: Vec<String> = Vec::new();
        for o in &self.options {
            switch_guard(&mut out, &current, &o.guard);
            current = o.guard.clone();
            out.push_str(&format!("opt {} = {}\n", o.key, o.value));
        }
        for e in &self.events {
            switch_guard(&mut out, &current, &e.guard);
            current = e.guard.clone();
            out.push_str(&format!("{} {}\n", e.time, e.action));
        }
        switch_guard(&mut out, &current, &[]);
        f.write_str(&out)
    }
}

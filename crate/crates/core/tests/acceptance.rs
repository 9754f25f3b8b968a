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

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sctp_idata::cli::{compare, model_csv, run_scenarios, summary_csv, write_outputs, RunResult, ScenarioConfig};
use sctp_idata::endpoint::AssociationConfig;
use sctp_idata::netsim::{run_dumbbell, DumbbellConfig, LinkConfig, SimOutput, UdpConfig, PPP_OVERHEAD};
use sctp_idata::sched::{Scheduler, SchedulerKind, SchedulerMode, StreamId, UserMessage};
use sctp_idata::script::{parse_script, run_script, run_suite, DEFAULT_FEATURES};
use sctp_idata::traffic::{GeneratorConfig, SizeSpec};
use sctp_idata::wire::pcap::ipv4_payload;
use sctp_idata::wire::{
    crc32c, decode_packet, encode_packet, Chunk, ChunkFlags, ChunkKind, DataChunk, Feature, ForwardTsnChunk, GapBlock, IDataChunk,
    IForwardTsnChunk, InitChunk, SackChunk, SctpPacket, SkippedMid, SkippedSsn,
};

type Outcome = Result<String, String>;

const HIGH_PRIORITY_SID: StreamId = 0;
const IPPROTO_SCTP: u8 = 132;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Both sweep scenarios, run once and shared by the first two criteria.
struct Sweep {
    cfg: ScenarioConfig,
    runs: Vec<RunResult>,
}

impl Sweep {
    fn load(name: &str) -> Result<Self, String> {
        let cfg = ScenarioConfig::load(&root().join("scenarios").join(name)).map_err(|e| e.to_string())?;
        let runs = run_scenarios(&cfg).map_err(|e| e.to_string())?;
        Ok(Sweep { cfg, runs })
    }

    /// Mean high-priority delay per swept size, in sweep order.
    fn high_priority_means(&self) -> Vec<(usize, f64)> {
        self.runs
            .iter()
            .map(|run| {
                let d: Vec<f64> = run.output.records.iter().filter(|r| r.stream == HIGH_PRIORITY_SID).map(|r| r.delay()).collect();
                (run.size_bytes, d.iter().sum::<f64>() / d.len().max(1) as f64)
            })
            .collect()
    }
}

fn load_sweeps() -> Result<(Sweep, Sweep, f64), String> {
    let start = Instant::now();
    let data = Sweep::load("paper_data.cfg")?;
    let idata = Sweep::load("paper_idata.cfg")?;
    ensure(!data.cfg.negotiated_idata(), || "paper_data.cfg negotiates I-DATA".into())?;
    ensure(idata.cfg.negotiated_idata(), || "paper_idata.cfg does not negotiate I-DATA".into())?;
    Ok((data, idata, start.elapsed().as_secs_f64()))
}

fn fmt_means(means: &[(usize, f64)]) -> String {
    means.iter().map(|(s, m)| format!("{}kB:{:.4}", s / 1024, m)).collect::<Vec<_>>().join(" ")
}

fn c1_head_of_line(sweeps: &Result<(Sweep, Sweep, f64), String>) -> Outcome {
    let (data, idata, secs) = sweeps.as_ref().map_err(Clone::clone)?;
    for s in [data, idata] {
        ensure(s.cfg.bottleneck.loss_rate == 0.0, || "scenario has loss".into())?;
        let sizes: Vec<usize> = s.runs.iter().map(|r| r.size_bytes).collect();
        ensure(sizes.first() == Some(&4096) && sizes.last() == Some(&131072) && sizes.windows(2).all(|w| w[1] == 2 * w[0]), || {
            format!("unexpected sweep {sizes:?}")
        })?;
    }
    let n = data.high_priority_means();
    let ratio = n.last().unwrap().1 / n[0].1;
    ensure(ratio >= 8.0, || format!("non-interleaving ratio {ratio:.2} < 8 ({})", fmt_means(&n)))?;
    ensure(n.windows(2).all(|w| w[1].1 > w[0].1), || format!("non-interleaving not monotone ({})", fmt_means(&n)))?;
    let i = idata.high_priority_means();
    let (lo, hi) = i.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, m)| (lo.min(m), hi.max(m)));
    let spread = hi / lo - 1.0;
    ensure(spread <= 0.20, || format!("interleaving spread {:.1}% > 20% ({})", spread * 100.0, fmt_means(&i)))?;
    ensure(*secs <= 60.0, || format!("runtime {secs:.1}s > 60s"))?;
    Ok(format!("non-interleaving x{ratio:.1} monotone, interleaving spread {:.1}%, {secs:.1}s", spread * 100.0))
}

fn c2_model_agreement(sweeps: &Result<(Sweep, Sweep, f64), String>) -> Outcome {
    let (data, idata, _) = sweeps.as_ref().map_err(Clone::clone)?;
    let mut worst = 0.0f64;
    for (s, column) in [(data, "d_n_s"), (idata, "d_i_s")] {
        let sizes: Vec<usize> = s.runs.iter().map(|r| r.size_bytes).collect();
        let model = model_csv(&s.cfg.model_params(), &sizes).map_err(|e| e.to_string())?;
        let measured = summary_csv(&s.runs);
        let report = compare(("summary.csv", &measured), ("model.csv", &model), 0.15, Some(HIGH_PRIORITY_SID), column).map_err(|e| e.to_string())?;
        ensure(report.cells.len() == sizes.len(), || format!("{column}: {} cells for {} sizes", report.cells.len(), sizes.len()))?;
        ensure(report.passed(), || format!("{column}:\n{}", report.table()))?;
        worst = report.cells.iter().map(|c| c.rel_error).fold(worst, f64::max);
    }
    Ok(format!("all sizes within 15%, worst {:.1}%", worst * 100.0))
}

const BULK_MESSAGES: [i64; 3] = [334, 333, 333];

fn bulk(idata: bool, loss: f64, seed: u64) -> DumbbellConfig {
    let streams = BULK_MESSAGES.len();
    let client = AssociationConfig { idata_enabled: idata, stream_count: streams, ..AssociationConfig::default() };
    let server = AssociationConfig {
        idata_enabled: idata,
        stream_count: streams,
        initiate_tag: 0x2000_0002,
        local_port: 5001,
        peer_port: 5000,
        ..AssociationConfig::default()
    };
    let generators = BULK_MESSAGES
        .iter()
        .enumerate()
        .map(|(i, &count)| GeneratorConfig {
            name: format!("bulk{i}"),
            id: i as u16,
            packet_count: count,
            packet_size: SizeSpec::Uniform(4, 3000),
            ..GeneratorConfig::default()
        })
        .collect();
    let link = LinkConfig { bandwidth_bps: 10e6, loss_rate: loss, framing_overhead: PPP_OVERHEAD, ..LinkConfig::default() };
    DumbbellConfig {
        bottleneck: link,
        reverse: link,
        udp: UdpConfig { rate_fraction: 0.0, ..UdpConfig::default() },
        client,
        server,
        generators,
        seed,
        duration: 3600.0,
        capture: false,
    }
}

/// Every message delivered once, intact and in per-stream order.
fn check_integrity(out: &SimOutput, expected: usize) -> Result<(), String> {
    ensure(out.integrity_errors.is_empty(), || format!("integrity: {:?}", &out.integrity_errors[..out.integrity_errors.len().min(3)]))?;
    ensure(out.sent_messages == expected, || format!("sent {} of {expected}", out.sent_messages))?;
    ensure(out.records.len() == expected && out.undelivered_messages == 0 && out.abandoned_messages == 0, || {
        format!("delivered {}, undelivered {}, abandoned {}", out.records.len(), out.undelivered_messages, out.abandoned_messages)
    })?;
    let mut next: BTreeMap<StreamId, u32> = BTreeMap::new();
    for r in &out.records {
        let n = next.entry(r.stream).or_insert(0);
        ensure(r.msg_index == *n, || format!("stream {} delivered message {} when {} was due", r.stream, r.msg_index, n))?;
        *n += 1;
    }
    Ok(())
}

fn c3_integrity_under_loss() -> Outcome {
    let start = Instant::now();
    let cases: Vec<(bool, f64)> = [false, true].iter().flat_map(|&m| [0.0, 0.01, 0.05].map(|l| (m, l))).collect();
    let results: Vec<Result<u64, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .iter()
            .map(|&(idata, loss)| {
                s.spawn(move || {
                    let tag = format!("{} loss {loss}", if idata { "I-DATA" } else { "DATA" });
                    let out = run_dumbbell(&bulk(idata, loss, 7)).map_err(|e| format!("{tag}: {e}"))?;
                    ensure(out.negotiated_idata == Some(idata), || format!("{tag}: negotiated {:?}", out.negotiated_idata))?;
                    check_integrity(&out, BULK_MESSAGES.iter().sum::<i64>() as usize).map_err(|e| format!("{tag}: {e}"))?;
                    Ok(out.sender.retransmissions)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("worker panicked".into()))).collect()
    });
    let mut retrans = Vec::new();
    for r in results {
        retrans.push(r?);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs <= 30.0, || format!("runtime {secs:.1}s > 30s"))?;
    ensure(retrans[2] > 0 && retrans[5] > 0, || "5% loss caused no retransmissions".into())?;
    Ok(format!("6 runs x 1000 messages intact, retransmissions {retrans:?}, {secs:.1}s"))
}

fn sctp_kinds(out: &SimOutput) -> Result<BTreeSet<ChunkKind>, String> {
    let mut kinds = BTreeSet::new();
    for rec in &out.pcap {
        let Some((proto, payload)) = ipv4_payload(&rec.data) else {
            return Err("pcap record is not IPv4".into());
        };
        if proto == IPPROTO_SCTP {
            let pkt = decode_packet(payload).map_err(|e| format!("pcap decode: {e}"))?;
            kinds.extend(pkt.chunks.iter().map(Chunk::kind));
        }
    }
    Ok(kinds)
}

fn c4_negotiation() -> Outcome {
    for local in [false, true] {
        for peer in [false, true] {
            let mut cfg = bulk(local, 0.0, 3);
            cfg.server.idata_enabled = peer;
            cfg.capture = true;
            for g in &mut cfg.generators {
                g.packet_count = 5;
            }
            let out = run_dumbbell(&cfg).map_err(|e| e.to_string())?;
            let kinds = sctp_kinds(&out)?;
            let both = local && peer;
            let tag = format!("local={local} peer={peer}");
            ensure(kinds.contains(&ChunkKind::IData) == both, || format!("{tag}: I-DATA on wire is {}", !both))?;
            ensure(kinds.contains(&ChunkKind::Data) != both, || format!("{tag}: DATA on wire is {both}"))?;
            check_integrity(&out, 15).map_err(|e| format!("{tag}: {e}"))?;
        }
    }
    let dir = root().join("crates/core/conformance");
    for name in ["negotiate_local_on_peer_on", "negotiate_local_on_peer_off", "negotiate_local_off_peer_on", "negotiate_local_off_peer_off"] {
        script_passes(&dir.join(format!("{name}.pdr")), &[])?;
    }
    Ok("pcap: I-DATA iff both sides enable it (4 runs); 4 negotiation scripts pass".into())
}

/// Direct model of stream selection: a cursor after the last served stream,
/// a lock in non-interleaving mode, and one fragment per step.
struct RefScheduler {
    kind: SchedulerKind,
    interleave: bool,
    max_fragment: usize,
    queues: Vec<VecDeque<RefMessage>>,
    priority: Vec<u16>,
    next_seq: Vec<[u32; 2]>,
    last: Option<usize>,
    locked: Option<usize>,
}

struct RefMessage {
    len: usize,
    time: f64,
    ordered: bool,
    sent: usize,
    fsn: u32,
    seq: Option<u32>,
}

impl RefScheduler {
    fn pick(&self) -> Option<usize> {
        if self.locked.is_some() {
            return self.locked;
        }
        let n = self.queues.len();
        let from = self.last.map_or(0, |l| l + 1);
        let cyclic: Vec<usize> = (0..n).map(|k| (from + k) % n).filter(|&s| !self.queues[s].is_empty()).collect();
        match self.kind {
            SchedulerKind::RoundRobin => cyclic.first().copied(),
            SchedulerKind::Priority => {
                let top = cyclic.iter().map(|&s| self.priority[s]).max()?;
                cyclic.into_iter().find(|&s| self.priority[s] == top)
            }
            SchedulerKind::Fcfs => {
                let mut best: Option<usize> = None;
                for s in 0..n {
                    if let Some(head) = self.queues[s].front() {
                        if best.is_none_or(|b| head.time < self.queues[b][0].time) {
                            best = Some(s);
                        }
                    }
                }
                best
            }
        }
    }

    fn step(&mut self) -> Option<(StreamId, u32, u32, usize)> {
        let s = self.pick()?;
        let counters = &mut self.next_seq[s];
        let m = self.queues[s].front_mut().unwrap();
        let seq = *m.seq.get_or_insert_with(|| {
            let c = &mut counters[usize::from(!m.ordered)];
            *c += 1;
            *c - 1
        });
        let size = (m.len - m.sent).min(self.max_fragment);
        let fsn = m.fsn;
        m.sent += size;
        m.fsn += 1;
        if m.sent == m.len {
            self.queues[s].pop_front();
            self.locked = None;
        } else if !self.interleave {
            self.locked = Some(s);
        }
        self.last = Some(s);
        Some((s as StreamId, seq, fsn, size))
    }
}

enum Op {
    Enqueue { sid: StreamId, len: usize, time: f64, ordered: bool },
    Pull(usize),
}

fn c5_scheduler_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let max_fragment = 100;
    let kinds = [SchedulerKind::RoundRobin, SchedulerKind::Priority, SchedulerKind::Fcfs];
    let mut chunks = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=5usize);
        let prios: Vec<u16> = (0..n).map(|_| rng.random_range(0..3u16) * 100).collect();
        let mut ops = Vec::new();
        let mut clock = 0.0;
        for _ in 0..rng.random_range(1..=20) {
            if rng.random_bool(0.3) {
                ops.push(Op::Pull(rng.random_range(1..4)));
            }
            clock += f64::from(rng.random_range(0..2u8));
            ops.push(Op::Enqueue {
                sid: rng.random_range(0..n) as StreamId,
                len: rng.random_range(1..=450),
                time: clock,
                ordered: rng.random_bool(0.8),
            });
        }
        ops.push(Op::Pull(usize::MAX));
        for kind in kinds {
            for mode in [SchedulerMode::Interleaving, SchedulerMode::NonInterleaving] {
                let mut sched = Scheduler::new(kind, mode, n, max_fragment, 16);
                let mut reference = RefScheduler {
                    kind,
                    interleave: mode == SchedulerMode::Interleaving,
                    max_fragment,
                    queues: (0..n).map(|_| VecDeque::new()).collect(),
                    priority: prios.clone(),
                    next_seq: vec![[0, 0]; n],
                    last: None,
                    locked: None,
                };
                for (sid, &p) in prios.iter().enumerate() {
                    sched.set_priority(sid as StreamId, p).map_err(|e| e.to_string())?;
                }
                let (mut got, mut want) = (Vec::new(), Vec::new());
                for op in &ops {
                    match *op {
                        Op::Enqueue { sid, len, time, ordered } => {
                            let msg = UserMessage { enqueue_time: time, ordered, ..UserMessage::new(sid, vec![0; len]) };
                            sched.enqueue(msg).map_err(|e| e.to_string())?;
                            reference.queues[sid as usize].push_back(RefMessage { len, time, ordered, sent: 0, fsn: 0, seq: None });
                        }
                        Op::Pull(k) => {
                            for _ in 0..k {
                                match (sched.next_chunk(usize::MAX), reference.step()) {
                                    (Some(c), Some(r)) => {
                                        got.push((c.sid, c.seq, c.fsn, c.payload.len()));
                                        want.push(r);
                                    }
                                    (None, None) => break,
                                    (c, r) => return Err(format!("case {case} {kind}/{mode:?}: sched {:?} vs reference {r:?}", c.map(|c| c.sid))),
                                }
                            }
                        }
                    }
                }
                ensure(got == want, || format!("case {case} {kind}/{mode:?}:\n  sched     {got:?}\n  reference {want:?}"))?;
                chunks += got.len();
            }
        }
    }
    reference_order()?;
    Ok(format!("500 scenarios x 6 configurations agree ({chunks} chunks); reference orders reproduced"))
}

fn reference_order() -> Result<(), String> {
    let run = |mode| -> Result<Vec<(StreamId, u32)>, String> {
        let mut s = Scheduler::new(SchedulerKind::RoundRobin, mode, 3, 1452, 16);
        for (sid, len) in [(0, 4 * 1452), (1, 12), (2, 12)] {
            s.enqueue(UserMessage::new(sid, vec![1; len])).map_err(|e| e.to_string())?;
        }
        Ok(s.next_chunks(usize::MAX).iter().map(|c| (c.sid, c.fsn)).collect())
    };
    let non = run(SchedulerMode::NonInterleaving)?;
    ensure(non == [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (2, 0)], || format!("non-interleaving order {non:?}"))?;
    let inter = run(SchedulerMode::Interleaving)?;
    ensure(inter == [(0, 0), (1, 0), (2, 0), (0, 1), (0, 2), (0, 3)], || format!("interleaving order {inter:?}"))
}

fn random_bytes(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<u8> {
    let len = rng.random_range(lo..=hi);
    (0..len).map(|_| rng.random()).collect()
}

fn random_extensions(rng: &mut ChaCha8Rng) -> BTreeSet<Feature> {
    [Feature::Interleaving, Feature::ForwardTsn, Feature::IForwardTsn].into_iter().filter(|_| rng.random_bool(0.5)).collect()
}

fn random_chunk(rng: &mut ChaCha8Rng) -> Chunk {
    let flags = ChunkFlags::from_byte(rng.random::<u8>() & 0x0f);
    match rng.random_range(0..9) {
        0 => Chunk::Data(DataChunk { flags, tsn: rng.random(), sid: rng.random(), ssn: rng.random(), ppid: rng.random(), payload: random_bytes(rng, 1, 300) }),
        1 => Chunk::IData(IDataChunk {
            flags,
            tsn: rng.random(),
            sid: rng.random(),
            mid: rng.random(),
            ppid_or_fsn: rng.random(),
            payload: random_bytes(rng, 1, 300),
        }),
        2 => Chunk::Sack(SackChunk {
            cum_tsn_ack: rng.random(),
            a_rwnd: rng.random(),
            gap_blocks: (0..rng.random_range(0..5)).map(|_| GapBlock { start: rng.random(), end: rng.random() }).collect(),
            dup_tsns: (0..rng.random_range(0..5)).map(|_| rng.random()).collect(),
        }),
        3 => Chunk::ForwardTsn(ForwardTsnChunk {
            new_cum_tsn: rng.random(),
            skipped: (0..rng.random_range(0..5)).map(|_| SkippedSsn { sid: rng.random(), ssn: rng.random() }).collect(),
        }),
        4 => Chunk::IForwardTsn(IForwardTsnChunk {
            new_cum_tsn: rng.random(),
            skipped: (0..rng.random_range(0..5)).map(|_| SkippedMid { sid: rng.random(), unordered: rng.random(), mid: rng.random() }).collect(),
        }),
        5 | 6 => {
            let init = InitChunk {
                initiate_tag: rng.random_range(1..=u32::MAX),
                a_rwnd: rng.random(),
                outbound_streams: rng.random_range(1..=u16::MAX),
                inbound_streams: rng.random_range(1..=u16::MAX),
                initial_tsn: rng.random(),
                extensions: random_extensions(rng),
                cookie: None,
            };
            if rng.random_bool(0.5) {
                Chunk::Init(init)
            } else {
                Chunk::InitAck(InitChunk { cookie: Some(random_bytes(rng, 1, 64)), ..init })
            }
        }
        7 => Chunk::CookieEcho(random_bytes(rng, 1, 64)),
        _ => Chunk::CookieAck,
    }
}

fn random_packet(rng: &mut ChaCha8Rng) -> SctpPacket {
    let mut pkt = SctpPacket::new(rng.random(), rng.random(), rng.random());
    for _ in 0..rng.random_range(1..=4) {
        pkt.chunks.push(random_chunk(rng));
    }
    pkt
}

fn c6_codec() -> Outcome {
    let crc = crc32c(b"123456789");
    ensure(crc == 0xE306_9283, || format!("crc32c(\"123456789\") = {crc:#010x}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10_000 {
        let pkt = random_packet(&mut rng);
        let bytes = encode_packet(&pkt).map_err(|e| format!("case {i}: encode: {e}"))?;
        let back = decode_packet(&bytes).map_err(|e| format!("case {i}: decode: {e}"))?;
        ensure(back.chunks == pkt.chunks, || format!("case {i}: chunks differ after round trip"))?;
        let h = (back.header.src_port, back.header.dst_port, back.header.verification_tag);
        ensure(h == (pkt.header.src_port, pkt.header.dst_port, pkt.header.verification_tag), || format!("case {i}: header differs"))?;
        let again = encode_packet(&back).map_err(|e| format!("case {i}: re-encode: {e}"))?;
        ensure(again == bytes, || format!("case {i}: re-encoding changed bytes"))?;
    }
    for i in 0..1_000 {
        let mut bytes = encode_packet(&random_packet(&mut rng)).map_err(|e| e.to_string())?;
        let bit = rng.random_range(0..bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        ensure(decode_packet(&bytes).is_err(), || format!("case {i}: flip of bit {bit} went undetected"))?;
    }
    Ok("crc vector ok, 10000 round trips, 1000/1000 bit flips detected".into())
}

fn script_passes(path: &Path, features: &[&str]) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let script = parse_script(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let features: Vec<String> = DEFAULT_FEATURES.iter().chain(features).map(|f| f.to_string()).collect();
    let r = run_script(&script, &AssociationConfig::default(), &features);
    match r.failure {
        None => Ok(()),
        Some(m) => Err(format!("{} line {}: {}", path.display(), m.line, m.reason)),
    }
}

fn c7_conformance() -> Outcome {
    let dir = root().join("crates/core/conformance");
    let mut summary = Vec::new();
    for extra in [vec![], vec!["STRICT_INPUT".to_string()]] {
        let features: Vec<String> = DEFAULT_FEATURES.iter().map(|f| f.to_string()).chain(extra.iter().cloned()).collect();
        let report = run_suite(&dir, &features).map_err(|e| e.to_string())?;
        ensure(report.entries.len() >= 20, || format!("only {} scripts", report.entries.len()))?;
        ensure(report.passed(), || report.tap())?;
        summary.push(format!("{}/{} [{}]", report.entries.len(), report.entries.len(), features.join(",")));
    }
    Ok(summary.join(", "))
}

const FRAGMENTS: [(u32, &str, usize, usize); 3] = [(1, "ppid=4, flags=B", 1000, 0), (2, "fsn=1, flags=-", 1000, 1000), (3, "fsn=2, flags=E", 500, 2000)];

fn permutation_script(order: &[usize]) -> String {
    let mut s = String::from(
        "opt strict = true\n\
         opt local.idata = true\n\
         opt peer.idata = true\n\
         +0.0 connect\n\
         +0.0 expect INIT []\n\
         +0.05 inject INIT-ACK [initiate_tag=0xbeef]\n\
         +0.0 expect COOKIE-ECHO []\n\
         +0.05 inject COOKIE-ACK []\n",
    );
    for &i in order {
        let (tsn, fields, len, off) = FRAGMENTS[i];
        s.push_str(&format!("+0.0 inject I-DATA [tsn={tsn}, sid=0, mid=0, {fields}, len={len}, off={off}]\n+0.0 expect SACK []\n"));
    }
    s.push_str("+0.0 recv [sid=0, len=2500, ppid=4, off=0]\n+0.5 wait\n");
    s
}

fn c8_permutations() -> Outcome {
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for order in orders {
        let script = parse_script(&permutation_script(&order)).map_err(|e| e.to_string())?;
        let features: Vec<String> = DEFAULT_FEATURES.iter().map(|f| f.to_string()).collect();
        let r = run_script(&script, &AssociationConfig::default(), &features);
        if let Some(m) = r.failure {
            return Err(format!("order {order:?} line {}: {}", m.line, m.reason));
        }
    }
    Ok("6/6 arrival orders deliver the 2500-byte message exactly once".into())
}

fn dir_contents(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        out.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path()).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn c9_determinism() -> Outcome {
    let mut files = 0;
    for name in ["paper_idata.cfg", "paper_data.cfg"] {
        let mut cfg = ScenarioConfig::load(&root().join("scenarios").join(name)).map_err(|e| e.to_string())?;
        cfg.pcap = true;
        cfg.bottleneck.loss_rate = 0.02;
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
            let runs = run_scenarios(&cfg).map_err(|e| e.to_string())?;
            write_outputs(&cfg, &runs, tmp.path()).map_err(|e| e.to_string())?;
            outputs.push(dir_contents(tmp.path())?);
        }
        ensure(outputs[0].keys().any(|k| k.ends_with(".pcap")), || format!("{name}: no pcap written"))?;
        for (file, bytes) in &outputs[0] {
            ensure(outputs[1].get(file) == Some(bytes), || format!("{name}: {file} differs between runs"))?;
        }
        ensure(outputs[0].len() == outputs[1].len(), || format!("{name}: file sets differ"))?;
        files += outputs[0].len();
    }
    Ok(format!("{files} CSV and pcap files byte-identical across repeated runs with 2% loss"))
}

fn c10_partial_reliability() -> Outcome {
    let dir = root().join("crates/core/conformance");
    let scripts = [
        "forward_tsn_send",
        "iforward_tsn_send",
        "forward_tsn_receive",
        "iforward_tsn_receive",
        "forward_tsn_unsent_tail",
        "iforward_tsn_split_message",
    ];
    for name in scripts {
        script_passes(&dir.join(format!("{name}.pdr")), &[])?;
    }
    // End to end: short lifetimes on a lossy link must abandon messages
    // without stalling the stream.
    let mut skips = Vec::new();
    for idata in [false, true] {
        let mut cfg = bulk(idata, 0.1, 11);
        cfg.capture = true;
        for g in &mut cfg.generators {
            g.packet_count = 100;
            g.packet_size = SizeSpec::Fixed(3000);
            g.lifetime = Some(0.2);
        }
        let out = run_dumbbell(&cfg).map_err(|e| e.to_string())?;
        let want = if idata { ChunkKind::IForwardTsn } else { ChunkKind::ForwardTsn };
        let kinds = sctp_kinds(&out)?;
        let tag = if idata { "I-DATA" } else { "DATA" };
        ensure(kinds.contains(&want), || format!("{tag}: no {want:?} on the wire"))?;
        ensure(out.integrity_errors.is_empty(), || format!("{tag}: {:?}", out.integrity_errors.first()))?;
        ensure(out.abandoned_messages > 0, || format!("{tag}: nothing abandoned"))?;
        ensure(out.undelivered_messages == 0, || format!("{tag}: {} messages neither delivered nor abandoned", out.undelivered_messages))?;
        for sid in 0..BULK_MESSAGES.len() as StreamId {
            let delivered: BTreeSet<u32> = out.records.iter().filter(|r| r.stream == sid).map(|r| r.msg_index).collect();
            let first_gap = (0..100).find(|i| !delivered.contains(i));
            let resumed = first_gap.is_some_and(|g| delivered.range(g..).next().is_some());
            ensure(resumed, || format!("{tag}: stream {sid} has no delivery after an abandoned message (first gap {first_gap:?})"))?;
        }
        skips.push(format!("{tag} abandoned {}", out.abandoned_messages));
    }
    Ok(format!("{} FORWARD-TSN/I-FORWARD-TSN scripts pass; lossy runs: {}", scripts.len(), skips.join(", ")))
}

fn main() -> ExitCode {
    let sweeps = load_sweeps();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("C1 head-of-line contrast", Box::new(|| c1_head_of_line(&sweeps))),
        ("C2 model agreement", Box::new(|| c2_model_agreement(&sweeps))),
        ("C3 integrity under loss", Box::new(c3_integrity_under_loss)),
        ("C4 negotiation truth table", Box::new(c4_negotiation)),
        ("C5 scheduler oracle", Box::new(c5_scheduler_oracle)),
        ("C6 codec properties", Box::new(c6_codec)),
        ("C7 conformance corpus", Box::new(c7_conformance)),
        ("C8 reassembly permutations", Box::new(c8_permutations)),
        ("C9 determinism", Box::new(c9_determinism)),
        ("C10 partial reliability", Box::new(c10_partial_reliability)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

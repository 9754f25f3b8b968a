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


//! Drives the `sctp-idata` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use sctp_idata::wire::decode_packet;
use sctp_idata::wire::pcap::{ipv4_payload, pcap_read};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sctp-idata")).args(args).output().expect("spawn binary")
}

const SMALL: &str = r#"
network.bandwidth = 1Mbps
network.delay = 10ms
network.bufferSize = 100kB
sctp.idata = true
sctp.scheduler = priority
gen[0].id = 1
gen[0].priority = 128
gen[0].packetCount = -1
gen[0].packetSize = ${ps=4 .. 8 step 2}kB
gen[0].packetInterval = 0s
gen[0].startTime = 0s
gen[1].id = 0
gen[1].priority = 255
gen[1].packetCount = -1
gen[1].packetSize = 16B
gen[1].packetInterval = 200ms
gen[1].startTime = 0s
sim.seed = 3
sim.duration = 3s
"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.cfg");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_is_an_error() {
    let out = bin(&["run", "/nonexistent/x.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_subcommand_rejected() {
    assert!(!bin(&["frobnicate"]).status.success());
}

#[test]
fn run_writes_outputs_and_decodable_pcaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin(&["run", &cfg, "--pcap", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "model.csv", "delays_run0.csv", "delays_run1.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.contains(",4096,")));
    assert!(summary.lines().any(|l| l.contains(",8192,")));
    assert!(!out_dir.join("delays_run2.csv").exists());
    for i in 0..2 {
        let (_, recs) = pcap_read(&out_dir.join(format!("run{i}.pcap"))).unwrap();
        assert!(!recs.is_empty());
        let mut sctp = 0;
        for r in &recs {
            if let Some((132, payload)) = ipv4_payload(&r.data) {
                decode_packet(payload).unwrap();
                sctp += 1;
            }
        }
        assert!(sctp > 0);
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|d| {
            let o = dir.path().join(d);
            assert!(bin(&["run", &cfg, "--seed", "9", "--out", o.to_str().unwrap()]).status.success());
            std::fs::read(o.join("summary.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn model_then_compare_self_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["model", "--sweep", "4kB:16kB:x2"]);
    assert!(out.status.success());
    let model = String::from_utf8(out.stdout).unwrap();
    assert_eq!(model.lines().count(), 4);
    let mpath = dir.path().join("model.csv");
    std::fs::write(&mpath, &model).unwrap();
    let mut measured = String::from("run,size_bytes,stream,mean_delay_s,median_delay_s,p99_delay_s,count\n");
    for (i, line) in model.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        measured.push_str(&format!("{i},{},0,{},0,0,1\n", cols[0], cols[1]));
    }
    let spath = dir.path().join("summary.csv");
    std::fs::write(&spath, &measured).unwrap();
    let ok = bin(&["compare", spath.to_str().unwrap(), mpath.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let off = bin(&["compare", spath.to_str().unwrap(), mpath.to_str().unwrap(), "--column", "d_i_s"]);
    assert_eq!(off.status.code(), Some(1));
}

#[test]
fn suite_reports_tap() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/conformance");
    let out = bin(&["suite", dir]);
    assert!(out.status.success());
    let tap = String::from_utf8(out.stdout).unwrap();
    assert!(tap.lines().any(|l| l.starts_with("1..")));
    assert!(!tap.lines().any(|l| l.starts_with("not ok")));
}

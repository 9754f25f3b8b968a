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

//! Command-line entry points: scenario runs, model sweeps, model comparison
//! and the conformance suite.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use clap::Subcommand;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::geometric_sweep;
use crate::model::DelayModelParams;
use crate::model::ModelError;
use crate::netsim::run_dumbbell;
use crate::netsim::SimError;
use crate::netsim::SimOutput;
use crate::sched::StreamId;
use crate::traffic::stream_stats;
use crate::wire::pcap::pcap_bytes;

pub use self::config::ConfigError;
pub use self::config::RunSpec;
pub use self::config::ScenarioConfig;

pub const DELAYS_HEADER: &str = "run,stream,msg_index,size_bytes,send_time_s,delivery_time_s,delay_s";
pub const SUMMARY_HEADER: &str = "run,size_bytes,stream,mean_delay_s,median_delay_s,p99_delay_s,count";
pub const MODEL_HEADER: &str = "size_bytes,d_n_s,d_i_s";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run}: {source}")]
    Sim { run: usize, source: SimError },
    #[error("run {run}: {count} integrity errors, first: {first}")]
    Integrity { run: usize, count: usize, first: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Csv { path: String, reason: String },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "sctp-idata", version, about = "SCTP message interleaving simulator and conformance runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file, expanding any packetSize sweep into separate runs.
    Run {
        config: PathBuf,
        /// Write one pcap per run.
        #[arg(long)]
        pcap: bool,
        /// Output directory (default: the config's output.dir, else the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the analytical delay model as CSV.
    Model {
        /// Bottleneck bandwidth in bit/s.
        #[arg(long, default_value_t = 1e6)]
        bw: f64,
        #[arg(long, default_value_t = 1500.0)]
        mtu: f64,
        #[arg(long, default_value_t = crate::model::S_HDR_DATA as f64)]
        s_hdr: f64,
        #[arg(long, default_value_t = 1452.0)]
        s_frag: f64,
        /// Seconds.
        #[arg(long, default_value_t = 0.01)]
        d_link: f64,
        /// Seconds.
        #[arg(long, default_value_t = 0.0)]
        d_buffer: f64,
        /// `start:end:xFACTOR`, sizes in bytes or with kB/MB suffixes.
        #[arg(long, default_value = "4kB:128kB:x2")]
        sweep: String,
    },
    /// Compare a measured summary.csv against a model CSV.
    Compare {
        measured: PathBuf,
        model: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        tol: f64,
        /// Only compare this stream (default: all streams in the summary).
        #[arg(long)]
        stream: Option<StreamId>,
        /// Model column to compare against.
        #[arg(long, default_value = "d_n_s")]
        column: String,
    },
    /// Run every .pdr script in a directory and print a TAP report.
    Suite {
        dir: PathBuf,
        /// Extra features declared to ifdef guards.
        #[arg(long = "feature")]
        features: Vec<String>,
    },
}

/// Parses `4kB:128kB:x2` into the geometric size list.
pub fn parse_sweep(s: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, k] = parts.as_slice() else {
        return Err(format!("sweep '{s}' is not start:end:xFACTOR"));
    };
    let a = config::parse_size(a)?;
    let b = config::parse_size(b)?;
    let k: usize = k.trim().trim_start_matches('x').parse().map_err(|_| format!("bad sweep factor '{k}'"))?;
    if a == 0 || k < 2 || a > b {
        return Err("sweep needs 0 < start <= end and a factor of at least 2".into());
    }
    Ok(geometric_sweep(a, b, k))
}

/// Model rows `size_bytes,d_n_s,d_i_s` with a header.
pub fn model_csv(params: &DelayModelParams, sizes: &[usize]) -> Result<String, ModelError> {
    let d_i = params.delay_interleaving()?;
    let mut out = format!("{MODEL_HEADER}\n");
    for &s in sizes {
        let d_n = params.delay_noninterleaving(s)?;
        writeln!(out, "{s},{d_n:.9},{d_i:.9}").expect("write to String");
    }
    Ok(out)
}

/// Outputs of one expanded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub spec_index: usize,
    pub size_bytes: usize,
    pub output: SimOutput,
}

pub fn delays_csv(run: &RunResult) -> String {
    let mut out = format!("{DELAYS_HEADER}\n");
    let mut records = run.output.records.clone();
    records.sort_by(|a, b| (a.stream, a.msg_index).cmp(&(b.stream, b.msg_index)));
    for r in &records {
        writeln!(
            out,
            "{},{},{},{},{:.9},{:.9},{:.9}",
            run.spec_index,
            r.stream,
            r.msg_index,
            r.size_bytes,
            r.send_time,
            r.delivery_time,
            r.delay()
        )
        .expect("write to String");
    }
    out
}

pub fn summary_csv(runs: &[RunResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for run in runs {
        let mut streams: Vec<StreamId> = run.output.records.iter().map(|r| r.stream).collect();
        streams.sort_unstable();
        streams.dedup();
        for sid in streams {
            let delays: Vec<f64> = run.output.records.iter().filter(|r| r.stream == sid).map(|r| r.delay()).collect();
            if let Some(s) = stream_stats(&delays) {
                writeln!(out, "{},{},{},{:.9},{:.9},{:.9},{}", run.spec_index, run.size_bytes, sid, s.mean, s.median, s.p99, s.count)
                    .expect("write to String");
            }
        }
    }
    out
}

/// Runs every expanded scenario in parallel; results are in run order.
pub fn run_scenarios(cfg: &ScenarioConfig) -> Result<Vec<RunResult>, CliError> {
    let specs = cfg.expand();
    specs
        .par_iter()
        .map(|spec: &RunSpec| {
            let output = run_dumbbell(&spec.sim).map_err(|source| CliError::Sim { run: spec.index, source })?;
            if let Some(first) = output.integrity_errors.first() {
                return Err(CliError::Integrity { run: spec.index, count: output.integrity_errors.len(), first: first.clone() });
            }
            Ok(RunResult { spec_index: spec.index, size_bytes: spec.size_bytes, output })
        })
        .collect()
}

/// Writes `delays_run<i>.csv`, `summary.csv`, `model.csv` and optional pcaps into `out`.
pub fn write_outputs(cfg: &ScenarioConfig, runs: &[RunResult], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();
    let mut write = |name: String, data: &[u8]| -> Result<(), CliError> {
        let path = out.join(name);
        fs::write(&path, data).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    for run in runs {
        write(format!("delays_run{}.csv", run.spec_index), delays_csv(run).as_bytes())?;
        if cfg.pcap {
            let bytes = pcap_bytes(&run.output.pcap).map_err(io_err(out))?;
            write(format!("run{}.pcap", run.spec_index), &bytes)?;
        }
    }
    write("summary.csv".into(), summary_csv(runs).as_bytes())?;
    let mut sizes: Vec<usize> = runs.iter().map(|r| r.size_bytes).filter(|&s| s > 0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    write("model.csv".into(), model_csv(&cfg.model_params(), &sizes)?.as_bytes())?;
    Ok(written)
}

pub fn cmd_run(config: &Path, pcap: bool, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<RunResult>, CliError> {
    let mut cfg = ScenarioConfig::load(config)?;
    cfg.pcap |= pcap;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let runs = run_scenarios(&cfg)?;
    write_outputs(&cfg, &runs, &out)?;
    Ok(runs)
}

/// Minimal header-keyed CSV table.
struct Table {
    path: String,
    rows: Vec<csv::StringRecord>,
    header: csv::StringRecord,
}

impl Table {
    fn read(path: &str, text: &str) -> Result<Self, CliError> {
        let csv_err = |e: csv::Error| CliError::Csv { path: path.to_string(), reason: e.to_string() };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_err)?.clone();
        let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
        Ok(Table { path: path.to_string(), rows, header })
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| CliError::Csv { path: self.path.clone(), reason: format!("missing column '{name}'") })
    }

    fn value<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T, CliError> {
        let raw = self.rows[row].get(col).unwrap_or("");
        raw.parse().map_err(|_| CliError::Csv { path: self.path.clone(), reason: format!("row {}: bad value '{raw}'", row + 2) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareCell {
    pub size_bytes: usize,
    pub stream: StreamId,
    pub measured: f64,
    pub model: f64,
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub column: String,
    pub tolerance: f64,
    pub cells: Vec<CompareCell>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        !self.cells.is_empty() && self.cells.iter().all(|c| c.pass)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:>10} {:>6} {:>12} {:>12} {:>9}  verdict ({} tol {})\n", "size", "stream", "measured_s", "model_s", "rel_err", self.column, self.tolerance);
        for c in &self.cells {
            let verdict = if c.pass { "ok" } else { "FAIL" };
            writeln!(out, "{:>10} {:>6} {:>12.6} {:>12.6} {:>9.4}  {verdict}", c.size_bytes, c.stream, c.measured, c.model, c.rel_error).expect("write to String");
        }
        out
    }
}

/// Per size and stream relative error of the measured mean delay against a model column.
pub fn compare(measured: (&str, &str), model: (&str, &str), tolerance: f64, stream: Option<StreamId>, column: &str) -> Result<CompareReport, CliError> {
    let m = Table::read(measured.0, measured.1)?;
    let d = Table::read(model.0, model.1)?;
    let (m_size, m_stream, m_mean) = (m.column("size_bytes")?, m.column("stream")?, m.column("mean_delay_s")?);
    let (d_size, d_col) = (d.column("size_bytes")?, d.column(column)?);
    let mut model_rows = std::collections::BTreeMap::new();
    for r in 0..d.rows.len() {
        model_rows.insert(d.value::<usize>(r, d_size)?, d.value::<f64>(r, d_col)?);
    }
    let mut cells = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    for r in 0..m.rows.len() {
        let sid: StreamId = m.value(r, m_stream)?;
        if stream.is_some_and(|s| s != sid) {
            continue;
        }
        let size: usize = m.value(r, m_size)?;
        let measured: f64 = m.value(r, m_mean)?;
        let Some(&model) = model_rows.get(&size) else {
            return Err(CliError::Csv { path: d.path.clone(), reason: format!("no model row for size {size}") });
        };
        used.insert(size);
        let rel_error = (measured - model).abs() / model;
        cells.push(CompareCell { size_bytes: size, stream: sid, measured, model, rel_error, pass: rel_error <= tolerance });
    }
    if let Some(missing) = model_rows.keys().find(|s| !used.contains(*s)) {
        return Err(CliError::Csv { path: m.path.clone(), reason: format!("no measurement for model size {missing}") });
    }
    Ok(CompareReport { column: column.to_string(), tolerance, cells })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, pcap, out, seed } => {
            let runs = cmd_run(&config, pcap, out, seed)?;
            for r in &runs {
                eprintln!(
                    "run {}: size {} B, {} delivered of {} sent, {} abandoned, end {:.3} s",
                    r.spec_index,
                    r.size_bytes,
                    r.output.records.len(),
                    r.output.sent_messages,
                    r.output.abandoned_messages,
                    r.output.end_time
                );
            }
            Ok(true)
        }
        Command::Model { bw, mtu, s_hdr, s_frag, d_link, d_buffer, sweep } => {
            let sizes = parse_sweep(&sweep).map_err(CliError::Usage)?;
            let params = DelayModelParams { s_hdr, s_frag, bw: bw / 8.0, mtu, d_link, d_buffer };
            print!("{}", model_csv(&params, &sizes)?);
            Ok(true)
        }
        Command::Compare { measured, model, tol, stream, column } => {
            let (mt, dt) = (read_text(&measured)?, read_text(&model)?);
            let report = compare((&measured.display().to_string(), &mt), (&model.display().to_string(), &dt), tol, stream, &column)?;
            print!("{}", report.table());
            Ok(report.passed())
        }
        Command::Suite { dir, features } => {
            let report = crate::script::run_suite(&dir, &features).map_err(io_err(&dir))?;
            print!("{}", report.tap());
            Ok(report.passed())
        }
    }
}

/// Binary entry point.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

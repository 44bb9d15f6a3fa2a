//! Trace CSV, report JSON and plot series.
//!
//! Trace columns, in order: `slot, event_id, action, objective_term,
//! decision_gap`, then `gamma_*` (M), `x_*` (M), `y_*` (L + 1), `a_*` (K),
//! `b_*` (K), `z_*` (L), `q_*` (K), `h_*` (M). Queue columns hold the state
//! after the slot. Floats use 17 significant digits.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use unisched::oracle::FrameSolution;
use unisched::{AttributeEvaluation, QueueState, SlotRecord, Trace};

use crate::experiment::{ExperimentReport, SweepRow};

pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const FRAMES_FILE: &str = "frames.csv";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.display().to_string(), source }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

/// Dimensions `(K, L, M)` of a trace, read off its initial state.
fn dims(initial: &QueueState) -> (usize, usize, usize) {
    (initial.q.len(), initial.z.len(), initial.h.len())
}

pub fn trace_header(k: usize, l: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["slot", "event_id", "action", "objective_term", "decision_gap"].iter().map(|s| s.to_string()).collect();
    let mut block = |name: &str, n: usize| h.extend((0..n).map(|i| format!("{name}_{i}")));
    block("gamma", m);
    block("x", m);
    block("y", l + 1);
    block("a", k);
    block("b", k);
    block("z", l);
    block("q", k);
    block("h", m);
    h
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), OutputError> {
    let (k, l, m) = dims(&trace.initial);
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(trace_header(k, l, m)).map_err(csv_err(path))?;
    for r in &trace.records {
        let mut row = vec![r.slot.to_string(), r.event_id.to_string(), r.action.to_string(), float(r.objective_term), float(r.decision_gap)];
        let s = &r.queues_after;
        for v in [&r.gamma, &r.eval.x, &r.eval.y, &r.eval.a, &r.eval.b, &s.z, &s.q, &s.h] {
            row.extend(v.iter().map(|x| float(*x)));
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a trace written by [`write_trace`]. The initial state is not in
/// the file; it fixes the dimensions.
pub fn read_trace(path: &Path, initial: &QueueState) -> Result<Trace, OutputError> {
    let (k, l, m) = dims(initial);
    let bad = |message: String| OutputError::Format { path: path.display().to_string(), message };
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = rd.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    if header != trace_header(k, l, m) {
        return Err(bad(format!("header does not match K = {k}, L = {l}, M = {m}")));
    }
    let mut records = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let int = |i: usize| field(i).parse::<usize>().map_err(|e| bad(format!("row {line}, column {i}: {e}")));
        let num = |i: usize| field(i).parse::<f64>().map_err(|e| bad(format!("row {line}, column {i}: {e}")));
        let mut col = 5;
        let mut take = |n: usize| -> Result<Vec<f64>, OutputError> {
            let v = (col..col + n).map(num).collect();
            col += n;
            v
        };
        let gamma = take(m)?;
        let x = take(m)?;
        let y = take(l + 1)?;
        let a = take(k)?;
        let b = take(k)?;
        let z = take(l)?;
        let q = take(k)?;
        let h = take(m)?;
        let slot = int(0)?;
        records.push(SlotRecord {
            slot,
            event_id: int(1)?,
            action: int(2)?,
            objective_term: num(3)?,
            decision_gap: num(4)?,
            gamma,
            eval: AttributeEvaluation { a, b, x, y },
            queues_after: QueueState { z, q, h, slot: slot + 1 },
        });
    }
    Ok(Trace { initial: initial.clone(), records })
}

pub fn write_report(path: &Path, report: &ExperimentReport) -> Result<(), OutputError> {
    let text = serde_json::to_string_pretty(report).map_err(|source| OutputError::Json { path: path.display().to_string(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_report(path: &Path) -> Result<ExperimentReport, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| OutputError::Json { path: path.display().to_string(), source })
}

/// Per-slot plot series: queue maxima and the running objective next to the
/// frame benchmark.
pub fn write_series(path: &Path, trace: &Trace, running: &[f64], benchmark: Option<f64>) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["slot", "max_z", "max_q", "max_abs_h", "running_objective", "frame_benchmark"]).map_err(csv_err(path))?;
    for (r, run) in trace.records.iter().zip(running) {
        let s = &r.queues_after;
        let top = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        w.write_record([(r.slot + 1).to_string(), float(top(&s.z)), float(top(&s.q)), float(top(&s.h)), float(*run), opt(benchmark)])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["V", "status", "cost", "utility", "frame_benchmark", "max_queue", "queue_ceiling", "all_hold"]).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            float(r.v),
            r.status.clone(),
            opt(r.cost),
            opt(r.utility),
            opt(r.frame_benchmark),
            opt(r.max_queue),
            opt(r.queue_ceiling),
            r.all_hold.map(|b| b.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_frames(path: &Path, frames: &[FrameSolution]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["frame", "t", "f_star", "argmin"]).map_err(csv_err(path))?;
    for f in frames {
        let argmin = f.argmin.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
        w.write_record([f.r.to_string(), f.t.to_string(), float(f.f_star), argmin]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `trace.csv`, `report.json` and `series.csv` into `dir`, creating
/// it if needed. Returns the paths written.
pub fn emit_outputs(dir: &Path, report: &ExperimentReport, trace: &Trace, running: &[f64]) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = [dir.join(TRACE_FILE), dir.join(REPORT_FILE), dir.join(SERIES_FILE)];
    write_trace(&paths[0], trace)?;
    write_report(&paths[1], report)?;
    write_series(&paths[2], trace, running, report.frame_benchmark)?;
    Ok(paths.to_vec())
}

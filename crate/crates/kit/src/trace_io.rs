//! Trace and summary files.
//!
//! CSV traces start with the version line `# igo-kit trace v1`, then a
//! header row `step,eta_0,..,eta_{n-1},best_f,emp_quantile_q,j_estimate,
//! kl_prev,elapsed_ns`. Floats are written with 17 significant digits;
//! missing optional values are empty cells. JSONL traces hold one JSON
//! object per step with the same fields (`eta` as an array).

use std::io::{self, BufRead, Write};

use igo_core::algorithms::{Termination, Trace};
use igo_core::objectives::Direction;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const TRACE_VERSION_LINE: &str = "# igo-kit trace v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub eta: Vec<f64>,
    pub best_f: f64,
    pub emp_quantile_q: Option<f64>,
    pub j_estimate: Option<f64>,
    pub kl_prev: f64,
    pub elapsed_ns: u64,
}

pub fn records(trace: &Trace) -> Vec<TraceRecord> {
    trace
        .records
        .iter()
        .map(|r| TraceRecord {
            step: r.step,
            eta: r.eta.clone(),
            best_f: r.best_f,
            emp_quantile_q: r.emp_quantile,
            j_estimate: r.j_estimate,
            kl_prev: r.kl_prev,
            elapsed_ns: r.elapsed_ns,
        })
        .collect()
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_header(eta_len: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((0..eta_len).map(|i| format!("eta_{i}")));
    h.extend(
        ["best_f", "emp_quantile_q", "j_estimate", "kl_prev", "elapsed_ns"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn write_csv<W: Write>(mut out: W, eta_len: usize, records: &[TraceRecord]) -> io::Result<()> {
    writeln!(out, "{TRACE_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(eta_len))?;
    for r in records {
        if r.eta.len() != eta_len {
            return Err(invalid(format!("step {} has {} eta entries", r.step, r.eta.len())));
        }
        let mut row = vec![r.step.to_string()];
        row.extend(r.eta.iter().map(|&x| fmt_float(x)));
        row.push(fmt_float(r.best_f));
        row.push(r.emp_quantile_q.map(fmt_float).unwrap_or_default());
        row.push(r.j_estimate.map(fmt_float).unwrap_or_default());
        row.push(fmt_float(r.kl_prev));
        row.push(r.elapsed_ns.to_string());
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn read_csv<R: BufRead>(mut input: R) -> io::Result<Vec<TraceRecord>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_end() != TRACE_VERSION_LINE {
        return Err(invalid(format!("expected `{TRACE_VERSION_LINE}`, got `{}`", first.trim_end())));
    }
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let eta_len = header
        .len()
        .checked_sub(6)
        .ok_or_else(|| invalid("trace header is too short"))?;
    let expected = csv_header(eta_len);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(invalid("trace header does not match the v1 column layout"));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|e| invalid(format!("`{s}`: {e}")));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { float(s).map(Some) };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let step = row[0].parse().map_err(|e| invalid(format!("step: {e}")))?;
        let eta = (1..=eta_len).map(|i| float(&row[i])).collect::<io::Result<_>>()?;
        let base = eta_len + 1;
        out.push(TraceRecord {
            step,
            eta,
            best_f: float(&row[base])?,
            emp_quantile_q: opt(&row[base + 1])?,
            j_estimate: opt(&row[base + 2])?,
            kl_prev: float(&row[base + 3])?,
            elapsed_ns: row[base + 4].parse().map_err(|e| invalid(format!("elapsed_ns: {e}")))?,
        });
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<TraceRecord>> {
    input
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// End-of-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub objective: String,
    pub dim: usize,
    pub seed: u64,
    pub steps: usize,
    pub termination: String,
    pub termination_step: Option<usize>,
    pub message: Option<String>,
    pub final_eta: Vec<f64>,
    pub best_fitness: Option<f64>,
    pub halvings: u32,
    pub uncertified: bool,
    pub domain_exit_policy: String,
    pub config: std::collections::BTreeMap<String, String>,
}

pub fn summary(cfg: &RunConfig, trace: &Trace, direction: Direction) -> Summary {
    let (step, message) = match &trace.termination {
        Termination::MaxSteps => (None, None),
        Termination::TargetReached { step } => (Some(*step), None),
        Termination::DomainExit { step, message } => (Some(*step), Some(message.clone())),
    };
    Summary {
        algorithm: trace.algorithm.to_string(),
        objective: cfg.algo.objective.to_string(),
        dim: cfg.algo.dim,
        seed: trace.seed,
        steps: trace.records.len(),
        termination: trace.termination.name().to_string(),
        termination_step: step,
        message,
        final_eta: trace.final_eta.as_slice().to_vec(),
        best_fitness: trace.best_fitness(direction),
        halvings: trace.halvings,
        uncertified: trace.uncertified,
        domain_exit_policy: trace.policy.to_string(),
        config: cfg
            .effective_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    }
}

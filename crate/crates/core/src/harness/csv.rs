//! Trace CSV codec.
//!
//! Columns: `iter,comm_sends,F_value,grad_norm,weighted_grad_norm,rel_error,alpha,stage`.
//! `comm_sends` counts directed vector sends (node to each neighbor), so the
//! per-pair exchange count is half of it. An unknown relative error is an
//! empty field. Floats use the shortest representation that parses back to
//! the same bits, which makes the format lossless.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solvers::{IterationRecord, Trace};

pub const TRACE_HEADER: &str = "iter,comm_sends,F_value,grad_norm,weighted_grad_norm,rel_error,alpha,stage";

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let rel = r.rel_error.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t, r.comm_sends, r.f_value, r.grad_norm, r.weighted_grad_norm, rel, r.alpha, r.stage
        );
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Trace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TRACE_HEADER => {}
        _ => return Err(Error::Csv { line: 1, reason: format!("expected header `{TRACE_HEADER}`") }),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let err = |reason: String| Error::Csv { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", fields.len())));
        }
        let float = |k: usize| fields[k].parse::<f64>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        let int = |k: usize| fields[k].parse::<u64>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        records.push(IterationRecord {
            t: int(0)? as usize,
            comm_sends: int(1)?,
            f_value: float(2)?,
            grad_norm: float(3)?,
            weighted_grad_norm: float(4)?,
            rel_error: if fields[5].is_empty() { None } else { Some(float(5)?) },
            alpha: float(6)?,
            stage: int(7)? as usize,
        });
    }
    Ok(Trace { records })
}

pub fn write_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace))?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    trace_from_csv(&std::fs::read_to_string(path)?)
}

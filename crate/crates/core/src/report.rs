//! Serialization of theorem report batches.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::verify::TheoremReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    reports: Vec<&'a TheoremReport>,
}

fn sorted(reports: &[TheoremReport]) -> Vec<&TheoremReport> {
    let mut out: Vec<&TheoremReport> = reports.iter().collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv output failed: {e}"))
}

/// Writes the batch sorted by `(theorem, function)`.
pub fn write_report<W: Write>(reports: &[TheoremReport], format: ReportFormat, mut out: W) -> Result<()> {
    let rows = sorted(reports);
    match format {
        ReportFormat::Json => {
            let env = Envelope {
                schema_version: SCHEMA_VERSION,
                reports: rows,
            };
            serde_json::to_writer_pretty(&mut out, &env).map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(out).map_err(|e| Error::io("<output>", e))
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "theorem",
                "function",
                "relation",
                "lhs",
                "rhs",
                "slack",
                "pass",
                "failed_cells",
                "total_cells",
                "trace_len",
            ])
            .map_err(csv_err)?;
            let num = |x: f64| if x.is_finite() { format!("{x:?}") } else { String::new() };
            for r in rows {
                let d = &r.diagnostics;
                let trace_len = d.variation_trace.len().max(d.sequence.len());
                w.write_record([
                    r.theorem.clone(),
                    r.function.clone(),
                    r.relation.as_str().to_string(),
                    num(r.lhs),
                    num(r.rhs),
                    num(r.slack),
                    r.pass.to_string(),
                    d.failed_cells.to_string(),
                    d.total_cells.to_string(),
                    trace_len.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io("<output>", e))
        }
    }
}

pub fn report_to_string(reports: &[TheoremReport], format: ReportFormat) -> Result<String> {
    let mut buf = Vec::new();
    write_report(reports, format, &mut buf)?;
    Ok(String::from_utf8(buf).expect("reports are UTF-8"))
}

/// Writes the batch to `path`.
pub fn emit_report(reports: &[TheoremReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(reports, format, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

//! JSONL tick logs, JSON reports, and CSV tables.
//!
//! All emitters are deterministic: fixed column orders and floats printed
//! at nine significant digits, so identical inputs produce byte-identical
//! files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::fit::TickRecord;
use crate::verify::ViolationReport;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Format a float at nine significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.8e}")
}

/// Read a JSONL tick log. Empty files yield an empty list; malformed or
/// invariant-violating lines report their line number.
pub fn read_tick_log(path: &Path) -> Result<Vec<TickRecord>, IoError> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TickRecord = serde_json::from_str(&line)
            .map_err(|source| IoError::Parse { line: idx + 1, source })?;
        rec.validate()
            .map_err(|e| IoError::Invalid { line: idx + 1, reason: e.to_string() })?;
        records.push(rec);
    }
    Ok(records)
}

/// Write one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Write a pretty-printed JSON report.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Violation sweep as CSV with the fixed column order
/// `eps_C,eps_V,eps_I,overshoot_budget,overshoot_cpa,bound_budget,bound_cpa,H_I`.
pub fn write_violation_csv(path: &Path, report: &ViolationReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record([
        "eps_C",
        "eps_V",
        "eps_I",
        "overshoot_budget",
        "overshoot_cpa",
        "bound_budget",
        "bound_cpa",
        "H_I",
    ])
    .map_err(csv_err)?;
    for row in &report.rows {
        w.write_record([
            fmt_sig(row.eps_cost),
            fmt_sig(row.eps_value),
            fmt_sig(row.eps_traffic),
            fmt_sig(row.overshoot_budget),
            fmt_sig(row.overshoot_cpa),
            fmt_sig(row.bound_budget),
            fmt_sig(row.bound_cpa),
            fmt_sig(report.harmonic_factor),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> IoError {
    IoError::Io(std::io::Error::other(e))
}

/// Write a CSV from a header plus preformatted rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("bidpace-io-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn tick_log_round_trips_structurally() {
        let path = tmp("roundtrip.jsonl");
        let records: Vec<TickRecord> = (1..=1000)
            .map(|t| TickRecord::new(t, 0.1 + t as f64 * 1e-3, 100.0, t as f64 * 0.5, t as f64 * 0.1))
            .collect();
        write_jsonl(&path, &records).unwrap();
        let back = read_tick_log(&path).unwrap();
        assert_eq!(back, records);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let path = tmp("extra.jsonl");
        std::fs::write(
            &path,
            "{\"t\":1,\"alpha\":0.5,\"I\":10,\"cost\":1.0,\"value\":0.5,\"note\":\"keep me\"}\n",
        )
        .unwrap();
        let recs = read_tick_log(&path).unwrap();
        assert_eq!(recs[0].extra.get("note").unwrap(), "keep me");
        write_jsonl(&path, &recs).unwrap();
        let again = read_tick_log(&path).unwrap();
        assert_eq!(again, recs);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn invariant_violations_name_the_line() {
        let path = tmp("bad.jsonl");
        std::fs::write(
            &path,
            "{\"t\":1,\"alpha\":0.5,\"I\":10,\"cost\":1.0,\"value\":0.5}\n{\"t\":2,\"alpha\":0.5,\"I\":0,\"cost\":1.0,\"value\":0.5}\n",
        )
        .unwrap();
        match read_tick_log(&path) {
            Err(IoError::Invalid { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected invalid-line error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn parse_errors_name_the_line() {
        let path = tmp("parse.jsonl");
        std::fs::write(&path, "{\"t\":1,\"alpha\":0.5,\"I\":10,\"cost\":1,\"value\":0}\nnot json\n").unwrap();
        match read_tick_log(&path) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_file_is_an_empty_log() {
        let path = tmp("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_tick_log(&path).unwrap().is_empty());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(0.125), "1.25000000e-1");
        assert_eq!(fmt_sig(1234.5678949), "1.23456789e3");
        assert_eq!(fmt_sig(0.0), "0.00000000e0");
    }
}

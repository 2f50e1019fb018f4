//! File formats: JSON-lines abstracts, P-value record CSV, stratum estimate
//! CSV and the submissions table.

use std::io::{BufRead, Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::parser::{AbstractDoc, Comparison, PValueRecord};
use crate::trend::{StratumEstimate, SubmissionTable};

/// Version of every file layout written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

pub const RECORD_HEADER: [&str; 6] = ["doc_id", "journal", "year", "comparison", "value", "raw_span"];
pub const STRATUM_HEADER: [&str; 5] = ["journal", "year", "pi0_hat", "sd", "n_obs"];
pub const SUBMISSION_HEADER: [&str; 3] = ["journal", "year", "submissions"];

/// Reads one abstract per line. The outer error is an I/O failure; inner
/// errors mark malformed lines (1-based) and leave the rest readable.
/// Blank lines are ignored.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Result<AbstractDoc>>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str::<AbstractDoc>(&line)
            .map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
            .and_then(|d| {
                d.validate().map_err(|e| Error::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                Ok(d)
            });
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_records<W: Write>(writer: W, records: &[PValueRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.doc_id.as_str(),
            r.journal.as_str(),
            &r.year.to_string(),
            r.comparison.as_str(),
            &r.value.to_string(),
            r.raw_span.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RecordRow {
    doc_id: String,
    journal: String,
    year: i32,
    comparison: String,
    value: f64,
    raw_span: String,
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<PValueRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, &RECORD_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RecordRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, e))?;
        let comparison: Comparison = row.comparison.parse().map_err(|e| malformed(line, e))?;
        if !row.value.is_finite() {
            return Err(malformed(line, format!("value {} is not finite", row.value)));
        }
        out.push(PValueRecord {
            doc_id: row.doc_id,
            journal: row.journal,
            year: row.year,
            comparison,
            value: row.value,
            raw_span: row.raw_span,
        });
    }
    Ok(out)
}

pub fn write_strata<W: Write>(writer: W, estimates: &[StratumEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STRATUM_HEADER)?;
    for e in estimates {
        w.write_record([
            e.journal.clone(),
            e.year.to_string(),
            e.pi0_hat.to_string(),
            e.sd.map(|v| v.to_string()).unwrap_or_default(),
            e.n_obs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct StratumRow {
    journal: String,
    year: i32,
    pi0_hat: f64,
    sd: Option<f64>,
    n_obs: usize,
}

pub fn read_strata<R: Read>(reader: R) -> Result<Vec<StratumEstimate>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, &STRATUM_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<StratumRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, e))?;
        if !(0.0..=1.0).contains(&row.pi0_hat) {
            return Err(malformed(line, format!("pi0_hat {} outside [0, 1]", row.pi0_hat)));
        }
        out.push(StratumEstimate {
            journal: row.journal,
            year: row.year,
            pi0_hat: row.pi0_hat,
            sd: row.sd,
            n_obs: row.n_obs,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SubmissionRow {
    journal: String,
    year: i32,
    submissions: f64,
}

pub fn read_submissions<R: Read>(reader: R) -> Result<SubmissionTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, &SUBMISSION_HEADER)?;
    let mut table = SubmissionTable::new();
    for (i, row) in rdr.deserialize::<SubmissionRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, e))?;
        if !row.submissions.is_finite() {
            return Err(malformed(line, "submissions is not finite"));
        }
        if table.insert((row.journal.clone(), row.year), row.submissions).is_some() {
            return Err(malformed(
                line,
                format!("duplicate row for ({}, {})", row.journal, row.year),
            ));
        }
    }
    Ok(table)
}

/// Which table a CSV header describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Records,
    Strata,
}

pub fn detect_table(header_line: &str) -> Option<TableKind> {
    let fields: Vec<&str> = header_line.trim_end().split(',').map(str::trim).collect();
    if fields == RECORD_HEADER {
        Some(TableKind::Records)
    } else if fields == STRATUM_HEADER {
        Some(TableKind::Strata)
    } else {
        None
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(malformed(
            1,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ))
    }
}

fn malformed(line: usize, e: impl ToString) -> Error {
    Error::Malformed {
        line,
        message: e.to_string(),
    }
}

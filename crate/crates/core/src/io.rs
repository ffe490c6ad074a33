//! Reading and writing part files and flat key/value configuration.
//!
//! The delimited format has a mandatory header
//! `campaign_id,arm,part_id,impressions,spend,value` and one row per part.
//! The record-lines format carries the same fields as one JSON object per
//! line.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{Arm, ExperimentDataset, Money, PartMeasurement};

pub const CSV_HEADER: [&str; 6] = [
    "campaign_id",
    "arm",
    "part_id",
    "impressions",
    "spend",
    "value",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Delimited,
    RecordLines,
}

impl InputFormat {
    /// `.jsonl` / `.ndjson` are record lines; everything else is delimited.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => InputFormat::RecordLines,
            _ => InputFormat::Delimited,
        }
    }
}

struct RawRow<'a> {
    campaign_id: &'a str,
    arm: &'a str,
    part_id: &'a str,
    impressions: &'a str,
    spend: &'a str,
    value: &'a str,
}

fn parse_row(row: RawRow<'_>, line: u64) -> Result<PartMeasurement> {
    let at = |message: String| Error::Parse { line, message };
    if row.campaign_id.trim().is_empty() {
        return Err(at("empty campaign_id".into()));
    }
    let arm: Arm = row.arm.parse().map_err(|e: Error| at(e.to_string()))?;
    let part_id: u32 = row
        .part_id
        .trim()
        .parse()
        .map_err(|_| at(format!("invalid part_id {:?}", row.part_id)))?;
    let impressions: u64 = row
        .impressions
        .trim()
        .parse()
        .map_err(|_| at(format!("invalid impressions {:?}", row.impressions)))?;
    let spend: Money = row.spend.parse().map_err(|e: Error| at(e.to_string()))?;
    let value: Money = row.value.parse().map_err(|e: Error| at(e.to_string()))?;
    if spend.micros() < 0 {
        return Err(at(format!("negative spend {spend}")));
    }
    if value.micros() < 0 {
        return Err(at(format!("negative value {value}")));
    }
    PartMeasurement::new(
        row.campaign_id.trim(),
        arm,
        part_id,
        impressions,
        spend,
        value,
    )
    .map_err(|e| at(e.to_string()))
}

fn assemble(rows: Vec<(u64, PartMeasurement)>) -> Result<ExperimentDataset> {
    let mut keys = BTreeSet::new();
    for (line, p) in &rows {
        if !keys.insert((p.campaign_id.clone(), p.arm, p.part_id)) {
            return Err(Error::Parse {
                line: *line,
                message: format!(
                    "duplicate part ({}, {}, {})",
                    p.campaign_id, p.arm, p.part_id
                ),
            });
        }
    }
    ExperimentDataset::from_parts(rows.into_iter().map(|(_, p)| p))
}

pub fn read_delimited<R: Read>(reader: R) -> Result<ExperimentDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {}, found {}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    CSV_HEADER.len(),
                    record.len()
                ),
            });
        }
        let part = parse_row(
            RawRow {
                campaign_id: &record[0],
                arm: &record[1],
                part_id: &record[2],
                impressions: &record[3],
                spend: &record[4],
                value: &record[5],
            },
            line,
        )?;
        rows.push((line, part));
    }
    assemble(rows)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Text(String),
    Number(serde_json::Number),
}

impl Scalar {
    fn text(&self) -> String {
        match self {
            Scalar::Text(s) => s.clone(),
            Scalar::Number(n) => n.to_string(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    campaign_id: String,
    arm: String,
    part_id: Scalar,
    impressions: Scalar,
    spend: Scalar,
    value: Scalar,
}

pub fn read_record_lines<R: BufRead>(reader: R) -> Result<ExperimentDataset> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let (part_id, impressions, spend, value) = (
            row.part_id.text(),
            row.impressions.text(),
            row.spend.text(),
            row.value.text(),
        );
        let part = parse_row(
            RawRow {
                campaign_id: &row.campaign_id,
                arm: &row.arm,
                part_id: &part_id,
                impressions: &impressions,
                spend: &spend,
                value: &value,
            },
            line_no,
        )?;
        rows.push((line_no, part));
    }
    assemble(rows)
}

/// Loads a part file.
pub fn ingest(path: &Path, format: InputFormat) -> Result<ExperimentDataset> {
    let file = fs::File::open(path)?;
    match format {
        InputFormat::Delimited => read_delimited(file),
        InputFormat::RecordLines => read_record_lines(std::io::BufReader::new(file)),
    }
}

pub fn write_delimited<W: Write>(dataset: &ExperimentDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for c in &dataset.campaigns {
        for p in c.parts_a.iter().chain(&c.parts_b) {
            wtr.write_record([
                p.campaign_id.clone(),
                p.arm.to_string(),
                p.part_id.to_string(),
                p.impressions.to_string(),
                p.spend.to_string(),
                p.value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn dataset_to_csv(dataset: &ExperimentDataset) -> Result<String> {
    let mut buf = Vec::new();
    write_delimited(dataset, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

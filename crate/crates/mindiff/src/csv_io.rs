//! CSV ingestion and export.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use mindiff_core::{Dataset, Membership, RawRecord};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::report::write_atomically;

/// Column mapping for a labelled text CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub text_column: String,
    pub label_columns: Vec<String>,
    pub group_columns: Vec<String>,
}

/// Cells at or above this value count as positive / member.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Rows dropped because a cell could not be parsed.
    pub skipped_rows: usize,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_label(cell: &str) -> Option<bool> {
    let v: f64 = cell.trim().parse().ok()?;
    v.is_finite().then_some(v >= BINARIZE_THRESHOLD)
}

fn parse_group(cell: &str) -> Option<Membership> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Some(Membership::Unknown);
    }
    parse_label(cell).map(Membership::from_flag)
}

/// Reads records from a CSV with a header row. Label and group cells are
/// binarized at [`BINARIZE_THRESHOLD`]; empty group cells are unknown
/// membership. Rows with unparsable cells are skipped and counted.
pub fn read_records(path: &Path, schema: &CsvSchema) -> Result<(Vec<RawRecord>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let text = column(&headers, &schema.text_column)?;
    let labels: Vec<usize> = schema.label_columns.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?;
    let groups: Vec<usize> = schema.group_columns.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let parsed = (|| {
            Some(RawRecord {
                text: row.get(text)?.to_string(),
                labels: labels.iter().map(|&i| parse_label(row.get(i)?)).collect::<Option<_>>()?,
                groups: groups.iter().map(|&i| parse_group(row.get(i)?)).collect::<Option<_>>()?,
            })
        })();
        match parsed {
            Some(r) => out.push(r),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Loads and hash-vectorizes a CSV into a [`Dataset`] of dimension `dim`.
pub fn load_csv(path: &Path, schema: &CsvSchema, dim: usize) -> Result<CsvLoad> {
    let (records, skipped_rows) = read_records(path, schema)?;
    let dataset = Dataset::from_records(&records, schema.label_columns.clone(), schema.group_columns.clone(), dim)?;
    Ok(CsvLoad { dataset, skipped_rows })
}

/// Writes records in the format [`load_csv`] reads: labels as `0`/`1`,
/// membership as `0`/`1` or an empty cell when unknown.
pub fn write_records(path: &Path, records: &[RawRecord], task_names: &[String], group_names: &[String]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["text"];
        header.extend(task_names.iter().map(String::as_str));
        header.extend(group_names.iter().map(String::as_str));
        w.write_record(&header)?;
        for r in records {
            let mut row = vec![r.text.as_str()];
            row.extend(r.labels.iter().map(|&y| if y { "1" } else { "0" }));
            row.extend(r.groups.iter().map(|g| match g {
                Membership::Member => "1",
                Membership::NonMember => "0",
                Membership::Unknown => "",
            }));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    write_atomically(path, |f| f.write_all(&buf))
}

/// Schema matching the output of [`write_records`].
pub fn schema_for(task_names: &[String], group_names: &[String]) -> CsvSchema {
    CsvSchema { text_column: "text".into(), label_columns: task_names.to_vec(), group_columns: group_names.to_vec() }
}

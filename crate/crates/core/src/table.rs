//! Headered, tab-separated numeric tables.
//!
//! Layout: optional `#`-prefixed comment lines (units, provenance of the
//! run), one line of column names, then one row of numbers per line.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_comment(mut self, line: impl Into<String>) -> Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} values, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        for c in &self.comments {
            writeln!(out, "# {c}").map_err(io_err)?;
        }
        let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        writer.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            writer
                .write_record(row.iter().map(|v| format_value(*v)))
                .map_err(csv_err)?;
        }
        writer.flush().map_err(io_err)
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        // writing to a Vec cannot fail
        let _ = self.write_to(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut comments = Vec::new();
        let mut body = String::new();
        for line in BufReader::new(input).lines() {
            let line = line.map_err(io_err)?;
            let trimmed = line.trim_start();
            if let Some(rest) = trimmed.strip_prefix('#') {
                comments.push(rest.trim().to_string());
            } else if !trimmed.is_empty() {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.to_string())
            .collect();
        if columns.is_empty() {
            return Err(Error::Parse("table has no header".into()));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let row = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: '{s}' is not a number", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::Parse(format!("row {} has {} fields", i + 1, row.len())));
            }
            rows.push(row);
        }
        Ok(Self { comments, columns, rows })
    }
}

pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.10e}")
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parse(format!("i/o: {e}"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("table: {e}"))
}

//! Output files with a provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use interlace::Result;
use serde::Serialize;
use serde_json::{json, Map, Value};

/// Provenance embedded in every output file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub schema: u32,
}

/// Version of the CSV column layouts.
pub const SCHEMA_VERSION: u32 = 1;

impl Header {
    pub fn new(command: &str, config_sha256: String, seed: u64) -> Header {
        Header {
            tool: "interlace",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256,
            seed,
            schema: SCHEMA_VERSION,
        }
    }

    fn comment(&self) -> String {
        format!(
            "# {} {} command={} config_sha256={} seed={} schema={}\n",
            self.tool, self.version, self.command, self.config_sha256, self.seed, self.schema
        )
    }
}

/// A table with fixed columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Table {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(&self.columns)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        Ok(wr.into_inner().map_err(|e| e.into_error())?)
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let m: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(r)
                        .map(|(c, v)| (c.to_string(), Value::String(v.clone())))
                        .collect();
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

/// Output format selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Row tables as CSV, summaries as JSON.
    Csv,
    /// One JSON document holding summaries and rows.
    Json,
}

/// The result of one command.
#[derive(Clone, Debug)]
pub struct Report {
    pub name: &'static str,
    pub table: Option<Table>,
    pub summary: Value,
}

/// Writes a report to `dir` and returns the paths written.
pub fn write_report(
    dir: &Path,
    header: &Header,
    format: Format,
    report: &Report,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut doc = json!({ "header": header, "summary": report.summary });
    match format {
        Format::Csv => {
            if let Some(t) = &report.table {
                let path = dir.join(format!("{}.csv", report.name));
                let mut bytes = header.comment().into_bytes();
                bytes.extend(t.to_csv()?);
                fs::write(&path, bytes)?;
                written.push(path);
            }
        }
        Format::Json => {
            if let Some(t) = &report.table {
                doc["rows"] = t.to_json();
            }
        }
    }
    let path = dir.join(format!("{}.json", report.name));
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}

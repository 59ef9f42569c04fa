use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::OutputFormat;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A named result table, written as `<stem>.csv` or `<stem>.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub stem: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(stem: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            stem: stem.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => format!("{}.csv", self.stem),
            OutputFormat::Json => format!("{}.json", self.stem),
        }
    }

    pub fn render(&self, format: OutputFormat) -> CliResult<Vec<u8>> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| CliError::Serialize(e.to_string());
                w.write_record(&self.columns).map_err(io)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::text)).map_err(io)?;
                }
                w.into_inner()
                    .map_err(|e| CliError::Serialize(e.to_string()))
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
                    .collect();
                let doc = json!({ "columns": self.columns, "rows": rows });
                let mut bytes = serde_json::to_vec_pretty(&doc)
                    .map_err(|e| CliError::Serialize(e.to_string()))?;
                bytes.push(b'\n');
                Ok(bytes)
            }
        }
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        source: e,
    })
}

/// `20·log10(v)` floored at -300 dB.
pub fn amplitude_db(v: f64) -> f64 {
    20.0 * v.max(1e-15).log10()
}

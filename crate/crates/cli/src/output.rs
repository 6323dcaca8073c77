//! Result envelopes: JSON with a `meta` block, or CSV with meta columns.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Identity of a run: what was asked for and the bytes of every file read.
#[derive(Debug, Default)]
pub struct Provenance {
    file_digests: Vec<(String, String)>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Provenance {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.file_digests
            .push((path.display().to_string(), hex(&Sha256::digest(&bytes))));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String, CliError> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| CliError::Usage(format!("{} is not valid UTF-8", path.display())))
    }

    /// SHA-256 over the canonical JSON of the command, its arguments and the file digests.
    pub fn config_hash(&self, command: &str, args: &Value) -> String {
        let files: Vec<&str> = self.file_digests.iter().map(|(_, d)| d.as_str()).collect();
        let canonical = json!({"command": command, "args": args, "files": files});
        hex(&Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub generator: &'static str,
}

/// Row-oriented view of a result for CSV output.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// One row per element, columns in field order.
    pub fn from_rows<T: Serialize>(rows: &[T]) -> Result<Self, CliError> {
        let mut table = Table::default();
        for r in rows {
            let Value::Object(map) = serde_json::to_value(r).map_err(|e| CliError::Runtime(e.to_string()))? else {
                return Err(CliError::Runtime("row is not an object".into()));
            };
            if table.headers.is_empty() {
                table.headers = map.keys().cloned().collect();
            }
            table.rows.push(map.into_iter().map(|(_, v)| v).collect());
        }
        Ok(table)
    }

    fn with_meta(mut self, meta: &Meta) -> Self {
        // Deterministic commands carry blank trials/confidence cells so every CSV has the same meta columns.
        let extra = [
            ("trials", Value::Null),
            ("confidence", Value::Null),
            ("seed", json!(meta.seed)),
            ("config_hash", json!(meta.config_hash)),
            ("generator", json!(meta.generator)),
        ];
        for (name, value) in extra {
            if !self.headers.iter().any(|h| h == name) {
                self.headers.push(name.to_string());
                for row in &mut self.rows {
                    row.push(value.clone());
                }
            }
        }
        self
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub struct Report {
    pub result: Value,
    pub table: Option<Table>,
}

impl Report {
    pub fn new<T: Serialize>(result: &T, table: Option<Table>) -> Result<Self, CliError> {
        Ok(Report {
            result: serde_json::to_value(result).map_err(|e| CliError::Runtime(e.to_string()))?,
            table,
        })
    }

    pub fn render(self, meta: &Meta, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => {
                let mut top = Map::new();
                top.insert("meta".into(), serde_json::to_value(meta).expect("meta serializes"));
                top.insert("result".into(), self.result);
                Ok(serde_json::to_string_pretty(&Value::Object(top)).expect("value serializes") + "\n")
            }
            Format::Csv => {
                let table = self
                    .table
                    .ok_or_else(|| CliError::Usage(format!("`{}` has no CSV form; use --format json", meta.command)))?
                    .with_meta(meta);
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| CliError::Runtime(e.to_string());
                w.write_record(&table.headers).map_err(io)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(cell)).map_err(io)?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
                Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
            }
        }
    }
}

/// Columns of an experiment table to draw as points with error bars.
#[derive(Debug, Clone, Copy)]
pub struct Plot {
    pub x: &'static str,
    pub y: &'static str,
    pub low: &'static str,
    pub high: &'static str,
}

impl Plot {
    /// A gnuplot script that draws `csv` (already written to `data`).
    pub fn script(&self, csv: &str, data: &Path) -> Result<String, CliError> {
        let header: Vec<&str> = csv.lines().next().unwrap_or_default().split(',').collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .map(|i| i + 1)
                .ok_or_else(|| CliError::Runtime(format!("column {name} missing from table")))
        };
        let (x, y, lo, hi) = (col(self.x)?, col(self.y)?, col(self.low)?, col(self.high)?);
        let data = data.display().to_string().replace('\\', "\\\\").replace('"', "\\\"");
        Ok(format!(
            "set datafile separator ','\n\
             set key off\n\
             set xlabel '{}'\n\
             set ylabel '{}'\n\
             plot \"{data}\" skip 1 using {x}:{y}:{lo}:{hi} with yerrorbars pt 7\n",
            self.x, self.y
        ))
    }
}

pub fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

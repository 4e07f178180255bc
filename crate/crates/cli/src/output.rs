//! CSV / JSON writers with a provenance header.
//!
//! CSV output starts with `#` comment lines (tool, schema version, command,
//! timestamp, constants, resolved config, config hash, seed), then a column
//! header and one row per grid cell. JSON output carries the same keys, one
//! per line, followed by `columns` and `rows`. Only the `generated_unix` line
//! differs between two runs of the same configuration.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use qilab_core::emission::PhysicalConstants;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = concat!("qi-lab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    /// Undefined value; empty in CSV, `null` in JSON.
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // -0.0 prints as 0
            Cell::Float(v) => format!("{:.16e}", if *v == 0.0 { 0.0 } else { *v }),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(v) => Value::String(v.clone()),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

/// What the header records about a run.
pub struct Provenance {
    pub command: &'static str,
    pub config: Value,
    pub seed: u64,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: u64) -> CliResult<Self> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Failed(format!("serialising config: {e}")))?;
        Ok(Self { command, config, seed })
    }

    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.config.to_string().as_bytes()))
    }

    fn fields(&self) -> Vec<(&'static str, Value)> {
        let generated = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let constants = serde_json::to_value(PhysicalConstants::CODATA_2018).unwrap_or(Value::Null);
        vec![
            ("tool", Value::from(TOOL)),
            ("schema_version", Value::from(SCHEMA_VERSION)),
            ("command", Value::from(self.command)),
            ("generated_unix", Value::from(generated)),
            ("constants", constants),
            ("config", self.config.clone()),
            ("config_hash", Value::from(self.config_hash())),
            ("seed", Value::from(self.seed)),
        ]
    }
}

enum Body {
    Csv(Box<csv::Writer<Box<dyn Write>>>),
    Json { out: Box<dyn Write>, rows: usize },
}

/// Streaming table writer.
pub struct Report {
    body: Body,
    width: usize,
}

fn open_sink(output: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match output {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::io(format!("creating {}", p.display()), e))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn io_err(e: io::Error) -> CliError {
    CliError::io("writing output", e)
}

impl Report {
    pub fn open(format: Format, output: Option<&Path>, prov: &Provenance, columns: &[&str]) -> CliResult<Self> {
        let mut out = open_sink(output)?;
        let body = match format {
            Format::Csv => {
                for (key, value) in prov.fields() {
                    match value {
                        Value::String(s) if key == "tool" => writeln!(out, "# {s}"),
                        Value::String(s) => writeln!(out, "# {key}: {s}"),
                        v => writeln!(out, "# {key}: {v}"),
                    }
                    .map_err(io_err)?;
                }
                let mut w = csv::WriterBuilder::new().from_writer(out);
                w.write_record(columns)?;
                Body::Csv(Box::new(w))
            }
            Format::Json => {
                writeln!(out, "{{").map_err(io_err)?;
                for (key, value) in prov.fields() {
                    writeln!(out, "  \"{key}\": {value},").map_err(io_err)?;
                }
                writeln!(out, "  \"columns\": {},", Value::from(columns.to_vec())).map_err(io_err)?;
                write!(out, "  \"rows\": [").map_err(io_err)?;
                Body::Json { out, rows: 0 }
            }
        };
        Ok(Self {
            body,
            width: columns.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> CliResult<()> {
        if cells.len() != self.width {
            return Err(CliError::Failed(format!(
                "row has {} cells for {} columns",
                cells.len(),
                self.width
            )));
        }
        match &mut self.body {
            Body::Csv(w) => w.write_record(cells.iter().map(Cell::csv))?,
            Body::Json { out, rows } => {
                let sep = if *rows == 0 { "" } else { "," };
                let row = Value::Array(cells.iter().map(Cell::json).collect());
                write!(out, "{sep}\n    {row}").map_err(io_err)?;
                *rows += 1;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> CliResult<()> {
        match self.body {
            Body::Csv(mut w) => w.flush().map_err(io_err),
            Body::Json { mut out, rows } => {
                let close = if rows == 0 { "]\n}" } else { "\n  ]\n}" };
                writeln!(out, "{close}").map_err(io_err)?;
                out.flush().map_err(io_err)
            }
        }
    }
}

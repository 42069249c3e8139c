use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One table cell. Floats print in shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Null,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Null, Cell::Float)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Bool(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Null => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Value,
    /// Quantities fixed by the config, such as step counts and snapped points.
    pub derived: Value,
    pub wall_clock_seconds: f64,
}

/// Finished run: everything is computed before anything is written.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub manifest: RunManifest,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Map<String, Value>,
    /// False when a tolerance check of a verify-style command failed.
    pub passed: bool,
}

impl Report {
    pub(crate) fn new<C: Serialize>(
        command: &str,
        seed: Option<u64>,
        config: &C,
        columns: Vec<&'static str>,
    ) -> Result<Self> {
        Ok(Report {
            manifest: RunManifest {
                command: command.to_string(),
                version: VERSION.to_string(),
                seed,
                config: serde_json::to_value(config)?,
                derived: Value::Object(Map::new()),
                wall_clock_seconds: 0.0,
            },
            columns,
            rows: Vec::new(),
            summary: Map::new(),
            passed: true,
        })
    }

    pub(crate) fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub(crate) fn derive(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        if let Value::Object(m) = &mut self.manifest.derived {
            m.insert(key.to_string(), serde_json::to_value(value)?);
        }
        Ok(())
    }

    pub(crate) fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.summary.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub(crate) fn finish(mut self, started: Instant) -> Self {
        self.manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
        self.summary.insert("passed".into(), Value::Bool(self.passed));
        self
    }

    /// Column `name` as floats (non-float cells are skipped).
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(c) = self.columns.iter().position(|&n| n == name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| match r[c] {
                Cell::Float(v) => Some(v),
                Cell::Int(v) => Some(v as f64),
                _ => None,
            })
            .collect()
    }

    /// Manifest lines prefixed by `# `, then a header row and the body.
    pub fn to_csv(&self) -> Result<String> {
        let m = &self.manifest;
        let mut out = String::new();
        out.push_str(&format!("# kpzlab {} {}\n", m.version, m.command));
        if let Some(seed) = m.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        out.push_str(&format!("# config: {}\n", serde_json::to_string(&m.config)?));
        out.push_str(&format!("# derived: {}\n", serde_json::to_string(&m.derived)?));
        out.push_str(&format!("# wall_clock_seconds: {:?}\n", m.wall_clock_seconds));
        out.push_str(&self.csv_body()?);
        Ok(out)
    }

    /// Header row and data rows only; identical across reruns.
    pub fn csv_body(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// `{manifest, rows, summary}`, each row an object keyed by column.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Map<String, Value>> = self
            .rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .zip(r)
                    .map(|(k, c)| Ok((k.to_string(), serde_json::to_value(c)?)))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let doc = serde_json::json!({
            "manifest": self.manifest,
            "rows": rows,
            "summary": self.summary,
        });
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    /// Writes to `path`, or to stdout when there is none.
    pub fn write(&self, format: Format, path: Option<&Path>) -> Result<()> {
        let text = self.render(format)?;
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

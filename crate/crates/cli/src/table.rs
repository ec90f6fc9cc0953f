//! Column tables and their CSV / JSON renderings.

use std::io::Write;

use serde_json::{json, Map, Value};

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(usize),
    Num(f64),
    Flag(bool),
    /// Undefined at this row (no successor, pole, degenerate ratio).
    Empty,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }

    fn csv(&self) -> String {
        match *self {
            Cell::Int(i) => i.to_string(),
            // 17 significant digits round-trip every f64
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(_) => String::new(),
            Cell::Flag(b) => u8::from(b).to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match *self {
            Cell::Int(i) => json!(i),
            Cell::Num(v) => finite_json(v),
            Cell::Flag(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Non-finite values have no JSON number form; they become `null`.
pub fn finite_json(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Map<String, Value>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }

    /// Keeps every `stride`-th row, always including the last one.
    pub fn thin(&mut self, stride: usize) {
        if stride <= 1 || self.rows.is_empty() {
            return;
        }
        let last = self.rows.len() - 1;
        let rows = std::mem::take(&mut self.rows);
        self.rows = rows
            .into_iter()
            .enumerate()
            .filter(|(k, _)| k % stride == 0 || *k == last)
            .map(|(_, r)| r)
            .collect();
    }

    pub fn write(&self, format: Format, out: impl Write) -> Result<(), CliError> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => write_json(&self.to_json(), out),
        }
    }

    fn write_csv(&self, out: impl Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| CliError::Output(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Output(e.to_string()))
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        json!({
            "columns": self.columns,
            "rows": rows,
            "summary": Value::Object(self.summary.clone()),
        })
    }
}

pub fn write_json(value: &Value, mut out: impl Write) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Output(e.to_string()))
}

//! Result tables and their CSV and JSON encodings.

use std::fmt::Write as _;
use std::io::Write;

use qnet::lp::Tolerances;
use serde_json::{json, Map, Value};

/// Version string written into every JSON result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    /// Undefined value, e.g. a fidelity when the link is never active.
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

/// Formats a float with 17 significant digits; non-finite values use
/// `inf`, `-inf` and `nan`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => csv_quote(s),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(format_float(*v)),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Vec<Cell>>) {
        for r in rows {
            self.push(r);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| csv_quote(c)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Run metadata attached to JSON output.
#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub tolerances: Tolerances,
}

pub fn to_json(table: &Table, meta: &Meta) -> Value {
    let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
    json!({
        "meta": {
            "version": VERSION,
            "command": meta.command,
            "seed": meta.seed,
            "tolerances": {
                "feasibility": meta.tolerances.feasibility,
                "optimality": meta.tolerances.optimality,
            },
        },
        "data": {
            "columns": table.columns,
            "rows": rows,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub fn render(table: &Table, meta: &Meta, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&to_json(table, meta)).expect("result is serialisable");
            s.push('\n');
            s
        }
    }
}

pub fn write_output(text: &str, out: Option<&std::path::Path>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            // A reader that stops early (`| head`) is not an error.
            match lock.write_all(text.as_bytes()).and_then(|_| lock.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r,
            }
        }
    }
}

/// Checks a JSON result against the layout in `schema/result.schema.json`.
pub fn validate_result(v: &Value) -> Result<(), String> {
    let top = v.as_object().ok_or("result must be an object")?;
    only_keys(top, &["meta", "data"], "result")?;
    let meta = obj(top, "meta")?;
    only_keys(meta, &["version", "command", "seed", "tolerances"], "meta")?;
    str_field(meta, "version")?;
    str_field(meta, "command")?;
    meta.get("seed").and_then(Value::as_u64).ok_or("meta.seed must be a non-negative integer")?;
    let tol = obj(meta, "tolerances")?;
    only_keys(tol, &["feasibility", "optimality"], "meta.tolerances")?;
    for k in ["feasibility", "optimality"] {
        let x = tol.get(k).and_then(Value::as_f64).ok_or(format!("meta.tolerances.{k} must be a number"))?;
        if x <= 0.0 {
            return Err(format!("meta.tolerances.{k} must be positive"));
        }
    }
    let data = obj(top, "data")?;
    only_keys(data, &["columns", "rows"], "data")?;
    let cols = data.get("columns").and_then(Value::as_array).ok_or("data.columns must be an array")?;
    if cols.is_empty() || !cols.iter().all(Value::is_string) {
        return Err("data.columns must be a non-empty array of strings".into());
    }
    let rows = data.get("rows").and_then(Value::as_array).ok_or("data.rows must be an array")?;
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array().ok_or(format!("data.rows[{i}] must be an array"))?;
        if r.len() != cols.len() {
            return Err(format!("data.rows[{i}] has {} cells, expected {}", r.len(), cols.len()));
        }
        if let Some(c) = r.iter().find(|c| !(c.is_number() || c.is_string() || c.is_null())) {
            return Err(format!("data.rows[{i}] holds {c}, expected number, string or null"));
        }
    }
    Ok(())
}

fn obj<'a>(m: &'a Map<String, Value>, key: &str) -> Result<&'a Map<String, Value>, String> {
    m.get(key).and_then(Value::as_object).ok_or(format!("{key} must be an object"))
}

fn str_field(m: &Map<String, Value>, key: &str) -> Result<(), String> {
    m.get(key).and_then(Value::as_str).map(|_| ()).ok_or(format!("meta.{key} must be a string"))
}

fn only_keys(m: &Map<String, Value>, keys: &[&str], ctx: &str) -> Result<(), String> {
    for k in keys {
        if !m.contains_key(*k) {
            return Err(format!("{ctx} is missing \"{k}\""));
        }
    }
    if let Some(extra) = m.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(format!("{ctx} has unexpected key \"{extra}\""));
    }
    Ok(())
}

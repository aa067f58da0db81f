//! Output files: CSV or JSON tables and JSON summaries, each headed by the
//! tool version, command, seed and the full resolved parameter set.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::CliError;

pub const TOOL: &str = concat!("fluidtcp ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
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
        Cell::Bool(v)
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

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Float(v.unwrap_or(f64::NAN))
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            // NaN and infinities become null.
            Cell::Float(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or
/// large magnitudes.
pub fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($x)),*]
    };
}
pub(crate) use row;

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Table {
        Table { name: name.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match table {}", self.name);
        self.rows.push(row);
    }
}

/// Header data shared by every file of one run.
#[derive(Debug, Clone)]
pub struct Meta {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub params: Value,
}

impl Meta {
    pub fn new(command: &'static str, seed: Option<u64>, params: &impl Serialize) -> Meta {
        Meta { command, seed, params: serde_json::to_value(params).expect("parameters serialize") }
    }

    fn seed_text(&self) -> String {
        self.seed.map_or("none".to_string(), |s| s.to_string())
    }

    fn header(&self) -> String {
        format!(
            "# {TOOL}\n# command: {}\n# seed: {}\n# params: {}\n",
            self.command,
            self.seed_text(),
            serde_json::to_string(&self.params).expect("parameters serialize")
        )
    }

    fn json(&self) -> Value {
        json!({ "tool": TOOL, "command": self.command, "seed": self.seed, "params": self.params })
    }
}

/// Writes the files of one run into an output directory.
pub struct Sink {
    dir: PathBuf,
    format: Format,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format, meta: Meta) -> Result<Sink, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Sink { dir: dir.to_path_buf(), format, meta, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn table(&mut self, table: &Table) -> Result<(), CliError> {
        let (ext, body) = match self.format {
            Format::Csv => ("csv", self.csv(table)?),
            Format::Json => {
                let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
                let doc = json!({ "meta": self.meta.json(), "columns": table.columns, "rows": rows });
                ("json", pretty(&doc))
            }
        };
        self.write(&format!("{}.{ext}", table.name), &body)
    }

    /// Key/value summary, always JSON.
    pub fn summary(&mut self, name: &str, summary: Value) -> Result<(), CliError> {
        let doc = json!({ "meta": self.meta.json(), "summary": summary });
        self.write(&format!("{name}.json"), &pretty(&doc))
    }

    fn csv(&self, table: &Table) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Runtime(format!("csv encoding failed: {e}"));
        w.write_record(&table.columns).map_err(io)?;
        for r in &table.rows {
            w.write_record(r.iter().map(Cell::csv)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(format!("csv encoding failed: {e}")))?;
        Ok(self.meta.header() + &String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write(&mut self, file: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(file);
        fs::write(&path, body).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json encodes") + "\n"
}

/// Parameter object from a config file: plain JSON, a JSON output of this
/// tool, or a CSV output whose `# params:` header line is reused.
pub fn load_params(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# params: ")) {
        return serde_json::from_str(line).map_err(bad);
    }
    let v: Value = serde_json::from_str(&text).map_err(bad)?;
    match v.get("meta").and_then(|m| m.get("params")) {
        Some(p) => Ok(p.clone()),
        None => Ok(v),
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Drops unset flags: nulls, and `false` for switches.
fn set_flags(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().filter(|(_, v)| !matches!(v, Value::Null | Value::Bool(false))).collect::<Map<_, _>>()),
        other => other,
    }
}

/// Defaults, overlaid by the config file, overlaid by explicit flags.
pub fn resolve<P: Default + Serialize + DeserializeOwned>(config: Option<&Path>, flags: &impl Serialize) -> Result<P, CliError> {
    let mut v = serde_json::to_value(P::default()).expect("defaults serialize");
    if let Some(path) = config {
        merge(&mut v, load_params(path)?);
    }
    merge(&mut v, set_flags(serde_json::to_value(flags).expect("flags serialize")));
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("invalid parameters: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, -2.5, 1e-12, 3.0e20, 0.1 + 0.2, 15.269] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_float(1e-12), "1e-12");
        assert_eq!(fmt_float(0.25), "0.25");
    }

    #[test]
    fn flags_override_config() {
        let mut base = json!({ "a": 1, "b": { "c": 2, "d": 3 } });
        merge(&mut base, json!({ "b": { "d": 4 } }));
        merge(&mut base, set_flags(json!({ "a": null, "e": false, "f": true })));
        assert_eq!(base, json!({ "a": 1, "b": { "c": 2, "d": 4 }, "f": true }));
    }
}

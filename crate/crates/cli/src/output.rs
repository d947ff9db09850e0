use std::fmt;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Map, Value};

/// The JSON schema every emitted report validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Schema version, bumped on any change to the report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Validation, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Numerical, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Validation => 1,
            FailureKind::Numerical | FailureKind::Io => 2,
        }
    }

    pub fn to_json(&self, command: &str) -> Value {
        json!({
            "error": {
                "command": command,
                "exit_code": self.exit_code(),
                "kind": self.kind,
                "message": self.message,
            },
            "version": env!("CARGO_PKG_VERSION"),
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

impl From<detmeasure::Error> for Failure {
    fn from(e: detmeasure::Error) -> Self {
        if e.is_numerical() {
            Failure::numerical(e.to_string())
        } else {
            Failure::invalid(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { kind: FailureKind::Io, message: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { kind: FailureKind::Io, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Rows for CSV output. Cells are already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip formatting, so reruns are byte-identical.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        let a = self.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            self.to_string()
        } else {
            format!("{self:e}")
        }
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_cell!(usize, bool);

pub fn cell(v: impl Cell) -> String {
    v.cell()
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, cell)
}

/// Result of one subcommand run.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    /// Identity residuals, keyed by name.
    pub residuals: Map<String, Value>,
    pub table: Table,
}

impl Report {
    pub fn new(command: &str, inputs: impl Serialize, results: Value, table: Table) -> Self {
        Report {
            command: command.to_string(),
            inputs: serde_json::to_value(inputs).unwrap_or(Value::Null),
            results,
            residuals: Map::new(),
            table,
        }
    }

    pub fn residual(mut self, name: &str, value: f64) -> Self {
        self.residuals.insert(name.to_string(), json!(value));
        self
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "inputs": self.inputs,
            "residuals": self.residuals,
            "results": self.results,
            "schema_version": SCHEMA_VERSION,
            "version": env!("CARGO_PKG_VERSION"),
        })
    }

    pub fn write_json(&self, out: &mut dyn Write) -> CliResult<()> {
        let value = self.to_json();
        let schema: Value = serde_json::from_str(REPORT_SCHEMA).expect("shipped schema is valid JSON");
        validate(&value, &schema).map_err(|e| Failure::numerical(format!("report violates schema: {e}")))?;
        serde_json::to_writer_pretty(&mut *out, &value).map_err(|e| Failure::numerical(e.to_string()))?;
        writeln!(out)?;
        Ok(())
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.table.headers)?;
        for row in &self.table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn type_matches(v: &Value, ty: &str) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Checks `value` against the subset of JSON Schema used by the shipped
/// schema: `type`, `required`, `properties`, `additionalProperties`,
/// `items`, `enum` and `minimum`.
pub fn validate(value: &Value, schema: &Value) -> Result<(), String> {
    validate_at(value, schema, "$")
}

fn validate_at(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    match schema.get("type") {
        Some(Value::String(t)) if !type_matches(value, t) => return Err(format!("{path}: expected {t}")),
        Some(Value::Array(ts)) if !ts.iter().filter_map(Value::as_str).any(|t| type_matches(value, t)) => {
            return Err(format!("{path}: expected one of {ts:?}"));
        }
        _ => {}
    }
    if let Some(Value::Array(allowed)) = schema.get("enum") {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in {allowed:?}"));
        }
    }
    if let (Some(min), Some(v)) = (schema.get("minimum").and_then(Value::as_f64), value.as_f64()) {
        if v < min {
            return Err(format!("{path}: {v} < {min}"));
        }
    }
    if let Value::Object(map) = value {
        if let Some(Value::Array(req)) = schema.get("required") {
            for key in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    return Err(format!("{path}: missing {key}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (key, v) in map {
            let child = format!("{path}.{key}");
            match (props.and_then(|p| p.get(key)), schema.get("additionalProperties")) {
                (Some(s), _) => validate_at(v, s, &child)?,
                (None, Some(Value::Bool(false))) => return Err(format!("{child}: not allowed")),
                (None, Some(s @ Value::Object(_))) => validate_at(v, s, &child)?,
                _ => {}
            }
        }
    }
    if let (Value::Array(items), Some(s)) = (value, schema.get("items")) {
        for (i, v) in items.iter().enumerate() {
            validate_at(v, s, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Value {
        serde_json::from_str(REPORT_SCHEMA).unwrap()
    }

    fn sample_report() -> Report {
        Report::new("det", json!({ "lambda": -1.0 }), json!({ "det": 0.5 }), Table::new(&["det"])).residual("r", 1e-12)
    }

    #[test]
    fn report_validates() {
        assert_eq!(validate(&sample_report().to_json(), &schema()), Ok(()));
    }

    #[test]
    fn validator_rejects_bad_reports() {
        let mut v = sample_report().to_json();
        v["command"] = json!("nope");
        assert!(validate(&v, &schema()).is_err());

        let mut v = sample_report().to_json();
        v["residuals"]["r"] = json!("text");
        assert!(validate(&v, &schema()).unwrap_err().contains("residuals.r"));

        let mut v = sample_report().to_json();
        v.as_object_mut().unwrap().remove("version");
        assert!(validate(&v, &schema()).unwrap_err().contains("missing version"));

        let mut v = sample_report().to_json();
        v["extra"] = json!(1);
        assert!(validate(&v, &schema()).is_err());
    }

    #[test]
    fn cells_round_trip() {
        for x in [0.0, 1.5, -2.25e-17, 3e20, 0.1 + 0.2, 1e-4] {
            assert_eq!(cell(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(cell(2.5e-9), "2.5e-9");
        assert_eq!(cell(7usize), "7");
    }

    #[test]
    fn failures_map_to_exit_codes() {
        let bad: Failure = detmeasure::Error::InvalidParameter("x".into()).into();
        let sing: Failure = detmeasure::Error::Singular("x".into()).into();
        assert_eq!((bad.exit_code(), sing.exit_code()), (1, 2));
    }
}

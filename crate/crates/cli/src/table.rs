use std::collections::BTreeMap;
use std::io::Write;

use esmlab::esm::fmt9;
use serde_json::{json, Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

/// Rounds to nine significant digits.
pub fn round9(x: f64) -> f64 {
    if x.is_finite() {
        fmt9(x).parse().expect("fmt9 output parses")
    } else {
        x
    }
}

impl Cell {
    /// Rounded to nine significant digits, so CSV and JSON agree.
    pub fn float(x: f64) -> Self {
        Cell::Float(round9(x))
    }

    pub fn int(x: impl TryInto<i64>) -> Self {
        Cell::Int(x.try_into().unwrap_or(i64::MAX))
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt9(*x),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn to_value(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(x) => json!(fmt9(*x)),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    fn from_value(v: &Value) -> Result<Self, CliError> {
        match v {
            Value::Bool(b) => Ok(Cell::Bool(*b)),
            Value::String(s) => Ok(Cell::Text(s.clone())),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(Cell::Int(i)),
                None => Ok(Cell::Float(n.as_f64().expect("finite number"))),
            },
            other => Err(CliError::Input(format!("unsupported cell {other}"))),
        }
    }
}

/// Rows under named columns, plus the run configuration as metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: BTreeMap::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// `# key=value` lines, a header row, then the rows.
    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}").expect("write to Vec");
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    pub fn to_json_value(&self) -> Value {
        json!({
            "meta": self.meta,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_value).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn from_json_str(s: &str) -> Result<Self, CliError> {
        let v: Value = serde_json::from_str(s)?;
        let bad = |m: &str| CliError::Input(format!("table JSON: {m}"));
        let obj = v.as_object().ok_or_else(|| bad("not an object"))?;
        let meta = obj
            .get("meta")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing meta"))?
            .iter()
            .map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())).ok_or_else(|| bad("meta values are strings")))
            .collect::<Result<_, _>>()?;
        let columns = obj
            .get("columns")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing columns"))?
            .iter()
            .map(|c| c.as_str().map(str::to_string).ok_or_else(|| bad("column names are strings")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut t = Table { meta, columns, rows: Vec::new() };
        for r in obj.get("rows").and_then(Value::as_array).ok_or_else(|| bad("missing rows"))? {
            let cells = r
                .as_array()
                .ok_or_else(|| bad("rows are arrays"))?
                .iter()
                .map(Cell::from_value)
                .collect::<Result<Vec<_>, _>>()?;
            if cells.len() != t.columns.len() {
                return Err(bad("row width differs from header"));
            }
            t.rows.push(cells);
        }
        Ok(t)
    }
}

/// What a subcommand produces.
#[derive(Debug, Clone)]
pub enum Output {
    Table(Table),
    /// A document with its own schema; `meta` is inserted at the top level.
    Document { meta: BTreeMap<String, String>, body: Map<String, Value>, csv: Table },
}

impl Output {
    pub fn set_meta(&mut self, meta: BTreeMap<String, String>) {
        match self {
            Output::Table(t) => t.meta = meta,
            Output::Document { meta: m, csv, .. } => {
                csv.meta = meta.clone();
                *m = meta;
            }
        }
    }

    pub fn render(&self, json: bool) -> Result<Vec<u8>, CliError> {
        if !json {
            return match self {
                Output::Table(t) | Output::Document { csv: t, .. } => t.to_csv(),
            };
        }
        let v = match self {
            Output::Table(t) => t.to_json_value(),
            Output::Document { meta, body, .. } => {
                let mut b = body.clone();
                b.insert("meta".into(), json!(meta));
                Value::Object(b)
            }
        };
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s.into_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["mu", "excess_mean", "excess_sd", "bound", "label", "ok"]);
        t.meta.insert("command".into(), "bounds rate".into());
        t.meta.insert("seed".into(), "7".into());
        t.push(vec![Cell::float(0.0625), Cell::float(0.108873142571), Cell::float(1e-12), Cell::float(2.0), Cell::text("a,b"), Cell::Bool(true)]);
        t.push(vec![Cell::float(1.0 / 3.0), Cell::int(3), Cell::float(-0.0), Cell::float(12345678901.0), Cell::text("\"q\""), Cell::Bool(false)]);
        t
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let s = String::from_utf8(Output::Table(t.clone()).render(true).unwrap()).unwrap();
        assert_eq!(Table::from_json_str(&s).unwrap(), t);
        let e = Table::new(&["x"]);
        let s = String::from_utf8(Output::Table(e.clone()).render(true).unwrap()).unwrap();
        assert_eq!(Table::from_json_str(&s).unwrap(), e);
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = String::from_utf8(Table::new(&["mu", "excess_mean", "excess_sd", "bound"]).to_csv().unwrap()).unwrap();
        assert_eq!(csv, "mu,excess_mean,excess_sd,bound\n");
    }

    #[test]
    fn csv_layout() {
        let csv = String::from_utf8(sample().to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# command=bounds rate");
        assert_eq!(lines[1], "# seed=7");
        assert_eq!(lines[2], "mu,excess_mean,excess_sd,bound,label,ok");
        assert_eq!(lines[3], "0.0625,0.108873143,1e-12,2,\"a,b\",true");
        assert_eq!(lines[4], "0.333333333,3,-0,1.23456789e10,\"\"\"q\"\"\",false");
    }

    #[test]
    fn floats_keep_nine_digits() {
        assert_eq!(Cell::float(2.0 / 7.0), Cell::Float(0.285714286));
        assert_eq!(Cell::float(f64::NAN).render(), "NaN");
    }
}

//! Output assembly: the JSON report, the CSV table and file writing.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};

use amd_core::numerics::{Operator, C64};

/// One CSV table; every cell is pre-formatted.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits, enough for an exact f64 round trip.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Matrix as rows of [re, im] pairs.
pub fn op_json(m: &Operator) -> Value {
    Value::Array(
        m.rows()
            .into_iter()
            .map(|row| Value::Array(row.iter().map(complex_json).collect()))
            .collect(),
    )
}

pub fn complex_json(z: &C64) -> Value {
    json!([z.re, z.im])
}

pub struct Output {
    pub report: Value,
    pub table: Table,
    pub plot: Option<String>,
}

/// Writes report.json, data.csv and, when present, plot.svg into `dir`.
pub fn write_all(dir: &Path, out: &Output) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(&out.report).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    fs::write(dir.join("data.csv"), out.table.to_csv())?;
    if let Some(svg) = &out.plot {
        fs::write(dir.join("plot.svg"), svg)?;
    }
    Ok(())
}

/// Short human summary for stdout.
pub fn summary_lines(report: &Value) -> String {
    let mut out = String::new();
    if let Some(summary) = report.get("summary").and_then(Value::as_object) {
        for (k, v) in summary {
            let _ = writeln!(out, "{k}: {v}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn table_writes_header_and_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(1.0), opt_num(None)]);
        assert_eq!(t.to_csv(), "a,b\n1.0000000000000000e0,\n");
    }
}

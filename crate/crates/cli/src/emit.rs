//! CSV and JSON writers.
//!
//! Floats in CSV use `{:.16e}` (17 significant digits). JSON objects are
//! `serde_json::Map`, which keeps keys sorted, and floats are written in
//! shortest round-trip form. Both outputs end with a newline.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: &str = "1";

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A table whose first column is the integer step index.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(columns: Vec<String>) -> Self {
        CsvTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, row) in self.rows.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push(',');
                out.push_str(&format_float(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Adds the schema version and renders with a trailing newline.
pub fn render_json(mut doc: Value) -> String {
    if let Value::Object(map) = &mut doc {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    let mut out = serde_json::to_string_pretty(&doc).expect("JSON values always serialise");
    out.push('\n');
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `{"rows", "cols", "data"}` with `data` in row-major order.
pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    let data: Vec<f64> = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub fn vector_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

/// Inverse of [`matrix_json`].
pub fn parse_matrix_json(v: &Value) -> Result<DMatrix<f64>> {
    let bad = || CliError::config("matrix", "expected {\"rows\", \"cols\", \"data\"}");
    let rows = v["rows"].as_u64().ok_or_else(bad)? as usize;
    let cols = v["cols"].as_u64().ok_or_else(bad)? as usize;
    let data = v["data"]
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|x| x.as_f64().ok_or_else(bad))
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != rows * cols {
        return Err(CliError::config(
            "matrix",
            format!("{} entries for a {rows}x{cols} matrix", data.len()),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(0.0), "0.0000000000000000e0");
        let back: f64 = format_float(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn empty_table_is_header_only() {
        let table = CsvTable::new(vec!["cost_h2".into(), "cost_offline".into()]);
        assert_eq!(table.render(), "t,cost_h2,cost_offline\n");
    }

    #[test]
    fn json_keys_are_sorted() {
        let text = render_json(json!({ "b": 1, "a": 2 }));
        let a = text.find("\"a\"").unwrap();
        let b = text.find("\"b\"").unwrap();
        let s = text.find("\"schema_version\"").unwrap();
        assert!(a < b && b < s);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn matrices_round_trip_exactly() {
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0) - 1e-17 * i as f64);
        let text = serde_json::to_string(&matrix_json(&m)).unwrap();
        let back = parse_matrix_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        let empty = DMatrix::<f64>::zeros(2, 0);
        assert_eq!(parse_matrix_json(&matrix_json(&empty)).unwrap(), empty);
    }
}

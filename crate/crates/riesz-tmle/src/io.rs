//! CSV datasets, report documents and metrics tables.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use riesz_core::data::Column;
use riesz_core::eif::EstimateReport;
use riesz_core::sim::MetricsTable;
use riesz_core::{ColumnRole, Dataset};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

/// Reads a CSV file, keeping the schema's columns in schema order. Empty
/// cells become missing; [`Dataset::new`] decides whether that is allowed.
pub fn load_csv(path: impl AsRef<Path>, schema: &[(String, ColumnRole)]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &[(String, ColumnRole)]) -> Result<Dataset> {
    if schema.is_empty() {
        return Err(CliError::config("data.schema is empty"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(e, "header"))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let index: Vec<usize> = schema
        .iter()
        .map(|(name, _)| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| riesz_core::Error::Schema(format!("column `{name}` is missing from the file")))
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, "record"))?;
        for (k, &j) in index.iter().enumerate() {
            let raw = record.get(j).unwrap_or("").trim();
            let v = if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| riesz_core::Error::Parse {
                    row: row + 1,
                    column: schema[k].0.clone(),
                    message: format!("`{raw}` is not a number"),
                })?)
            };
            cells[k].push(v);
        }
    }
    let columns = schema
        .iter()
        .zip(cells)
        .map(|((name, role), c)| Column::with_missing(name, *role, c))
        .collect();
    Ok(Dataset::new(columns)?)
}

fn csv_error(e: csv::Error, what: &str) -> CliError {
    riesz_core::Error::Parse {
        row: e.position().map_or(0, |p| p.record() as usize),
        column: what.to_string(),
        message: e.to_string(),
    }
    .into()
}

/// Writes every column with its header; missing cells are left empty. Values
/// use the shortest representation that parses back to the same bits.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| CliError::io("<csv>", std::io::Error::other(e));
    w.write_record(data.columns().iter().map(|c| c.name.as_str()))
        .map_err(io_err)?;
    for i in 0..data.n() {
        w.write_record(data.columns().iter().map(|c| {
            if c.is_valid(i) {
                format!("{:?}", c.values[i])
            } else {
                String::new()
            }
        }))
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(data, file)
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// `{psi, se, ci_lo, ci_hi, n, diagnostics{...}}`.
pub fn report_json(r: &EstimateReport) -> Value {
    let d = &r.diagnostics;
    json!({
        "psi": num(r.psi),
        "se": num(r.se),
        "ci_lo": num(r.ci.0),
        "ci_hi": num(r.ci.1),
        "n": r.n,
        "diagnostics": {
            "score_residual": num(d.score_residual),
            "epsilons": d.epsilons.iter().map(|e| num(*e)).collect::<Vec<_>>(),
            "truncation_count": d.truncation_count,
            "learners_converged": d.learners_converged,
            "passes": d.passes,
            "degenerate": d.degenerate,
            "warnings": d.warnings,
        }
    })
}

pub const METRICS_HEADER: [&str; 7] = ["n", "estimator", "arm", "metric", "value", "mc_se", "reps"];

pub fn write_metrics_csv<W: Write>(table: &MetricsTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| CliError::io("<csv>", std::io::Error::other(e));
    w.write_record(METRICS_HEADER).map_err(io_err)?;
    for r in &table.rows {
        w.write_record([
            r.n.to_string(),
            r.estimator.clone(),
            r.arm.clone(),
            r.metric.clone(),
            format!("{:?}", r.value),
            format!("{:?}", r.mc_se),
            r.reps.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))
}

pub fn metrics_json(table: &MetricsTable) -> Value {
    json!({
        "psi0": num(table.psi0),
        "bound": table.bound.map_or(Value::Null, num),
        "attempts": table.attempts,
        "failures": table.failures,
        "flagged": table.flagged,
        "failure_messages": table.failure_messages,
        "rows": table.rows.iter().map(|r| json!({
            "n": r.n,
            "estimator": r.estimator,
            "arm": r.arm,
            "metric": r.metric,
            "value": num(r.value),
            "mc_se": num(r.mc_se),
            "reps": r.reps,
        })).collect::<Vec<_>>(),
    })
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(items: &[(&str, &str)]) -> Vec<(String, ColumnRole)> {
        items
            .iter()
            .map(|(n, r)| (n.to_string(), ColumnRole::parse(r).unwrap()))
            .collect()
    }

    #[test]
    fn three_rows() {
        let d = read_csv(
            "L1,A,Y\n0.5,1,0\n-1,0,1\n2,1,1\n".as_bytes(),
            &schema(&[("L1", "baseline"), ("A", "treatment"), ("Y", "outcome")]),
        )
        .unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.values("L1").unwrap(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn schema_order_wins() {
        let d = read_csv(
            "Y,A,L1\n0,1,0.5\n".as_bytes(),
            &schema(&[("L1", "baseline"), ("A", "treatment"), ("Y", "outcome")]),
        )
        .unwrap();
        let names: Vec<_> = d.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["L1", "A", "Y"]);
    }

    #[test]
    fn missing_column_is_named() {
        let e = read_csv(
            "L1,Y\n1,0\n".as_bytes(),
            &schema(&[("L1", "baseline"), ("A", "treatment"), ("Y", "outcome")]),
        )
        .unwrap_err();
        assert!(e.to_string().contains("`A`"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn bad_cell_reports_location() {
        let e = read_csv(
            "L1,A,Y\n1,0,0\n1,x,0\n".as_bytes(),
            &schema(&[("L1", "baseline"), ("A", "treatment"), ("Y", "outcome")]),
        )
        .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("row 2") && msg.contains("`A`"), "{msg}");
    }

    #[test]
    fn two_phase_missing_cells() {
        let text = "S,L,A,Y,Delta\n0.1,1,1,1,1\n,0,0,0,0\n0.3,1,0,0,1\n,1,1,0,0\n0.5,0,1,1,1\n0.6,0,0,0,1\n";
        let sch = schema(&[
            ("S", "baseline"),
            ("L", "baseline"),
            ("A", "treatment"),
            ("Y", "outcome"),
            ("Delta", "sampling"),
        ]);
        let d = read_csv(text.as_bytes(), &sch).unwrap();
        assert!(d.column("S").unwrap().is_phase_two());
        assert!(!d.column("S").unwrap().is_valid(1));
        // Missingness outside Δ = 0 rows is an error.
        let bad = text.replace("0.3,1,0,0,1", ",1,0,0,1");
        assert!(read_csv(bad.as_bytes(), &sch).is_err());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let d = riesz_core::sim::draw_two_phase(200, 3, Default::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let sch: Vec<_> = d.schema().entries().to_vec();
        let back = read_csv(buf.as_slice(), &sch).unwrap();
        for (a, b) in d.columns().iter().zip(back.columns()) {
            assert_eq!(a.valid, b.valid);
            for i in 0..d.n() {
                if a.is_valid(i) {
                    assert_eq!(a.values[i].to_bits(), b.values[i].to_bits());
                }
            }
        }
    }
}

//! Verdicts, tables and their CSV / JSON serialization.
//!
//! JSON reports are a single document. CSV reports write the verdicts to the
//! requested path and every table to a sibling file `<stem>.<table>.csv`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::io_fmt_real as fmt_real;
use crate::stability::ext_real;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped(_) => "skipped",
        }
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    #[serde(flatten)]
    pub status: Status,
    /// Number of inequality evaluations behind the verdict.
    pub evaluations: usize,
    pub violations: usize,
    /// Smallest observed slack `rhs - lhs` (negative on failure).
    #[serde(with = "ext_real")]
    pub margin: f64,
    /// Inputs reproducing the first violation (or the tightest case).
    pub witness: serde_json::Value,
    /// Free-form diagnostics.
    pub details: serde_json::Value,
}

impl Verdict {
    pub fn skipped(check: impl Into<String>, reason: impl Into<String>) -> Self {
        Verdict {
            check: check.into(),
            status: Status::Skipped(reason.into()),
            evaluations: 0,
            violations: 0,
            margin: f64::INFINITY,
            witness: serde_json::Value::Null,
            details: serde_json::Value::Null,
        }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Accumulates inequality evaluations into a [`Verdict`].
#[derive(Debug)]
pub struct Tally {
    check: String,
    tol: f64,
    evaluations: usize,
    violations: usize,
    margin: f64,
    witness: serde_json::Value,
    tight: serde_json::Value,
}

impl Tally {
    pub fn new(check: impl Into<String>, tol: f64) -> Self {
        Tally {
            check: check.into(),
            tol,
            evaluations: 0,
            violations: 0,
            margin: f64::INFINITY,
            witness: serde_json::Value::Null,
            tight: serde_json::Value::Null,
        }
    }

    /// Records `lhs <= rhs + tol`. The witness closure runs only when needed.
    pub fn le(&mut self, lhs: f64, rhs: f64, witness: impl FnOnce() -> serde_json::Value) -> bool {
        self.evaluations += 1;
        let slack = rhs - lhs;
        let ok = slack >= -self.tol;
        if !ok {
            self.violations += 1;
        }
        if slack < self.margin || slack.is_nan() {
            self.margin = slack;
            let w = with_sides(witness(), lhs, rhs);
            if !ok && self.witness.is_null() {
                self.witness = w.clone();
            }
            self.tight = w;
        } else if !ok && self.witness.is_null() {
            self.witness = with_sides(witness(), lhs, rhs);
        }
        ok
    }

    /// Records a boolean property.
    pub fn holds(&mut self, ok: bool, witness: impl FnOnce() -> serde_json::Value) -> bool {
        self.le(if ok { 0.0 } else { 1.0 }, 0.0, witness)
    }

    pub fn merge(&mut self, other: Tally) {
        self.evaluations += other.evaluations;
        self.violations += other.violations;
        if self.witness.is_null() {
            self.witness = other.witness;
        }
        if other.margin < self.margin {
            self.margin = other.margin;
            self.tight = other.tight;
        }
    }

    pub fn violations(&self) -> usize {
        self.violations
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn finish(self) -> Verdict {
        let failed = self.violations > 0;
        Verdict {
            check: self.check,
            status: if failed { Status::Fail } else { Status::Pass },
            evaluations: self.evaluations,
            violations: self.violations,
            margin: self.margin,
            witness: if failed { self.witness } else { self.tight },
            details: serde_json::Value::Null,
        }
    }
}

fn with_sides(mut w: serde_json::Value, lhs: f64, rhs: f64) -> serde_json::Value {
    if let serde_json::Value::Object(map) = &mut w {
        map.insert("lhs".into(), real(lhs));
        map.insert("rhs".into(), real(rhs));
    }
    w
}

/// JSON value for a possibly infinite real.
pub fn real(v: f64) -> serde_json::Value {
    serde_json::to_value(Cell::Num(v)).expect("serializable")
}

/// A table entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(#[serde(with = "ext_real")] f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
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

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_real(*v),
            Cell::Text(t) => t.clone(),
        }
    }
}

/// Plot-ready table of measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Numeric column values (text entries become NaN).
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        Some(
            self.column(name)?
                .into_iter()
                .map(|c| match c {
                    Cell::Num(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Everything a command produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub params: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: impl Into<String>, params: serde_json::Value) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            params,
            verdicts: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn any_fail(&self) -> bool {
        self.verdicts.iter().any(Verdict::is_fail)
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const VERDICT_COLUMNS: [&str; 8] = [
    "check",
    "status",
    "reason",
    "evaluations",
    "violations",
    "margin",
    "witness",
    "details",
];

fn json_text(v: &serde_json::Value) -> String {
    if v.is_null() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_verdicts_csv<W: Write>(verdicts: &[Verdict], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VERDICT_COLUMNS)?;
    for v in verdicts {
        let reason = match &v.status {
            Status::Skipped(r) => r.as_str(),
            _ => "",
        };
        w.write_record([
            v.check.clone(),
            v.status.label().to_string(),
            reason.to_string(),
            v.evaluations.to_string(),
            v.violations.to_string(),
            fmt_real(v.margin),
            json_text(&v.witness),
            json_text(&v.details),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_table_csv<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Sibling path `<stem>.<table>.csv` of a CSV report.
pub fn table_path(path: &Path, table: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    path.with_file_name(format!("{stem}.{table}.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Writes `report` to `path`; returns every file written.
pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::Csv => {
            let mut written = vec![path.to_path_buf()];
            let mut w = create(path)?;
            write_verdicts_csv(&report.verdicts, &mut w)?;
            w.flush().map_err(|e| Error::io(path, e))?;
            for t in &report.tables {
                let tp = table_path(path, &t.name);
                let mut w = create(&tp)?;
                write_table_csv(t, &mut w)?;
                w.flush().map_err(|e| Error::io(&tp, e))?;
                written.push(tp);
            }
            Ok(written)
        }
    }
}

/// Renders the report for standard output.
pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_verdicts_csv(&report.verdicts, &mut buf)?;
            for t in &report.tables {
                writeln!(buf, "\n# table: {}", t.name).map_err(|e| Error::io("<stdout>", e))?;
                write_table_csv(t, &mut buf)?;
            }
            String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> Report {
        let mut r = Report::new("verify", serde_json::json!({"seed": 1}));
        let mut t = Tally::new("a", 1e-9);
        t.le(1.0, 2.0, || serde_json::json!({"q": [[0.0]]}));
        t.le(0.5, 0.5, || serde_json::json!({"q": [[1.0]]}));
        r.verdicts.push(t.finish());
        r.verdicts
            .push(Verdict::skipped("b", "no certified optimum"));
        let mut table = Table::new("counterexample", &["eps", "F", "excess", "ratio"]);
        table.push(vec![
            0.1.into(),
            0.187.into(),
            0.008.into(),
            f64::INFINITY.into(),
        ]);
        r.tables.push(table);
        r
    }

    #[test]
    fn tally_tracks_tightest_and_first_violation() {
        let mut t = Tally::new("x", 0.0);
        assert!(t.le(1.0, 3.0, || serde_json::json!({"i": 0})));
        assert!(!t.le(2.0, 1.0, || serde_json::json!({"i": 1})));
        assert!(!t.le(5.0, 1.0, || serde_json::json!({"i": 2})));
        let v = t.finish();
        assert!(v.is_fail());
        assert_eq!(v.violations, 2);
        assert_eq!(v.margin, -4.0);
        assert_eq!(v.witness["i"], 1);
    }

    #[test]
    fn json_round_trip() {
        let r = sample_report();
        let text = render_report(&r, ReportFormat::Json).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.contains("\"inf\""));
    }

    #[test]
    fn empty_csv_has_header_only() {
        let mut buf = Vec::new();
        write_verdicts_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim_end(),
            VERDICT_COLUMNS.join(",")
        );
    }

    #[test]
    fn csv_files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let files = emit_report(&sample_report(), &path, ReportFormat::Csv).unwrap();
        assert_eq!(files.len(), 2);
        let table = std::fs::read_to_string(&files[1]).unwrap();
        assert!(table.starts_with("eps,F,excess,ratio\n0.1,0.187,0.008,inf"));
        assert!(files[1].ends_with("out.counterexample.csv"));
        let verdicts = std::fs::read_to_string(&path).unwrap();
        assert!(verdicts.contains("b,skipped,no certified optimum"));
        let bad = dir.path().join("missing").join("x.json");
        assert!(matches!(
            emit_report(&sample_report(), &bad, ReportFormat::Json),
            Err(Error::Io { .. })
        ));
    }
}

//! Measure files.
//!
//! CSV: one row per atom, header `x_1,...,x_d[,w]`. A file whose first row is
//! numeric is read as headerless coordinates. Without a weight column the
//! atoms get uniform weights.
//!
//! JSON: `{"dim": d, "atoms": [{"x": [...], "w": ...}, ...]}`; `w` is either
//! present on every atom or on none.
//!
//! Reals are written in shortest round-trip decimal form, so `store` followed by
//! `load` reproduces a measure bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureFormat {
    Csv,
    Json,
}

impl MeasureFormat {
    /// Guess from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => MeasureFormat::Json,
            _ => MeasureFormat::Csv,
        }
    }
}

impl FromStr for MeasureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MeasureFormat::Csv),
            "json" => Ok(MeasureFormat::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown measure format {other:?}"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    atoms: Vec<AtomRecord>,
}

#[derive(Serialize, Deserialize)]
struct AtomRecord {
    x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<f64>,
}

pub fn load(path: &Path, format: MeasureFormat) -> Result<DiscreteMeasure> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        MeasureFormat::Csv => read_csv(reader),
        MeasureFormat::Json => read_json(reader),
    }
}

pub fn store(measure: &DiscreteMeasure, path: &Path, format: MeasureFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        MeasureFormat::Csv => write_csv(measure, &mut writer)?,
        MeasureFormat::Json => write_json(measure, &mut writer)?,
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_csv<W: Write>(measure: &DiscreteMeasure, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=measure.dim()).map(|i| format!("x_{i}")).collect();
    header.push("w".into());
    w.write_record(&header)?;
    for (p, weight) in measure.iter() {
        let mut row: Vec<String> = p.coords().iter().map(|&v| fmt_real(v)).collect();
        row.push(fmt_real(weight));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_json<W: Write>(measure: &DiscreteMeasure, writer: W) -> Result<()> {
    let file = MeasureFile {
        dim: measure.dim(),
        atoms: measure
            .iter()
            .map(|(p, w)| AtomRecord {
                x: p.coords().to_vec(),
                w: Some(w),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

fn malformed(
    format: &'static str,
    location: impl Into<String>,
    message: impl Into<String>,
) -> Error {
    Error::Malformed {
        format,
        location: location.into(),
        message: message.into(),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let first = records
        .next()
        .ok_or_else(|| malformed("csv", "line 1", "file is empty"))??;

    let is_numeric = first.iter().all(|f| f.parse::<f64>().is_ok());
    let (weight_col, width, mut rows) = if is_numeric {
        (None, first.len(), vec![(1usize, first)])
    } else {
        let weight_col = first
            .iter()
            .position(|h| h.eq_ignore_ascii_case("w") || h.eq_ignore_ascii_case("weight"));
        (weight_col, first.len(), Vec::new())
    };
    for (i, rec) in records.enumerate() {
        rows.push((i + 2, rec?));
    }

    let mut points = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != width {
            return Err(malformed(
                "csv",
                format!("line {line}"),
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let mut coords = Vec::with_capacity(width);
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                malformed(
                    "csv",
                    format!("line {line}, column {}", col + 1),
                    format!("not a real: {field:?}"),
                )
            })?;
            if Some(col) == weight_col {
                weights.push(v);
            } else {
                coords.push(v);
            }
        }
        let point = Point::new(coords)
            .map_err(|e| malformed("csv", format!("line {line}"), e.to_string()))?;
        points.push(point);
    }
    if points.is_empty() {
        return Err(malformed("csv", "body", "no atoms"));
    }
    match weight_col {
        Some(_) => DiscreteMeasure::new(points, weights),
        None => DiscreteMeasure::from_samples(points),
    }
}

pub fn read_json<R: Read>(reader: R) -> Result<DiscreteMeasure> {
    let file: MeasureFile = serde_json::from_reader(reader)?;
    if file.atoms.is_empty() {
        return Err(malformed("json", "atoms", "no atoms"));
    }
    let weighted = file.atoms.iter().filter(|a| a.w.is_some()).count();
    if weighted != 0 && weighted != file.atoms.len() {
        return Err(malformed(
            "json",
            "atoms",
            "weights must be given for all atoms or none",
        ));
    }
    let mut points = Vec::with_capacity(file.atoms.len());
    let mut weights = Vec::with_capacity(file.atoms.len());
    for (i, atom) in file.atoms.into_iter().enumerate() {
        if atom.x.len() != file.dim {
            return Err(malformed(
                "json",
                format!("atoms[{i}]"),
                format!(
                    "dimension {} differs from declared dim {}",
                    atom.x.len(),
                    file.dim
                ),
            ));
        }
        points.push(Point::new(atom.x)?);
        if let Some(w) = atom.w {
            weights.push(w);
        }
    }
    if weighted == 0 {
        DiscreteMeasure::from_samples(points)
    } else {
        DiscreteMeasure::new(points, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn measure(rows: &[(&[f64], f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(
            rows.iter()
                .map(|(p, _)| Point::new(p.to_vec()).unwrap())
                .collect(),
            rows.iter().map(|(_, w)| *w).collect(),
        )
        .unwrap()
    }

    #[test]
    fn csv_without_weights_is_uniform() {
        let m = read_csv("x_1,x_2\n0,0\n1,0\n0,1\n1,1\n".as_bytes()).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.weights().iter().all(|&w| w == 0.25));
        let headerless = read_csv("0,0\n1,0\n".as_bytes()).unwrap();
        assert_eq!(headerless.len(), 2);
        assert_eq!(headerless.dim(), 2);
    }

    #[test]
    fn csv_rejects_unnormalized_weights() {
        let err = read_csv("x_1,w\n0,0.5\n1,0.3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }), "{err}");
    }

    #[test]
    fn csv_reports_bad_rows() {
        let err = read_csv("x_1,w\n0,0.5\nabc,0.5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("x_1,x_2\n".as_bytes()).is_err());
    }

    #[test]
    fn json_weights_all_or_none() {
        let m = read_json(r#"{"dim":1,"atoms":[{"x":[0]},{"x":[2]}]}"#.as_bytes()).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!(
            read_json(r#"{"dim":1,"atoms":[{"x":[0],"w":1.0},{"x":[2]}]}"#.as_bytes()).is_err()
        );
        assert!(read_json(r#"{"dim":2,"atoms":[{"x":[0],"w":1.0}]}"#.as_bytes()).is_err());
        assert!(matches!(
            read_json(r#"{"dim":1,"atoms":[{"x":[0],"w":0.8}]}"#.as_bytes()),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn store_then_load_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = measure(&[
            (&[0.1, -3.0], 0.1),
            (&[1e-300, 2.5], 0.6),
            (&[7.0, 7.0], 0.3),
        ]);
        for fmt in [MeasureFormat::Csv, MeasureFormat::Json] {
            let path = dir.path().join(format!("m.{fmt:?}"));
            store(&m, &path, fmt).unwrap();
            assert_eq!(load(&path, fmt).unwrap(), m);
        }
        assert!(matches!(
            load(&dir.path().join("missing.csv"), MeasureFormat::Csv),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            raw in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 2), 0.01f64..1.0), 1..12),
            json in any::<bool>(),
        ) {
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            let points = raw.iter().map(|(p, _)| Point::new(p.clone()).unwrap()).collect();
            let m = DiscreteMeasure::from_masses(points, raw.iter().map(|(_, w)| w / total).collect()).unwrap();
            let mut buf = Vec::new();
            let back = if json {
                write_json(&m, &mut buf).unwrap();
                read_json(buf.as_slice()).unwrap()
            } else {
                write_csv(&m, &mut buf).unwrap();
                read_csv(buf.as_slice()).unwrap()
            };
            prop_assert_eq!(back, m);
        }
    }
}

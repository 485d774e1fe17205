//! File formats: measurement CSV, coefficient CSV, estimate CSV, JSON
//! reports and PGM grid images.
//!
//! Measurement files have the header `a_1,...,a_d,b` with an optional
//! trailing `label` column holding 1-based class indices.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{MlrError, Result};
use crate::model::{Dataset, EstimateField, Measurement};

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| MlrError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| MlrError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> MlrError {
    MlrError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> MlrError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, e.to_string())
}

fn parse_value(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

/// Reads a measurement CSV; labels are attached when the `label` column is
/// present.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_label = names.last() == Some(&"label");
    let value_cols = names.len() - usize::from(has_label);
    if value_cols < 2 || names[value_cols - 1] != "b" {
        return Err(parse_err(path, 1, "header must be a_1,...,a_d,b[,label]"));
    }
    let d = value_cols - 1;
    for (c, name) in names[..d].iter().enumerate() {
        if *name != format!("a_{}", c + 1) {
            return Err(parse_err(
                path,
                1,
                format!("expected column a_{} but found {name:?}", c + 1),
            ));
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        let a = (0..d)
            .map(|c| parse_value(path, line, &record[c]))
            .collect::<Result<Vec<_>>>()?;
        let b = parse_value(path, line, &record[d])?;
        let m = Measurement::new(a, b).map_err(|e| parse_err(path, line, e.to_string()))?;
        rows.push(m);
        if has_label {
            let l: usize = record[d + 1]
                .parse()
                .map_err(|_| parse_err(path, line, "label must be a positive integer"))?;
            if l == 0 {
                return Err(parse_err(path, line, "labels are 1-based"));
            }
            labels.push(l - 1);
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let ds = Dataset::new(rows)?;
    if has_label {
        ds.with_labels(labels)
    } else {
        Ok(ds)
    }
}

/// Writes a measurement CSV using shortest round-trip float formatting.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let d = dataset.dim();
    let mut header: Vec<String> = (1..=d).map(|c| format!("a_{c}")).collect();
    header.push("b".into());
    if dataset.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, r) in dataset.rows().iter().enumerate() {
        let mut rec: Vec<String> = r.a.iter().map(|x| x.to_string()).collect();
        rec.push(r.b.to_string());
        if let Some(l) = dataset.labels() {
            rec.push((l[i] + 1).to_string());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| MlrError::io(path, e))
}

/// Reads `k` coefficient vectors from a CSV with header `beta_1,...,beta_d`.
pub fn load_betas(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let d = headers.len();
    for (c, name) in headers.iter().enumerate() {
        if name != format!("beta_{}", c + 1) {
            return Err(parse_err(path, 1, "header must be beta_1,...,beta_d"));
        }
    }
    let mut betas = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != d {
            return Err(parse_err(path, line, "inconsistent row width"));
        }
        betas.push(
            record
                .iter()
                .map(|f| parse_value(path, line, f))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if betas.is_empty() {
        return Err(parse_err(path, 2, "no coefficient rows"));
    }
    Ok(betas)
}

pub fn write_betas(betas: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let d = betas.first().map_or(0, Vec::len);
    w.write_record((1..=d).map(|c| format!("beta_{c}")))
        .map_err(|e| csv_err(path, e))?;
    for b in betas {
        w.write_record(b.iter().map(|x| x.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| MlrError::io(path, e))
}

/// Per-point estimates `z_1..z_d`, with an optional 1-based `cluster` column.
pub fn write_estimates(
    z: &EstimateField,
    clusters: Option<&[usize]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (1..=z.dim()).map(|c| format!("z_{c}")).collect();
    if clusters.is_some() {
        header.push("cluster".into());
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in z.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        if let Some(c) = clusters {
            rec.push((c[i] + 1).to_string());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| MlrError::io(path, e))
}

/// Single `label` column with 1-based classes.
pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["label"]).map_err(|e| csv_err(path, e))?;
    for l in labels {
        w.write_record([(l + 1).to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| MlrError::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| MlrError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| MlrError::io(path, e))?;
    w.flush().map_err(|e| MlrError::io(path, e))
}

/// Plain-text (P2) grayscale image, one pixel per cell, value
/// `round(255 * fraction)`. `rows[r][c]` becomes pixel row `r`.
pub fn pgm_string(rows: &[Vec<f64>]) -> String {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let mut s = format!("P2\n{width} {height}\n255\n");
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .map(|f| ((255.0 * f.clamp(0.0, 1.0)).round() as u8).to_string())
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_pgm(rows: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pgm_string(rows)).map_err(|e| MlrError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_plain_and_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "x.csv", "a_1,a_2,b\n1,0,2\n0.5,1,-1\n");
        let ds = load_csv(&p).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));
        assert!(ds.labels().is_none());
        let p = write_tmp(&dir, "y.csv", "a_1,a_2,b,label\n1,0,2,2\n0.5,1,-1,1\n");
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.labels().unwrap(), &[1, 0]);
    }

    #[test]
    fn zero_row_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "z.csv", "a_1,a_2,b\n1,0,2\n0,0,1\n");
        match load_csv(&p) {
            Err(MlrError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("zero"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = write_tmp(&dir, "h.csv", "x,y,b\n1,0,2\n");
        assert!(matches!(
            load_csv(&bad_header),
            Err(MlrError::Parse { line: 1, .. })
        ));
        let nan = write_tmp(&dir, "n.csv", "a_1,b\nNaN,2\n");
        assert!(matches!(
            load_csv(&nan),
            Err(MlrError::Parse { line: 2, .. })
        ));
        let word = write_tmp(&dir, "w.csv", "a_1,b\n1,two\n");
        assert!(matches!(
            load_csv(&word),
            Err(MlrError::Parse { line: 2, .. })
        ));
        let ragged = write_tmp(&dir, "r.csv", "a_1,a_2,b\n1,2,3\n1,2\n");
        assert!(matches!(load_csv(&ragged), Err(MlrError::Parse { .. })));
        let zero_label = write_tmp(&dir, "l.csv", "a_1,b,label\n1,2,0\n");
        assert!(load_csv(&zero_label).is_err());
        assert!(matches!(
            load_csv(dir.path().join("missing.csv")),
            Err(MlrError::Io { .. })
        ));
    }

    #[test]
    fn betas_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let betas = vec![vec![0.1, -2.5e-7], vec![1.0 / 3.0, 4.0]];
        write_betas(&betas, &p).unwrap();
        assert_eq!(load_betas(&p).unwrap(), betas);
    }

    #[test]
    fn pgm_layout() {
        let s = pgm_string(&[vec![1.0, 0.0, 0.5], vec![0.2, 0.9, 1.0]]);
        assert_eq!(s, "P2\n3 2\n255\n255 0 128\n51 230 255\n");
    }
}

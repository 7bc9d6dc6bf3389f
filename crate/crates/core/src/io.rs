//! File formats shared by every stage of the pipeline.
//!
//! Matrices are exchanged either as CSV with a `# rows cols` header line, or
//! as JSON `{"rows": r, "cols": c, "data": [...]}` in row-major order. Doubles
//! are written with Rust's shortest round-trip formatting, so a write followed
//! by a read reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)])
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixJson> for DMatrix<f64> {
    type Error = Error;

    fn try_from(m: MatrixJson) -> Result<Self> {
        if m.data.len() != m.rows * m.cols {
            return Err(Error::Parse(format!(
                "matrix declares {}x{} but carries {} values",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

/// `#[serde(with = ...)]` adapter writing a `DMatrix` in the row-major schema.
pub mod matrix_serde {
    use super::MatrixJson;
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let m = MatrixJson::deserialize(d)?;
        DMatrix::try_from(m).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    matrix_to_csv_tagged(m, None)
}

/// Like [`matrix_to_csv`], with `key=value` tokens appended to the header.
pub fn matrix_to_csv_tagged(m: &DMatrix<f64>, tag: Option<&str>) -> String {
    let mut out = format!("# {} {}", m.nrows(), m.ncols());
    if let Some(t) = tag {
        out.push(' ');
        out.push_str(t);
    }
    out.push('\n');
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(r, c)]);
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("missing '# rows cols' header".into()))?
        .split_whitespace()
        .filter(|t| !t.contains('='))
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad header: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse("header must be '# rows cols'".into()));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            let v = tok
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {i}: {e}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!("row {i} has {} values, expected {cols}", data.len() - before)));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!("expected {rows} rows, found {}", data.len() / cols.max(1))));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

/// Reads a table written by [`write_table_csv`], skipping `#` lines.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty table".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            let row = l
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Parse("row width differs from header".into()));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_json(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, serde_json::to_string(&MatrixJson::from(m))?)?;
    Ok(())
}

pub fn read_matrix_json(path: &Path) -> Result<DMatrix<f64>> {
    let m: MatrixJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    DMatrix::try_from(m)
}

/// Reads a matrix file, choosing the format from the extension.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_matrix_json(path),
        _ => read_matrix_csv(path),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes a table with a header row; every row must match the header width.
/// A `tag` becomes a leading `# tag` line.
pub fn write_table_csv(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
    tag: Option<&str>,
) -> Result<()> {
    let mut out = tag.map(|t| format!("# {t}\n")).unwrap_or_default();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_and_json_round_trip_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 36),
        ) {
            let m = DMatrix::from_fn(rows, cols, |r, c| seed[r * 6 + c]);
            let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            let json = serde_json::to_string(&MatrixJson::from(&m)).unwrap();
            let back: DMatrix<f64> = DMatrix::try_from(serde_json::from_str::<MatrixJson>(&json).unwrap()).unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn csv_layout_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 0.1]);
        assert_eq!(matrix_to_csv(&m), "# 2 3\n1,2,3\n4,5,0.1\n");
        let j = serde_json::to_string(&MatrixJson::from(&m)).unwrap();
        assert_eq!(j, r#"{"rows":2,"cols":3,"data":[1.0,2.0,3.0,4.0,5.0,0.1]}"#);
    }

    #[test]
    fn tags_do_not_disturb_parsing() {
        let m = DMatrix::from_row_slice(1, 2, &[0.5, -3.0]);
        let text = matrix_to_csv_tagged(&m, Some("spec_hash=ab12"));
        assert!(text.starts_with("# 1 2 spec_hash=ab12\n"));
        assert_eq!(matrix_from_csv(&text).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let header = vec!["a".to_string(), "b".to_string()];
        write_table_csv(&p, &header, vec![vec![1.0, 0.1], vec![2.0, 1e-300]], Some("spec_hash=x")).unwrap();
        let (h, rows) = read_table_csv(&p).unwrap();
        assert_eq!(h, header);
        assert_eq!(rows, vec![vec![1.0, 0.1], vec![2.0, 1e-300]]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(matrix_from_csv("1,2\n").is_err());
        assert!(matrix_from_csv("# 2 2\n1,2\n3\n").is_err());
        assert!(matrix_from_csv("# 2 2\n1,2\n").is_err());
        let bad = MatrixJson { rows: 2, cols: 2, data: vec![1.0] };
        assert!(DMatrix::try_from(bad).is_err());
    }
}

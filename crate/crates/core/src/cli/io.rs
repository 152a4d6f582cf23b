//! Plain-text dataset formats.
//!
//! * dense CSV: one record per line, comma-separated numbers; a first line
//!   that does not parse as numbers is taken as a header;
//! * sparse text: `label idx:val idx:val …` with 1-based, increasing indices;
//! * text lines: one record per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ops::{DenseMatrix, ImageTensor, SparseRows};
use crate::value::{FittedModel, Value};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn origin(path: &Path) -> String {
    path.display().to_string()
}

pub fn parse_dense_csv(text: &str, origin: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(Error::parse(
                            origin,
                            i + 1,
                            format!("expected {} fields, found {}", first.len(), row.len()),
                        ));
                    }
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::parse(origin, i + 1, "non-finite value"));
                }
                rows.push(row);
            }
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::parse(origin, i + 1, format!("bad number: {e}"))),
        }
    }
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn load_dense_csv(path: &Path) -> Result<DenseMatrix> {
    parse_dense_csv(&read(path)?, &origin(path))
}

pub fn write_dense_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses sparse text into per-record labels and rows of dimension `dim`;
/// `None` infers the dimension from the largest index.
pub fn parse_sparse_text(
    text: &str,
    origin: &str,
    dim: Option<usize>,
) -> Result<(Vec<f64>, SparseRows)> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut max_index = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(origin, i + 1, msg);
        let mut fields = line.split_whitespace();
        let label = fields.next().expect("non-empty line");
        labels.push(
            label
                .parse::<f64>()
                .map_err(|_| err(format!("bad label {label:?}")))?,
        );
        let mut row = Vec::new();
        for f in fields {
            let (idx, val) = f
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, found {f:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index {idx:?}")))?;
            let val: f64 = val.parse().map_err(|_| err(format!("bad value {val:?}")))?;
            if idx == 0 {
                return Err(err("indices are 1-based".into()));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(err(format!("index {idx} exceeds dimension {d}")));
                }
            }
            if row.last().is_some_and(|&(prev, _)| prev >= idx - 1) {
                return Err(err("indices must increase".into()));
            }
            max_index = max_index.max(idx);
            if val != 0.0 {
                row.push((idx - 1, val));
            }
        }
        rows.push(row);
    }
    let rows = SparseRows::new(dim.unwrap_or(max_index), rows)?;
    Ok((labels, rows))
}

pub fn load_sparse_text(path: &Path, dim: Option<usize>) -> Result<(Vec<f64>, SparseRows)> {
    parse_sparse_text(&read(path)?, &origin(path), dim)
}

pub fn write_sparse_text(labels: &[f64], rows: &SparseRows) -> String {
    let mut out = String::new();
    for (i, row) in rows.iter_rows().enumerate() {
        write!(out, "{}", labels.get(i).copied().unwrap_or(0.0)).unwrap();
        for &(j, v) in row {
            write!(out, " {}:{v}", j + 1).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn load_text_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read(path)?.lines().map(str::to_string).collect())
}

/// Reads images stored one per CSV row, channel-minor.
pub fn load_images_csv(path: &Path, side: usize, channels: usize) -> Result<Vec<ImageTensor>> {
    let m = load_dense_csv(path)?;
    if m.rows() > 0 && m.cols() != side * side * channels {
        return Err(Error::parse(
            origin(path),
            1,
            format!(
                "expected {} values per image, found {}",
                side * side * channels,
                m.cols()
            ),
        ));
    }
    (0..m.rows())
        .map(|i| ImageTensor::new(side, channels, m.row(i).to_vec()))
        .collect()
}

/// Text rendering of any value: CSV for dense data, sparse text for sparse
/// rows, one line per record otherwise.
pub fn render_value(v: &Value) -> String {
    match v {
        Value::Dense(m) | Value::Labels(m) => write_dense_csv(m),
        Value::Sparse(s) => write_sparse_text(&[], s),
        Value::Text(lines) => lines.iter().map(|l| format!("{l}\n")).collect(),
        Value::Tokens(t) => t.iter().map(|r| format!("{}\n", r.join(" "))).collect(),
        Value::Images(imgs) => imgs
            .iter()
            .map(|img| {
                format!(
                    "{}\n",
                    img.values()
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .collect(),
        Value::Model(FittedModel::Vocabulary(v)) => {
            v.terms().iter().map(|t| format!("{t}\n")).collect()
        }
        Value::Model(FittedModel::Linear(m)) => write_dense_csv(&m.weights),
        Value::Model(FittedModel::Pca(m)) => write_dense_csv(&m.components),
    }
}

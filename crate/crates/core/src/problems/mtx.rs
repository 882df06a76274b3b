//! Matrix Market reader/writer: `array` format for dense data, `coordinate`
//! for sparse, `real general` only.
//!
//! Values are written in shortest round-trip form, so a write/read cycle
//! reproduces every entry bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::kernels::BlockMatrix;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    }
}

pub fn write_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(24 * m.len() + 64);
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        let _ = writeln!(out, "{v:e}");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_dense(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn write_sparse(path: &Path, m: &CscMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(40 * m.nnz() + 64);
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz());
    for (j, col) in m.col_iter().enumerate() {
        for (&i, v) in col.row_indices().iter().zip(col.values()) {
            let _ = writeln!(out, "{} {} {v:e}", i + 1, j + 1);
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_block(path: &Path, b: &BlockMatrix) -> Result<()> {
    match b {
        BlockMatrix::Dense(m) => write_dense(path, m),
        BlockMatrix::Sparse(m) => write_sparse(path, m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

/// Data lines with their 1-based line numbers; comments and blanks dropped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn parse_header(path: &Path, text: &str) -> Result<Layout> {
    let first = text
        .lines()
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let words: Vec<String> = first
        .split_whitespace()
        .map(|w| w.to_ascii_lowercase())
        .collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(path, 1, "expected `%%MatrixMarket matrix <layout> real general`"));
    }
    let layout = match words[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(parse_err(path, 1, format!("unsupported layout `{other}`"))),
    };
    if words[3] != "real" && words[3] != "double" && words[3] != "integer" {
        return Err(parse_err(path, 1, format!("unsupported field `{}`", words[3])));
    }
    if words[4] != "general" {
        return Err(parse_err(path, 1, format!("unsupported symmetry `{}`", words[4])));
    }
    Ok(layout)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("bad {what} `{tok}`")))
}

pub fn read_block(path: &Path) -> Result<BlockMatrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let layout = parse_header(path, &text)?;
    let mut lines = data_lines(&text);
    let (ln, size) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let nrows: usize = parse_num(path, ln, toks.next(), "row count")?;
    let ncols: usize = parse_num(path, ln, toks.next(), "column count")?;
    match layout {
        Layout::Array => {
            let mut values = Vec::with_capacity(nrows * ncols);
            for (ln, l) in lines {
                values.push(parse_num::<f64>(path, ln, Some(l), "value")?);
            }
            if values.len() != nrows * ncols {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected {} values, found {}", nrows * ncols, values.len()),
                ));
            }
            Ok(BlockMatrix::Dense(DMatrix::from_vec(nrows, ncols, values)))
        }
        Layout::Coordinate => {
            let nnz: usize = parse_num(path, ln, toks.next(), "entry count")?;
            let mut coo = CooMatrix::new(nrows, ncols);
            let mut seen = 0;
            for (ln, l) in lines {
                let mut t = l.split_whitespace();
                let i: usize = parse_num(path, ln, t.next(), "row index")?;
                let j: usize = parse_num(path, ln, t.next(), "column index")?;
                let v: f64 = parse_num(path, ln, t.next(), "value")?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(parse_err(path, ln, format!("index ({i}, {j}) out of range")));
                }
                coo.push(i - 1, j - 1, v);
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(path, ln, format!("expected {nnz} entries, found {seen}")));
            }
            Ok(BlockMatrix::Sparse(CscMatrix::from(&coo)))
        }
    }
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_block(path)?.to_dense();
    if m.ncols() != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("expected a column vector, found {} columns", m.ncols()),
        });
    }
    Ok(m.column(0).into_owned())
}

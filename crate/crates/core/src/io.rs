//! Plain-text matrix files: a `rows cols` header line, then one row per line
//! of whitespace-separated reals written with 17 significant digits.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::fmt::Write as _;
use std::path::Path;

pub fn format_matrix(a: &Matrix) -> String {
    let mut out = format!("{} {}\n", a.rows(), a.cols());
    for r in 0..a.rows() {
        let row: Vec<String> = a.row(r).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        let tok = tokens.next().ok_or_else(|| Error::Format(format!("missing {what} in header")))?;
        tok.parse().map_err(|_| Error::Format(format!("bad {what} '{tok}'")))
    };
    let (rows, cols) = (dim("row count")?, dim("column count")?);
    let data = tokens
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number '{t}'"))))
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != rows * cols {
        return Err(Error::Format(format!("header says {rows}x{cols} but found {} values", data.len())));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, a: &Matrix) -> Result<()> {
    std::fs::write(path, format_matrix(a)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a single-row or single-column matrix as a vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let a = read_matrix(path)?;
    if a.rows() != 1 && a.cols() != 1 {
        return Err(Error::Format(format!("{}: expected a vector, found {}x{}", path.display(), a.rows(), a.cols())));
    }
    Ok(a.as_slice().to_vec())
}

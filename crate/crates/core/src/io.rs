//! Plain-text file formats.
//!
//! * Matrices: `d` lines of `N` comma-separated numbers, no header unless
//!   requested. Values are written with 17 significant digits so a save/load
//!   round trip is exact.
//! * Labels: one non-negative integer per line.
//! * Self-representations: `i,j,v` header followed by one triplet per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{DataMatrix, Labels, SelfRepresentation};
use crate::error::{Error, Result};
use crate::Real;

/// Formats a value with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_field(path: &Path, row: usize, col: usize, token: &str) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        token: token.trim().to_string(),
    })
}

/// Parses CSV text into a matrix; row/column indices in errors are 1-based
/// line and field numbers of the file.
pub fn parse_csv_matrix<T: Real>(text: &str, skip_header: bool, path: &Path) -> Result<DataMatrix<T>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if skip_header && lineno == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1;
        let fields = line
            .split(',')
            .enumerate()
            .map(|(c, tok)| parse_field(path, row, c + 1, tok))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != fields.len() {
                return Err(Error::RaggedRows {
                    path: path.to_path_buf(),
                    row,
                    expected: first.len(),
                    found: fields.len(),
                });
            }
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::BadDimensions(format!("{}: no data rows", path.display())));
    }
    let (d, n) = (rows.len(), rows[0].len());
    DataMatrix::new(DMatrix::from_fn(d, n, |i, j| T::of(rows[i][j])))
}

pub fn load_csv<T: Real>(path: impl AsRef<Path>, skip_header: bool) -> Result<DataMatrix<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(&text, skip_header, path)
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_matrix<T: Real>(w: &mut dyn Write, m: &DMatrix<T>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| format_value(m[(i, j)].as_f64())).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn save_csv<T: Real>(x: &DataMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |w| write_matrix(w, x.matrix()))
}

pub fn save_labels(labels: &Labels, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |w| {
        for a in labels.assignments() {
            writeln!(w, "{a}")?;
        }
        Ok(())
    })
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        raw.push(tok.parse::<usize>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row: lineno + 1,
            col: 1,
            token: tok.to_string(),
        })?);
    }
    let k = raw.iter().max().map_or(0, |m| m + 1);
    Labels::new(raw, k)
}

pub const SPARSE_HEADER: &str = "i,j,v";

pub fn save_sparse<T: Real>(c: &SelfRepresentation<T>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |w| {
        writeln!(w, "{SPARSE_HEADER}")?;
        for (i, j, v) in c.triplets() {
            writeln!(w, "{i},{j},{}", format_value(v.as_f64()))?;
        }
        Ok(())
    })
}

/// Reads a triplet file written by [`save_sparse`]; `n` is the number of points.
pub fn load_sparse<T: Real>(path: impl AsRef<Path>, n: usize) -> Result<SelfRepresentation<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut triplets = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::RaggedRows {
                path: path.to_path_buf(),
                row,
                expected: 3,
                found: fields.len(),
            });
        }
        let idx = |c: usize| {
            fields[c].trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                col: c + 1,
                token: fields[c].trim().to_string(),
            })
        };
        let v = parse_field(path, row, 3, fields[2])?;
        triplets.push((idx(0)?, idx(1)?, T::of(v)));
    }
    SelfRepresentation::from_triplets(n, &triplets)
}

//! Matrix Market exchange format, real-valued only.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{GsvdError, Result};
use crate::matrix::{DenseMatrix, SparseMatrix};

pub const COORDINATE_HEADER: &str = "%%MatrixMarket matrix coordinate real general";
pub const ARRAY_HEADER: &str = "%%MatrixMarket matrix array real general";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Parser<'a> {
    path: &'a Path,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> GsvdError {
        GsvdError::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn header(&self, line: &str) -> Result<(Layout, Symmetry)> {
        let toks: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
        if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
            return Err(self.err(1, "malformed Matrix Market header"));
        }
        let layout = match toks[2].as_str() {
            "coordinate" => Layout::Coordinate,
            "array" => Layout::Array,
            other => return Err(self.err(1, format!("unknown format '{other}'"))),
        };
        match toks[3].as_str() {
            "real" | "double" => {}
            other => return Err(self.err(1, format!("unsupported field '{other}' (only real)"))),
        }
        let sym = match toks[4].as_str() {
            "general" => Symmetry::General,
            "symmetric" => Symmetry::Symmetric,
            other => return Err(self.err(1, format!("unsupported symmetry '{other}'"))),
        };
        Ok((layout, sym))
    }

    fn number<T: std::str::FromStr>(&self, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
        tok.ok_or_else(|| self.err(line, format!("missing {what}")))?
            .parse()
            .map_err(|_| self.err(line, format!("invalid {what}")))
    }
}

/// Reads a coordinate or array file. Symmetric files are expanded to full
/// storage and duplicate coordinates are summed.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GsvdError::io(path, e))?;
    let p = Parser { path };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| p.err(1, "empty file"))?;
    let (layout, sym) = p.header(first)?;

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| p.err(1, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let nrows: usize = p.number(size_line, toks.next(), "row count")?;
    let ncols: usize = p.number(size_line, toks.next(), "column count")?;
    if sym == Symmetry::Symmetric && nrows != ncols {
        return Err(p.err(size_line, "symmetric matrix must be square"));
    }

    let mut trips = Vec::new();
    let mut push = |i: usize, j: usize, v: f64| {
        trips.push((i, j, v));
        if sym == Symmetry::Symmetric && i != j {
            trips.push((j, i, v));
        }
    };

    match layout {
        Layout::Coordinate => {
            let nnz: usize = p.number(size_line, toks.next(), "entry count")?;
            let mut seen = 0;
            for (ln, l) in data {
                let mut t = l.split_whitespace();
                let i: usize = p.number(ln, t.next(), "row index")?;
                let j: usize = p.number(ln, t.next(), "column index")?;
                let v: f64 = p.number(ln, t.next(), "value")?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(p.err(ln, format!("index ({i}, {j}) out of range")));
                }
                if !v.is_finite() {
                    return Err(p.err(ln, "non-finite value"));
                }
                if sym == Symmetry::Symmetric && j > i {
                    return Err(p.err(ln, "symmetric file must list the lower triangle only"));
                }
                push(i - 1, j - 1, v);
                seen += 1;
            }
            if seen != nnz {
                return Err(p.err(size_line, format!("expected {nnz} entries, found {seen}")));
            }
        }
        Layout::Array => {
            // column-major; symmetric arrays list the lower triangle
            let mut slots = (0..ncols).flat_map(|j| {
                let start = if sym == Symmetry::Symmetric { j } else { 0 };
                (start..nrows).map(move |i| (i, j))
            });
            for (ln, l) in data {
                for tok in l.split_whitespace() {
                    let v: f64 = p.number(ln, Some(tok), "value")?;
                    if !v.is_finite() {
                        return Err(p.err(ln, "non-finite value"));
                    }
                    let (i, j) = slots.next().ok_or_else(|| p.err(ln, "too many values"))?;
                    if v != 0.0 {
                        push(i, j, v);
                    }
                }
            }
            if slots.next().is_some() {
                return Err(p.err(size_line, "too few values for array"));
            }
        }
    }
    SparseMatrix::from_triplets(nrows, ncols, trips).map_err(|e| p.err(0, e.to_string()))
}

/// Coordinate format, general symmetry, 17 significant digits.
pub fn write_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{COORDINATE_HEADER}")?;
        writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
        for (i, j, v) in a.triplets() {
            writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
        w.flush()
    };
    write().map_err(|e| GsvdError::io(path, e))
}

/// Dense array format (column-major values, one per line).
pub fn write_array(a: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{ARRAY_HEADER}")?;
        writeln!(w, "{} {}", a.nrows(), a.ncols())?;
        for v in a.as_slice() {
            writeln!(w, "{v:.16e}")?;
        }
        w.flush()
    };
    write().map_err(|e| GsvdError::io(path, e))
}

/// Reads any supported file into dense storage.
pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    Ok(read_matrix_market(path)?.to_dense())
}

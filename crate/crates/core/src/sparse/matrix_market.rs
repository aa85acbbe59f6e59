//! Matrix Market coordinate format (`real`, `general` or `symmetric`).
//!
//! Symmetric matrices are written as their lower triangle. Values use 17
//! significant digits so a write/read cycle is lossless.

use std::fmt::Write as _;

use super::{SparseMatrix, SparseSymMatrix};
use crate::error::{Error, Result};

pub fn write_symmetric(q: &SparseSymMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    let _ = writeln!(out, "{} {} {}", q.n(), q.n(), q.nnz_lower());
    for (i, j, v) in q.lower_triplets() {
        let _ = writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v);
    }
    out
}

pub fn write_general(m: &SparseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz());
    for (i, j, v) in m.triplets() {
        let _ = writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v);
    }
    out
}

struct Parsed {
    symmetric: bool,
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

fn parse(text: &str) -> Result<Parsed> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::parse(1, "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" {
        return Err(Error::parse(
            1,
            "only 'coordinate real' matrices are supported",
        ));
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(Error::parse(1, format!("unsupported symmetry '{other}'"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if size.is_none() {
            if fields.len() != 3 {
                return Err(Error::parse(lineno, "expected 'rows cols nnz'"));
            }
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::parse(lineno, format!("{s}: {e}")))
            };
            size = Some((
                parse_usize(fields[0])?,
                parse_usize(fields[1])?,
                parse_usize(fields[2])?,
            ));
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::parse(lineno, "expected 'row col value'"));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("row index: {e}")))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("column index: {e}")))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("value: {e}")))?;
        if i == 0 || j == 0 {
            return Err(Error::parse(lineno, "indices are 1-based"));
        }
        entries.push((i - 1, j - 1, v));
    }
    let (nrows, ncols, nnz) = size.ok_or_else(|| Error::parse(1, "missing size line"))?;
    if entries.len() != nnz {
        return Err(Error::parse(
            1,
            format!("header declares {nnz} entries, found {}", entries.len()),
        ));
    }
    Ok(Parsed {
        symmetric,
        nrows,
        ncols,
        entries,
    })
}

pub fn read_symmetric(text: &str) -> Result<SparseSymMatrix> {
    let p = parse(text)?;
    if p.nrows != p.ncols {
        return Err(Error::invalid("symmetric matrix must be square"));
    }
    if p.symmetric {
        SparseSymMatrix::from_triplets(p.nrows, p.entries)
    } else {
        let m = SparseMatrix::from_triplets(p.nrows, p.ncols, p.entries)?;
        SparseSymMatrix::from_lower_of(&m)
    }
}

pub fn read_general(text: &str) -> Result<SparseMatrix> {
    let p = parse(text)?;
    if p.symmetric {
        let q = SparseSymMatrix::from_triplets(p.nrows, p.entries)?;
        Ok(q.to_full())
    } else {
        SparseMatrix::from_triplets(p.nrows, p.ncols, p.entries)
    }
}

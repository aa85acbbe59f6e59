use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// General sparse matrix in compressed-row layout.
///
/// Column indices within a row are sorted and unique, and no explicit zeros
/// are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Sums duplicate `(key, value)` pairs after a stable sort, keeping the
/// accumulation order equal to the insertion order.
fn compress(mut entries: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    entries.sort_by_key(|&(i, j, _)| (i, j));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for (i, j, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => out.push((i, j, v)),
        }
    }
    out.retain(|&(_, _, v)| v != 0.0);
    out
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are
    /// summed in the order given.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let entries: Vec<_> = triplets.into_iter().collect();
        for &(i, j, v) in &entries {
            if i >= nrows || j >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({i}, {j})")));
            }
        }
        let entries = compress(entries);
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                col_idx.push(i);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `selfᵀ x`.
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "mul_vec_transpose dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = next[j];
                col_idx[p] = i;
                values[p] = v;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product `self · other` (row-wise Gustavson accumulation).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: other.nrows,
            });
        }
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut pattern = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b) in ocols.iter().zip(ovals) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                if acc[j] != 0.0 {
                    col_idx.push(j);
                    values.push(acc[j]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// `a·self + b·other`.
    pub fn add_scaled(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows * self.ncols,
                found: other.nrows * other.ncols,
            });
        }
        let entries = self
            .triplets()
            .map(|(i, j, v)| (i, j, a * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, b * v)));
        SparseMatrix::from_triplets(self.nrows, self.ncols, entries)
    }

    /// `diag(left) · self · diag(right)`.
    pub fn scale(&self, left: &[f64], right: &[f64]) -> SparseMatrix {
        assert_eq!(left.len(), self.nrows);
        assert_eq!(right.len(), self.ncols);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= left[i] * right[self.col_idx[p]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }
}

/// Symmetric sparse matrix storing its lower triangle in compressed-column
/// layout. Row indices within each column are sorted; the diagonal, when
/// present, is the first entry of its column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from triplets of either triangle; entries above the diagonal
    /// are mirrored into the lower triangle before duplicates are summed.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        // Column-major order: key (col, row) with row >= col.
        let mut entries = Vec::new();
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "triplet ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({i}, {j})")));
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            entries.push((c, r, v));
        }
        let entries = compress(entries);
        let mut col_ptr = vec![0usize; n + 1];
        for &(c, _, _) in &entries {
            col_ptr[c + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        })
    }

    /// Lower triangle of a square general matrix; the upper triangle is
    /// ignored, so the result is exactly symmetric.
    pub fn from_lower_of(m: &SparseMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Self::from_triplets(m.nrows(), m.triplets().filter(|&(i, j, _)| i >= j))
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .expect("finite diagonal")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored lower-triangle entries.
    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    /// Number of nonzeros of the full symmetric matrix.
    pub fn nnz_full(&self) -> usize {
        let diag = (0..self.n).filter(|&j| self.get(j, j) != 0.0).count();
        2 * self.values.len() - diag
    }

    /// Row indices (all `>= j`) and values of lower column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let (rows, vals) = self.column(c);
        rows.binary_search(&r).map_or(0.0, |k| vals[k])
    }

    /// Whether `(i, j)` is a stored position.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.column(c).0.binary_search(&r).is_ok()
    }

    /// Stored lower-triangle entries `(row, col, value)`, column-major.
    pub fn lower_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "mul_vec dimension mismatch");
        let mut y = vec![0.0; self.n];
        for (i, j, v) in self.lower_triplets() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// `xᵀ self x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_full(&self) -> SparseMatrix {
        let entries = self.lower_triplets().flat_map(|(i, j, v)| {
            let mirror = (i != j).then_some((j, i, v));
            std::iter::once((i, j, v)).chain(mirror)
        });
        SparseMatrix::from_triplets(self.n, self.n, entries).expect("valid symmetric storage")
    }

    /// `a·self + b·other`; the pattern is the union of both patterns.
    pub fn add_scaled(&self, a: f64, other: &SparseSymMatrix, b: f64) -> Result<SparseSymMatrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let entries = self
            .lower_triplets()
            .map(|(i, j, v)| (i, j, a * v))
            .chain(other.lower_triplets().map(|(i, j, v)| (i, j, b * v)));
        SparseSymMatrix::from_triplets(self.n, entries)
    }

    pub fn scaled(&self, a: f64) -> SparseSymMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `diag(d) · self · diag(d)`.
    pub fn congruence_diag(&self, d: &[f64]) -> SparseSymMatrix {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                out.values[p] *= d[self.row_idx[p]] * d[j];
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`; index `(a, b)` maps to `a·n_other + b`.
    pub fn kron(&self, other: &SparseSymMatrix) -> SparseSymMatrix {
        let nb = other.n;
        let full_b = other.to_full();
        let mut entries = Vec::new();
        for (ia, ja, va) in self.lower_triplets() {
            for (ib, jb, vb) in full_b.triplets() {
                let (r, c) = (ia * nb + ib, ja * nb + jb);
                if r >= c {
                    entries.push((r, c, va * vb));
                }
            }
        }
        SparseSymMatrix::from_triplets(self.n * nb, entries).expect("valid kronecker entries")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.lower_triplets() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Lower-triangle adjacency lists (strictly off-diagonal) of the full
    /// symmetric pattern.
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j, _) in self.lower_triplets() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            [(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)],
        )
        .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn symmetric_mirrors_upper_entries() {
        let q = SparseSymMatrix::from_triplets(3, [(0, 1, 2.0), (1, 0, 1.0), (2, 2, 4.0)]).unwrap();
        assert_eq!(q.get(0, 1), 3.0);
        assert_eq!(q.get(1, 0), 3.0);
        assert_eq!(q.nnz_lower(), 2);
        assert_eq!(q.nnz_full(), 3);
        assert_eq!(q.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseMatrix::from_triplets(2, 3, [(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        let b =
            SparseMatrix::from_triplets(3, 2, [(0, 1, 1.0), (1, 0, -1.0), (2, 0, 0.5)]).unwrap();
        let c = a.matmul(&b).unwrap().to_dense();
        assert_eq!(c, a.to_dense() * b.to_dense());
        assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
    }

    #[test]
    fn kron_matches_dense() {
        let a =
            SparseSymMatrix::from_triplets(2, [(0, 0, 2.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let b =
            SparseSymMatrix::from_triplets(3, [(0, 0, 1.0), (2, 1, 0.5), (1, 1, 3.0), (2, 2, 1.0)])
                .unwrap();
        let k = a.kron(&b).to_dense();
        assert_eq!(k, a.to_dense().kronecker(&b.to_dense()));
    }
}

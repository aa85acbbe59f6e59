//! Simplicial up-looking Cholesky factorisation `P Q Pᵀ = L Lᵀ`.

use nalgebra::DMatrix;

use super::ordering::{compute_ordering, Ordering};
use super::SparseSymMatrix;
use crate::error::{Error, Result};
use crate::rng;

const NONE: usize = usize::MAX;

/// Permuted lower-triangular Cholesky factor.
///
/// Column `j` of `L` stores its diagonal first followed by strictly
/// increasing row indices.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    /// `perm[k]` is the original index at permuted position `k`.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    logdet: f64,
    nnz_q_lower: usize,
}

/// Upper triangle of `P Q Pᵀ` in compressed-column layout.
struct PermutedUpper {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(q: &SparseSymMatrix, pinv: &[usize]) -> PermutedUpper {
    let n = q.n();
    let mut counts = vec![0usize; n + 1];
    for (i, j, _) in q.lower_triplets() {
        let c = pinv[i].max(pinv[j]);
        counts[c + 1] += 1;
    }
    for k in 0..n {
        counts[k + 1] += counts[k];
    }
    let col_ptr = counts.clone();
    let mut next = counts;
    let mut row_idx = vec![0usize; q.nnz_lower()];
    let mut values = vec![0.0; q.nnz_lower()];
    for (i, j, v) in q.lower_triplets() {
        let (a, b) = (pinv[i], pinv[j]);
        let (r, c) = if a <= b { (a, b) } else { (b, a) };
        row_idx[next[c]] = r;
        values[next[c]] = v;
        next[c] += 1;
    }
    PermutedUpper {
        col_ptr,
        row_idx,
        values,
    }
}

fn elimination_tree(a: &PermutedUpper, n: usize) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in a.col_ptr[k]..a.col_ptr[k + 1] {
            let mut i = a.row_idx[p];
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), written to
/// `stack[top..n]` in topological order. Returns `top`.
fn ereach(
    a: &PermutedUpper,
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for p in a.col_ptr[k]..a.col_ptr[k + 1] {
        let mut i = a.row_idx[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

impl CholeskyFactor {
    /// Factorises a symmetric positive definite matrix.
    pub fn factorize(q: &SparseSymMatrix, ordering: Ordering) -> Result<Self> {
        let perm = compute_ordering(q, ordering);
        Self::factorize_with_permutation(q, perm)
    }

    /// Factorises with a caller-supplied permutation.
    pub fn factorize_with_permutation(q: &SparseSymMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = q.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        let mut pinv = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            if i >= n || pinv[i] != NONE {
                return Err(Error::invalid("ordering is not a permutation"));
            }
            pinv[i] = k;
        }
        let a = permuted_upper(q, &pinv);
        let parent = elimination_tree(&a, n);

        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];

        // Column counts of L from the row patterns.
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(&a, k, &parent, &mut stack, &mut mark);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        mark.fill(NONE);

        for k in 0..n {
            let top = ereach(&a, k, &parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let i = a.row_idx[p];
                if i <= k {
                    x[i] = a.values[p];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    index: perm[k],
                    pivot: d,
                });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }

        let logdet = 2.0 * (0..n).map(|j| values[col_ptr[j]].ln()).sum::<f64>();
        Ok(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
            logdet,
            nnz_q_lower: q.nnz_lower(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `log det Q = 2 Σ log L_jj`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn nnz_l(&self) -> usize {
        self.values.len()
    }

    /// `nnz(L) / nnz(lower(Q))`.
    pub fn fill_ratio(&self) -> f64 {
        self.nnz_l() as f64 / self.nnz_q_lower.max(1) as f64
    }

    /// Factor statistics as `key=value` lines.
    pub fn stats_text(&self) -> String {
        format!(
            "n={}\nnnz_l={}\nfill_ratio={:.16e}\nlogdet={:.16e}\n",
            self.n,
            self.nnz_l(),
            self.fill_ratio(),
            self.logdet
        )
    }

    fn l_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    fn forward_in_place(&self, y: &mut [f64]) {
        for j in 0..self.n {
            let start = self.col_ptr[j];
            y[j] /= self.values[start];
            let yj = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
    }

    fn backward_in_place(&self, y: &mut [f64]) {
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut s = y[j];
            for p in start + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.values[start];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        self.forward_in_place(&mut y);
        self.backward_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// Solves `Q X = B` column by column.
    pub fn solve_block(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.nrows(),
            });
        }
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let x = self.solve(b.column(c).as_slice())?;
            out.column_mut(c).copy_from_slice(&x);
        }
        Ok(out)
    }

    /// Column `j` of `Q⁻¹`.
    pub fn inverse_column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.n];
        e[j] = 1.0;
        self.solve(&e).expect("matching dimension")
    }

    /// `x = Pᵀ L⁻ᵀ z`, so `x ~ N(0, Q⁻¹)` for standard normal `z`.
    ///
    /// `z` is indexed by permuted position.
    pub fn transform_standard_normal(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: z.len(),
            });
        }
        let mut y = z.to_vec();
        self.backward_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// One draw from `N(0, Q⁻¹)`, fully determined by `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let z = rng::standard_normals(seed, rng::stream::GMRF_NORMAL, self.n);
        self.transform_standard_normal(&z)
            .expect("matching dimension")
    }

    /// Entries of `Q⁻¹` on the pattern of `L + Lᵀ`, mapped back to the
    /// original indexing (Takahashi recursions).
    pub fn selected_inverse(&self) -> SparseSymMatrix {
        let n = self.n;
        let mut sigma = vec![0.0; self.values.len()];
        // Position of (row r, col c) in the factor storage, r >= c.
        let locate = |r: usize, c: usize| -> usize {
            let start = self.col_ptr[c];
            let rows = &self.row_idx[start..self.col_ptr[c + 1]];
            start
                + rows
                    .binary_search(&r)
                    .expect("selected inverse pattern is closed under the recursion")
        };
        for j in (0..n).rev() {
            let start = self.col_ptr[j];
            let end = self.col_ptr[j + 1];
            let ljj = self.values[start];
            for q in start + 1..end {
                let i = self.row_idx[q];
                let mut s = 0.0;
                for p in start + 1..end {
                    let k = self.row_idx[p];
                    let sik = if i >= k {
                        sigma[locate(i, k)]
                    } else {
                        sigma[locate(k, i)]
                    };
                    s += self.values[p] * sik;
                }
                sigma[q] = -s / ljj;
            }
            let mut s = 0.0;
            for p in start + 1..end {
                s += self.values[p] * sigma[p];
            }
            sigma[start] = 1.0 / (ljj * ljj) - s / ljj;
        }
        let entries = (0..n).flat_map(|j| {
            let sigma = &sigma;
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(move |p| (self.perm[self.row_idx[p]], self.perm[j], sigma[p]))
        });
        SparseSymMatrix::from_triplets(n, entries.collect::<Vec<_>>()).expect("finite inverse")
    }

    /// Dense reconstruction `Pᵀ L Lᵀ P` (test-size matrices only).
    pub fn reconstruct_dense(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.l_triplets() {
            l[(r, c)] = v;
        }
        let llt = &l * l.transpose();
        let mut out = DMatrix::zeros(self.n, self.n);
        for a in 0..self.n {
            for b in 0..self.n {
                out[(self.perm[a], self.perm[b])] = llt[(a, b)];
            }
        }
        out
    }
}

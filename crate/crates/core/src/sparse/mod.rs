//! Sparse symmetric linear algebra: storage, fill-reducing ordering,
//! Cholesky factorisation, solves, sampling and selected inversion.

mod cholesky;
mod matrix;
pub mod matrix_market;
mod ordering;

pub use cholesky::CholeskyFactor;
pub use matrix::{SparseMatrix, SparseSymMatrix};
pub use ordering::{approximate_minimum_degree, compute_ordering, Ordering};

use crate::error::Result;

/// Factorises `q` with the requested ordering.
pub fn factorize(q: &SparseSymMatrix, ordering: Ordering) -> Result<CholeskyFactor> {
    CholeskyFactor::factorize(q, ordering)
}

/// Solves `Q x = b` with an existing factor.
pub fn solve(factor: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    factor.solve(b)
}

/// Draws `x ~ N(0, Q⁻¹)` from counter-based normals keyed by `seed`.
pub fn sample_gmrf(factor: &CholeskyFactor, seed: u64) -> Vec<f64> {
    factor.sample(seed)
}

/// Entries of `Q⁻¹` on the factor's pattern; the diagonal holds the marginal
/// variances.
pub fn selected_inverse(factor: &CholeskyFactor) -> SparseSymMatrix {
    factor.selected_inverse()
}

//! Sparse GMRF approximations of Gaussian random fields defined through
//! stochastic partial differential equations on triangulated domains.

pub mod assembly;
pub mod error;
pub mod fractional;
pub mod inference;
pub mod io;
pub mod mesh;
pub mod non_gaussian;
pub mod oracles;
pub mod pointprocess;
pub mod precision;
pub mod rng;
pub mod sparse;
pub mod validation;

pub use assembly::{FemMatrices, Tensor2};
pub use error::{Error, Result};
pub use mesh::{load_mesh, Mesh, MeshKind, ProjectionMatrix};
pub use sparse::{CholeskyFactor, Ordering, SparseMatrix, SparseSymMatrix};

//! Nontrivial extreme GSVD components of a matrix pair `{A, L}` through the
//! generalized Golub-Kahan bidiagonalization, with a dense reference
//! decomposition for validation and generators for designed test pairs.

pub mod dense;
pub mod error;
pub mod ggkb;
pub mod lsqr;
pub mod matrix;
pub mod mtx;
pub mod oracle;
pub mod pair;
pub mod pinv;
pub mod solver;
pub mod testgen;

pub use error::{GsvdError, Result};
pub use matrix::{DenseMatrix, SparseMatrix, Vector};
pub use pair::{MatrixPair, Side};
pub use pinv::{PinvApplier, PinvMode};
pub use ggkb::{GgkbConfig, GgkbProcess, Reorth};
pub use oracle::{dense_gsvd, GsvdReference};
pub use solver::{run_solver, sin_angle, GsvdTuple, SolverConfig, SolverOutput};

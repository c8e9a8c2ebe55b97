//! Dense matrix substrate: products, row-wise softmax and normalization,
//! singular values and numerical rank, eigenvalue moduli.

mod eigen;
mod matrix;
mod sparse;
mod svd;

pub use eigen::{eigen_moduli, eigenvalues};
pub use matrix::Matrix;
pub use sparse::CsrMatrix;
pub use svd::{numerical_rank, singular_values, RankConfig};

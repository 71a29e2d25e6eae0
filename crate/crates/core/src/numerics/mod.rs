//! Dense and sparse linear algebra, the autodiff tape, and the eigensolver.

pub mod eigen;
pub mod gradcheck;
pub mod lu;
mod matrix;
mod sparse;
pub mod tape;

pub use eigen::{eig_dense, ComplexSpectrum};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use matrix::Matrix;
pub use sparse::SparseRowMatrix;
pub use tape::{Activation, GatedEdges, Tape, Tensor};

//! Dense linear-algebra primitives used by layer grouping: vectors with a
//! finiteness invariant, row-major matrices, a cyclic Jacobi eigensolver for
//! symmetric matrices and deterministic k-means.
//!
//! Everything here is plain `f64` and free of shared state.

mod eigen;
mod kmeans;
mod matrix;
mod vector;

pub use eigen::{symmetric_eigh, EigenResult, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};
pub use kmeans::{distortion, kmeans, kmeans_traced, ClusterAssignment, KMEANS_MAX_ITERS};
pub use matrix::{Matrix, SymmetricMatrix};
pub use vector::{cosine_similarity, DenseVector};

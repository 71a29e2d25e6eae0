//! Lying graph convolution: node classification with per-edge, per-channel
//! learnable message signs, plus the diffusion dynamics behind it.
//!
//! Module map:
//! - [`numerics`]: matrices, CSR, autodiff tape, non-symmetric eigensolver
//! - [`graph`]: simple undirected graphs and their normalized operators
//! - [`layers`]: GCN, GCNII, Lying-GCN, Lying-GCNII, MLP
//! - [`dynamics`]: heat, sheaf, and lying diffusion systems
//! - [`data`]: synthetic multipartite generator, canonical dataset files, splits
//! - [`experiments`]: optimizers, training, grid search, statistics

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod layers;
pub mod numerics;

pub use error::{Error, Result};

//! Threshold quantum state tomography (tQST) with permutation-equivariant
//! neural networks.
//!
//! The crate covers the whole pipeline:
//!
//! - [`numerics`]: dense complex linear algebra (Jacobi eigensolver, PSD square
//!   root) and a counter-based, seedable RNG.
//! - [`qstate`]: density matrices, random state generation with controlled
//!   sparsity and rank, noise channels, purity and fidelity.
//! - [`tqst`]: Gini-index threshold, measurement selection, simulated outcomes
//!   and the two network input encodings.
//! - [`penet`]: a small reverse-mode network stack (dense and
//!   permutation-equivariant layers, Adam, training loop, checkpoints).
//! - [`reconstruct`]: decoding network outputs into physical states.
//! - [`baseline`]: direct inversion and least-squares projected-gradient
//!   reconstruction.
//! - [`datagen`]: dataset construction, stratified splits and file formats.
//! - [`eval`]: fidelity / MSE / R² reports with sparsity stratification.

#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod penet;
pub mod qstate;
pub mod reconstruct;
pub mod tqst;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, EigenDecomposition, Rng};
pub use qstate::{DensityMatrix, NoiseKind, NoiseSpec, StateSpec};
pub use tqst::{EncodedInput, MeasurementRecord, ThresholdReport};

/// Largest register size the pipeline accepts.
pub const MAX_QUBITS: usize = 4;

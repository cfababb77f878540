//! Dense complex linear algebra and seedable randomness.
//!
//! Everything here is sized for density matrices of at most a few qubits
//! (dimension ≤ 2⁸), so plain row-major storage and a cyclic Jacobi
//! eigensolver are both accurate and fast enough.

mod eig;
mod matrix;
mod rng;

pub use eig::{hermitian_eig, matrix_sqrt_psd, EigenDecomposition, CLAMP_TOL, HERMITIAN_TOL};
pub use matrix::ComplexMatrix;
pub use num_complex::Complex64;
pub use rng::{mix_seed, rand_uniform_matrix, Rng};

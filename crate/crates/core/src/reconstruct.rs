//! Turning a network's raw output into a physical state.
//!
//! The tomography output uses the same layout as a [`MeasurementRecord`]:
//! `2ⁿ` real diagonal entries followed by `(Re ρ_ij, Im ρ_ij)` for every pair
//! `i < j` in row-major order.
//!
//! [`MeasurementRecord`]: crate::tqst::MeasurementRecord

use num_complex::Complex64;

use crate::numerics::{hermitian_eig, ComplexMatrix};
use crate::qstate::{check_qubits, DensityMatrix};
use crate::tqst::pairs;
use crate::{Error, Result};

/// Traces below this magnitude cannot be normalized.
pub const DEGENERATE_TRACE: f64 = 1e-9;

/// Raw `4ⁿ`-parameter output of a tomography model.
#[derive(Clone, Debug, PartialEq)]
pub struct RawReconstruction {
    n_qubits: usize,
    params: Vec<f64>,
}

impl RawReconstruction {
    pub fn new(n_qubits: usize, params: Vec<f64>) -> Result<Self> {
        let d = check_qubits(n_qubits)?;
        if params.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: params.len(),
            });
        }
        Ok(Self { n_qubits, params })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }
}

/// Parameters of `rho` in the output layout; the training target.
pub fn encode_params(rho: &DensityMatrix) -> Vec<f64> {
    let d = rho.dim();
    let m = rho.matrix();
    let mut out = Vec::with_capacity(d * d);
    out.extend((0..d).map(|i| m[(i, i)].re));
    for (i, j) in pairs(d) {
        out.push(m[(i, j)].re);
        out.push(m[(i, j)].im);
    }
    out
}

/// Hermitian matrix `μ` from the parameters, divided by its trace.
pub fn vector_to_hermitian(raw: &RawReconstruction) -> Result<ComplexMatrix> {
    let d = 1usize << raw.n_qubits;
    let p = &raw.params;
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("reconstruction parameters".into()));
    }
    let trace: f64 = p[..d].iter().sum();
    if trace.abs() < DEGENERATE_TRACE {
        return Err(Error::DegenerateTrace(trace));
    }
    let mut mu = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        mu[(i, i)] = Complex64::new(p[i] / trace, 0.0);
    }
    for (k, (i, j)) in pairs(d).enumerate() {
        let z = Complex64::new(p[d + 2 * k], p[d + 2 * k + 1]) / trace;
        mu[(i, j)] = z;
        mu[(j, i)] = z.conj();
    }
    Ok(mu)
}

/// Redistributes negative eigenvalues of a unit-trace spectrum.
///
/// Each round zeroes every currently negative eigenvalue and spreads their
/// (negative) total equally over the eigenvalues not yet zeroed, until none is
/// negative. The sum is preserved.
pub fn redistribute_spectrum(eigenvalues: &[f64]) -> Vec<f64> {
    let mut lam = eigenvalues.to_vec();
    let mut active: Vec<bool> = vec![true; lam.len()];
    for _ in 0..=lam.len() {
        let mut deficit = 0.0;
        for (l, a) in lam.iter_mut().zip(active.iter_mut()) {
            if *a && *l < 0.0 {
                deficit += *l;
                *l = 0.0;
                *a = false;
            }
        }
        if deficit == 0.0 {
            break;
        }
        let survivors = active.iter().filter(|&&a| a).count();
        if survivors == 0 {
            break;
        }
        let share = deficit / survivors as f64;
        for (l, a) in lam.iter_mut().zip(&active) {
            if *a {
                *l += share;
            }
        }
    }
    lam
}

/// Nearest physical state in the eigenbasis of `mu`: eigenvectors are kept and
/// the spectrum is passed through [`redistribute_spectrum`].
pub fn project_psd(mu: &ComplexMatrix) -> Result<DensityMatrix> {
    let mu = mu.hermitian_part();
    let eig = hermitian_eig(&mu)?;
    if eig.eigenvalues[0] >= 0.0 {
        return Ok(DensityMatrix::from_trusted(mu));
    }
    let lam = redistribute_spectrum(&eig.eigenvalues);
    let fixed = crate::numerics::EigenDecomposition {
        eigenvalues: lam,
        eigenvectors: eig.eigenvectors,
    };
    Ok(DensityMatrix::from_trusted(fixed.reconstruct()))
}

/// Decode and project in one step.
pub fn reconstruct(raw: &RawReconstruction) -> Result<DensityMatrix> {
    project_psd(&vector_to_hermitian(raw)?)
}

/// Clamps a purity estimate into `[1/2ⁿ, 1]`.
pub fn clamp_purity(raw: f64, n_qubits: usize) -> f64 {
    let floor = 1.0 / (1u64 << n_qubits) as f64;
    if raw.is_nan() {
        return floor;
    }
    raw.clamp(floor, 1.0)
}

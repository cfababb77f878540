//! Classical reconstruction from tQST records.
//!
//! [`direct_invert`] reads each measured element straight off the outcomes
//! (unmeasured elements are taken as zero) and projects onto the physical
//! set. [`mle_refine`] then minimizes the least-squares misfit
//! `Σ_k (f_k − Tr[P_k ρ])²` over the performed projectors by projected
//! gradient descent with step halving.

use num_complex::Complex64;

use crate::numerics::ComplexMatrix;
use crate::qstate::DensityMatrix;
use crate::reconstruct::{reconstruct, RawReconstruction};
use crate::tqst::{pair_index, MeasurementRecord};
use crate::{Error, Result};

/// Inverts the exact-outcome relations; unmeasured off-diagonals are zero.
pub fn direct_invert(rec: &MeasurementRecord) -> Result<DensityMatrix> {
    let d = rec.dim();
    let diag = rec.diag();
    let mut params = vec![0.0; d * d];
    params[..d].copy_from_slice(diag);
    for (i, j) in rec.measured_pairs() {
        let (r, s) = rec.pair(i, j).expect("measured");
        let mean = 0.5 * (diag[i] + diag[j]);
        let k = d + 2 * pair_index(d, i, j);
        params[k] = r - mean;
        params[k + 1] = mean - s;
    }
    reconstruct(&RawReconstruction::new(rec.n_qubits(), params)?)
}

/// Least-squares misfit of `rho` against the performed measurements.
pub fn ls_objective(rec: &MeasurementRecord, rho: &DensityMatrix) -> f64 {
    residuals(rec, rho.matrix()).iter().map(|(_, r)| r * r).sum()
}

#[derive(Clone, Copy, Debug)]
enum Projector {
    Diag(usize),
    Real(usize, usize),
    Imag(usize, usize),
}

fn expectation(p: Projector, m: &ComplexMatrix) -> f64 {
    match p {
        Projector::Diag(i) => m[(i, i)].re,
        Projector::Real(i, j) => 0.5 * (m[(i, i)].re + m[(j, j)].re) + m[(i, j)].re,
        Projector::Imag(i, j) => 0.5 * (m[(i, i)].re + m[(j, j)].re) - m[(i, j)].im,
    }
}

/// `(projector, f_k − Tr[P_k ρ])` for every performed measurement.
fn residuals(rec: &MeasurementRecord, m: &ComplexMatrix) -> Vec<(Projector, f64)> {
    let mut out = Vec::new();
    for (i, &f) in rec.diag().iter().enumerate() {
        let p = Projector::Diag(i);
        out.push((p, f - expectation(p, m)));
    }
    for (i, j) in rec.measured_pairs() {
        let (r, s) = rec.pair(i, j).expect("measured");
        let pr = Projector::Real(i, j);
        let ps = Projector::Imag(i, j);
        out.push((pr, r - expectation(pr, m)));
        out.push((ps, s - expectation(ps, m)));
    }
    out
}

/// Gradient `−2 Σ_k res_k P_k` of the misfit.
fn gradient(rec: &MeasurementRecord, m: &ComplexMatrix) -> ComplexMatrix {
    let d = m.rows();
    let mut g = ComplexMatrix::zeros(d, d);
    for (p, res) in residuals(rec, m) {
        let w = -2.0 * res;
        match p {
            Projector::Diag(i) => g[(i, i)].re += w,
            Projector::Real(i, j) => {
                g[(i, i)].re += 0.5 * w;
                g[(j, j)].re += 0.5 * w;
                g[(i, j)].re += 0.5 * w;
                g[(j, i)].re += 0.5 * w;
            }
            Projector::Imag(i, j) => {
                // |L⟩⟨L| with |L⟩ = (|i⟩ + i|j⟩)/√2
                g[(i, i)].re += 0.5 * w;
                g[(j, j)].re += 0.5 * w;
                g[(i, j)] += Complex64::new(0.0, -0.5 * w);
                g[(j, i)] += Complex64::new(0.0, 0.5 * w);
            }
        }
    }
    g
}

/// Shift to unit trace, then project onto the PSD cone.
fn to_physical(m: &ComplexMatrix) -> Result<DensityMatrix> {
    let d = m.rows();
    let shift = (1.0 - m.trace().re) / d as f64;
    let mut shifted = m.clone();
    for i in 0..d {
        shifted[(i, i)].re += shift;
    }
    crate::reconstruct::project_psd(&shifted)
}

#[derive(Clone, Debug)]
pub struct MleOutcome {
    pub state: DensityMatrix,
    /// Objective after each accepted iterate; entry 0 is the initial value.
    pub objective: Vec<f64>,
}

/// Projected-gradient least-squares refinement starting from `init`.
///
/// A trial step that increases the objective is retried at half the step,
/// so the recorded objective sequence is nonincreasing.
pub fn mle_refine(
    rec: &MeasurementRecord,
    init: &DensityMatrix,
    iters: usize,
    step: f64,
) -> Result<MleOutcome> {
    if init.dim() != rec.dim() {
        return Err(Error::DimensionMismatch {
            expected: rec.dim(),
            got: init.dim(),
        });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidSpec(format!("step {step} must be positive")));
    }
    let mut state = init.clone();
    let mut value = ls_objective(rec, &state);
    if !value.is_finite() {
        return Err(Error::NonFinite("initial objective".into()));
    }
    let mut objective = vec![value];
    let mut step = step;
    for _ in 0..iters {
        if value < 1e-30 || step < 1e-14 {
            break;
        }
        let g = gradient(rec, state.matrix());
        loop {
            let trial = to_physical(&state.matrix().lincomb(1.0, &g, -step)?)?;
            let trial_value = ls_objective(rec, &trial);
            if !trial_value.is_finite() {
                return Err(Error::NonFinite("objective diverged".into()));
            }
            if trial_value <= value {
                state = trial;
                value = trial_value;
                objective.push(value);
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                break;
            }
        }
    }
    Ok(MleOutcome { state, objective })
}

//! Density matrices, random state generation, noise channels and state metrics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numerics::{hermitian_eig, rand_uniform_matrix, ComplexMatrix, Rng};
use crate::{Error, Result, MAX_QUBITS};

/// Hermiticity and trace tolerance of the invariant suite.
pub const STATE_TOL: f64 = 1e-10;
/// Lowest eigenvalue a valid state may show.
pub const MIN_EIGENVALUE: f64 = -1e-9;

/// Trace-one Hermitian PSD matrix on `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

pub(crate) fn check_qubits(n_qubits: usize) -> Result<usize> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::InvalidSpec(format!(
            "n_qubits = {n_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(1 << n_qubits)
}

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidState(format!(
            "dimension {dim} is not a power of two ≥ 2"
        )));
    }
    let n = dim.trailing_zeros() as usize;
    check_qubits(n)?;
    Ok(n)
}

impl DensityMatrix {
    /// Wraps `matrix` after checking the full invariant suite.
    pub fn try_new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NonSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let n_qubits = qubits_for_dim(matrix.rows())?;
        let rho = Self { n_qubits, matrix };
        rho.validate()?;
        Ok(rho)
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        debug_assert!(matrix.is_square() && matrix.rows().is_power_of_two());
        let n_qubits = matrix.rows().trailing_zeros() as usize;
        Self { n_qubits, matrix }
    }

    /// Hermitian, unit trace, spectrum ≥ −1e−9 and the off-diagonal bound
    /// `|ρ_ij| ≤ √(ρ_ii ρ_jj)`.
    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if !m.is_finite() {
            return Err(Error::NonFinite("density matrix entries".into()));
        }
        let dev = m.hermitian_deviation();
        if dev > STATE_TOL {
            return Err(Error::NonHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} ≠ 1")));
        }
        let eig = hermitian_eig(m)?;
        if eig.eigenvalues[0] < MIN_EIGENVALUE {
            return Err(Error::InvalidState(format!(
                "min eigenvalue {:e}",
                eig.eigenvalues[0]
            )));
        }
        let d = self.dim();
        for i in 0..d {
            for j in i + 1..d {
                let bound = (m[(i, i)].re.max(0.0) * m[(j, j)].re.max(0.0)).sqrt() + 1e-9;
                if m[(i, j)].norm() > bound {
                    return Err(Error::InvalidState(format!(
                        "|ρ_{i}{j}| = {} exceeds √(ρ_ii ρ_jj)",
                        m[(i, j)].norm()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        let d = check_qubits(n_qubits)?;
        Ok(Self::from_trusted(ComplexMatrix::diag_real(&vec![1.0 / d as f64; d])))
    }

    /// `|ψ⟩⟨ψ|` for the normalized `amplitudes`.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        qubits_for_dim(amplitudes.len())?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::AllZero);
        }
        let psi: Vec<Complex64> = amplitudes.iter().map(|a| a / norm).collect();
        Ok(Self::from_trusted(ComplexMatrix::outer(&psi)))
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let d = check_qubits(n_qubits)?;
        if index >= d {
            return Err(Error::InvalidSpec(format!("basis index {index} ≥ {d}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); d];
        amps[index] = Complex64::new(1.0, 0.0);
        Self::pure(&amps)
    }

    /// `(|00⟩ − |11⟩)/√2`.
    pub fn bell_phi_minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        Self::pure(&[Complex64::new(h, 0.0), z, z, Complex64::new(-h, 0.0)])
            .expect("valid two-qubit amplitudes")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal_real()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eig(&self.matrix)?.eigenvalues[0])
    }
}

/// Sparsity and rank of a random state to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpec {
    pub n_qubits: usize,
    /// Number of vanishing diagonal entries.
    pub zeros: usize,
    pub rank: usize,
    pub pure: bool,
}

impl StateSpec {
    pub fn mixed(n_qubits: usize, zeros: usize, rank: usize) -> Result<Self> {
        let spec = Self {
            n_qubits,
            zeros,
            rank,
            pure: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pure(n_qubits: usize, zeros: usize) -> Result<Self> {
        let spec = Self {
            n_qubits,
            zeros,
            rank: 1,
            pure: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = check_qubits(self.n_qubits)?;
        if self.zeros > d - 2 {
            return Err(Error::InvalidSpec(format!(
                "zeros = {} exceeds {}",
                self.zeros,
                d - 2
            )));
        }
        let ok = if self.pure {
            self.rank == 1
        } else {
            (2..=d - self.zeros).contains(&self.rank)
        };
        if !ok {
            return Err(Error::InvalidSpec(format!(
                "rank {} invalid for {} state with {} zeros on {} qubits",
                self.rank,
                if self.pure { "pure" } else { "mixed" },
                self.zeros,
                self.n_qubits
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Depolarizing,
    ExpState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub strength: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        kind: NoiseKind::None,
        strength: 0.0,
    };

    pub fn depolarizing(p: f64) -> Self {
        Self {
            kind: NoiseKind::Depolarizing,
            strength: p,
        }
    }

    pub fn exp_state(eps: f64) -> Self {
        Self {
            kind: NoiseKind::ExpState,
            strength: eps,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let d = check_qubits(n_qubits)? as f64;
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Depolarizing => check_range("p", self.strength, 0.0, depolarizing_max(d)),
            NoiseKind::ExpState => check_range("eps", self.strength, 0.0, 1.0),
        }
    }

    /// Applies the channel; `rng` is only consumed by the experimental-state error.
    pub fn apply(&self, rng: &mut Rng, rho: &DensityMatrix) -> Result<DensityMatrix> {
        match self.kind {
            NoiseKind::None => Ok(rho.clone()),
            NoiseKind::Depolarizing => depolarize(rho, self.strength),
            NoiseKind::ExpState => exp_state_error(rng, rho, self.strength),
        }
    }

    /// `depol:0.05`, `exp:0.1` or `none`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Self::NONE);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("noise `{s}`: expected kind:strength")))?;
        let strength: f64 = value
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("noise strength `{value}`")))?;
        match kind {
            "depol" | "depolarizing" => Ok(Self::depolarizing(strength)),
            "exp" | "exp-state" | "state-error" => Ok(Self::exp_state(strength)),
            other => Err(Error::InvalidSpec(format!("unknown noise channel `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Depolarizing => write!(f, "depol:{}", self.strength),
            NoiseKind::ExpState => write!(f, "exp:{}", self.strength),
        }
    }
}

fn depolarizing_max(d: f64) -> f64 {
    1.0 + 1.0 / (d * d - 1.0)
}

fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo..=hi).contains(&value) {
        return Err(Error::OutOfRange { what, value, lo, hi });
    }
    Ok(())
}

/// Random state with `spec.zeros` vanishing diagonal entries at uniformly
/// random positions and rank `spec.rank` on the remaining support.
///
/// Mixed states are `AA†/Tr[AA†]` with `A` a `(d−z)×r` complex Ginibre matrix;
/// pure states are normalized complex Gaussian vectors on the support.
pub fn generate_state(rng: &mut Rng, spec: &StateSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    let d = 1usize << spec.n_qubits;
    let mut positions: Vec<usize> = (0..d).collect();
    rng.shuffle(&mut positions);
    let mut support = positions[spec.zeros..].to_vec();
    support.sort_unstable();
    let k = support.len();

    let mut a = vec![Complex64::new(0.0, 0.0); k * spec.rank];
    for z in a.iter_mut() {
        *z = Complex64::new(rng.normal(), rng.normal());
    }

    let mut m = ComplexMatrix::zeros(d, d);
    let mut trace = 0.0;
    for (si, &i) in support.iter().enumerate() {
        for (sj, &j) in support.iter().enumerate().skip(si) {
            let row_i = &a[si * spec.rank..(si + 1) * spec.rank];
            let row_j = &a[sj * spec.rank..(sj + 1) * spec.rank];
            let v: Complex64 = row_i.iter().zip(row_j).map(|(x, y)| x * y.conj()).sum();
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m[(i, i)].im = 0.0;
        trace += m[(i, i)].re;
    }
    Ok(DensityMatrix::from_trusted(m.scale(1.0 / trace)))
}

/// `Tr[ρ²]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr[ρ²] = Σ_ij |ρ_ij|² for Hermitian ρ.
    rho.matrix().as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// Eigenvalues at or below this (relative to 1) are outside a state's support.
const SUPPORT_TOL: f64 = 1e-14;

/// `Tr √(√a · b · √a)`.
///
/// Evaluated as `Tr √(W† b W)` with `W = V_s·diag(√λ_s)` spanning the support
/// of whichever argument has the smaller numerical rank. Working on the
/// support keeps round-off eigenvalues of the null space (≈1e−16, whose
/// square roots are ≈1e−8) out of the sum.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ea = hermitian_eig(a.matrix())?;
    let eb = hermitian_eig(b.matrix())?;
    let rank = |e: &crate::numerics::EigenDecomposition| {
        e.eigenvalues.iter().filter(|&&l| l > SUPPORT_TOL).count()
    };
    let (support, other) = if rank(&ea) <= rank(&eb) {
        (&ea, b)
    } else {
        (&eb, a)
    };
    let d = a.dim();
    let cols: Vec<usize> = (0..d)
        .filter(|&k| support.eigenvalues[k] > SUPPORT_TOL)
        .collect();
    if cols.is_empty() {
        return Ok(0.0);
    }
    let w = ComplexMatrix::from_fn(d, cols.len(), |i, c| {
        let k = cols[c];
        support.eigenvectors[(i, k)] * support.eigenvalues[k].sqrt()
    });
    let inner = w.adjoint().matmul(other.matrix())?.matmul(&w)?.hermitian_part();
    let eig = hermitian_eig(&inner)?;
    Ok(eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

/// `(1 − p)ρ + p·I/2ⁿ`.
pub fn depolarize(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    check_range("p", p, 0.0, depolarizing_max(rho.dim() as f64))?;
    let d = rho.dim();
    let mut m = rho.matrix().scale(1.0 - p);
    for i in 0..d {
        m[(i, i)].re += p / d as f64;
    }
    Ok(DensityMatrix::from_trusted(m))
}

/// `(1 − ε)ρ + ε·R†R/Tr[R†R]` with `R = 2·rand − 1 + i(2·rand − 1)`.
///
/// The real part of `R` is drawn as a full matrix before the imaginary part.
pub fn exp_state_error(rng: &mut Rng, rho: &DensityMatrix, eps: f64) -> Result<DensityMatrix> {
    check_range("eps", eps, 0.0, 1.0)?;
    let random = random_state_from_uniform(rng, rho.dim());
    let m = rho.matrix().lincomb(1.0 - eps, &random, eps)?.hermitian_part();
    Ok(DensityMatrix::from_trusted(m))
}

fn random_state_from_uniform(rng: &mut Rng, d: usize) -> ComplexMatrix {
    let re = rand_uniform_matrix(rng, d);
    let im = rand_uniform_matrix(rng, d);
    let r = ComplexMatrix::from_fn(d, d, |i, j| {
        Complex64::new(2.0 * re[(i, j)].re - 1.0, 2.0 * im[(i, j)].re - 1.0)
    });
    let rr = r.adjoint().matmul(&r).expect("square");
    let tr = rr.trace().re;
    rr.scale(1.0 / tr).hermitian_part()
}

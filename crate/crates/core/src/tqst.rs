//! The threshold-QST protocol.
//!
//! All `2ⁿ` diagonal elements are measured first. Their Gini index sets the
//! threshold `t = GI/(2ⁿ − 1)`, and the off-diagonal pair `(i, j)` is measured
//! only when `√(ρ_ii ρ_jj) ≥ t`. Each measured pair contributes two projective
//! outcomes:
//!
//! - `r = ⟨+|ρ|+⟩ = (ρ_ii + ρ_jj)/2 + Re ρ_ij` with `|+⟩ = (|i⟩ + |j⟩)/√2`
//! - `s = ⟨L|ρ|L⟩ = (ρ_ii + ρ_jj)/2 − Im ρ_ij` with `|L⟩ = (|i⟩ + i|j⟩)/√2`
//!
//! Skipped measurements are recorded as [`SKIPPED`].

use serde::{Deserialize, Serialize};

use crate::numerics::Rng;
use crate::qstate::{check_qubits, DensityMatrix, NoiseSpec};
use crate::{Error, Result};

/// Sentinel stored for measurements the threshold rule skips.
pub const SKIPPED: f64 = 2.0;

/// Slack on `Σ diag = 1` before the diagonal is renormalized.
pub const DIAG_SUM_TOL: f64 = 1e-6;

/// Upper-triangle pairs `(i, j)`, `i < j`, in row-major order.
pub fn pairs(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |i| (i + 1..dim).map(move |j| (i, j)))
}

/// Position of pair `(i, j)` (`i < j`) in [`pairs`].
pub fn pair_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < dim);
    i * dim - i * (i + 1) / 2 + (j - i - 1)
}

/// `GI(c) = 1 − 2 Σ_k (c_(k)/‖c‖₁)·((N − k + ½)/N)` over `c` sorted ascending.
pub fn gini_index(c: &[f64]) -> Result<f64> {
    if c.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidRecord(
            "Gini index needs non-negative finite entries".into(),
        ));
    }
    let norm: f64 = c.iter().sum();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::AllZero);
    }
    let mut sorted = c.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| (x / norm) * ((n - (k + 1) as f64 + 0.5) / n))
        .sum();
    Ok((1.0 - 2.0 * weighted).clamp(0.0, 1.0 - 1.0 / n))
}

/// How the threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ThresholdMode {
    /// `t = GI(diag)/(2ⁿ − 1)`.
    #[default]
    Gini,
    /// Manual override.
    Fixed(f64),
}

/// Outcome of the selection step.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdReport {
    /// Diagonal after renormalization to unit sum.
    pub diag: Vec<f64>,
    pub gini: f64,
    pub threshold: f64,
    /// Pairs `(i, j)`, `i < j`, with `√(diag_i·diag_j) ≥ threshold`, row-major.
    pub selected_pairs: Vec<(usize, usize)>,
}

impl ThresholdReport {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `2ⁿ` diagonal measurements plus two per selected pair.
    pub fn measurement_count(&self) -> usize {
        self.dim() + 2 * self.selected_pairs.len()
    }
}

fn normalized_diag(diag: &[f64]) -> Result<Vec<f64>> {
    let d = diag.len();
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::InvalidRecord(format!(
            "diagonal length {d} is not 2ⁿ"
        )));
    }
    check_qubits(d.trailing_zeros() as usize)?;
    // Round-off may leave entries a hair below zero.
    let clipped: Vec<f64> = diag
        .iter()
        .map(|&x| if x < 0.0 && x > -DIAG_SUM_TOL { 0.0 } else { x })
        .collect();
    if clipped.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidRecord("negative or non-finite diagonal".into()));
    }
    let sum: f64 = clipped.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::AllZero);
    }
    Ok(clipped.into_iter().map(|x| x / sum).collect())
}

/// Gini threshold and the pairs it selects.
pub fn select_measurements(diag: &[f64]) -> Result<ThresholdReport> {
    select_with(diag, ThresholdMode::Gini)
}

/// Selection with an explicit threshold mode.
pub fn select_with(diag: &[f64], mode: ThresholdMode) -> Result<ThresholdReport> {
    let diag = normalized_diag(diag)?;
    let d = diag.len();
    let gini = gini_index(&diag)?;
    let threshold = match mode {
        ThresholdMode::Gini => gini / (d - 1) as f64,
        ThresholdMode::Fixed(t) => {
            if !t.is_finite() {
                return Err(Error::InvalidSpec(format!("threshold {t}")));
            }
            t
        }
    };
    let selected_pairs = pairs(d)
        .filter(|&(i, j)| (diag[i] * diag[j]).sqrt() >= threshold)
        .collect();
    Ok(ThresholdReport {
        diag,
        gini,
        threshold,
        selected_pairs,
    })
}

/// tQST outcomes in the flat `4ⁿ` layout: the `2ⁿ` diagonal outcomes, then
/// `(r, s)` for every pair in row-major order, [`SKIPPED`] where not measured.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    n_qubits: usize,
    values: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(n_qubits: usize, values: Vec<f64>) -> Result<Self> {
        let d = check_qubits(n_qubits)?;
        if values.len() != d * d {
            return Err(Error::InvalidRecord(format!(
                "expected {} values, got {}",
                d * d,
                values.len()
            )));
        }
        let rec = Self { n_qubits, values };
        rec.validate()?;
        Ok(rec)
    }

    /// Infers the register size from `values.len() = 4ⁿ`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        let d = (len as f64).sqrt().round() as usize;
        if d * d != len || d < 2 || !d.is_power_of_two() {
            return Err(Error::InvalidRecord(format!("length {len} is not 4ⁿ")));
        }
        Self::new(d.trailing_zeros() as usize, values)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (i, &x) in self.values[..d].iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidRecord(format!(
                    "diagonal outcome {i} = {x} outside [0, 1]"
                )));
            }
        }
        for (k, (i, j)) in pairs(d).enumerate() {
            let r = self.values[d + 2 * k];
            let s = self.values[d + 2 * k + 1];
            let skipped = (r == SKIPPED, s == SKIPPED);
            let ok = match skipped {
                (true, true) => true,
                (false, false) => (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&s),
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidRecord(format!(
                    "pair ({i},{j}) has outcomes ({r}, {s})"
                )));
            }
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diag(&self) -> &[f64] {
        &self.values[..self.dim()]
    }

    /// `(r, s)` for pair `(i, j)`, `None` when skipped.
    pub fn pair(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let d = self.dim();
        let k = d + 2 * pair_index(d, i, j);
        let (r, s) = (self.values[k], self.values[k + 1]);
        (r != SKIPPED).then_some((r, s))
    }

    pub fn measured_pairs(&self) -> Vec<(usize, usize)> {
        pairs(self.dim())
            .filter(|&(i, j)| self.pair(i, j).is_some())
            .collect()
    }

    pub fn performed_count(&self) -> usize {
        self.values.iter().filter(|&&x| x != SKIPPED).count()
    }
}

/// Exact (infinite-shot) outcomes of the measurements selected in `report`.
pub fn simulate_outcomes(rho: &DensityMatrix, report: &ThresholdReport) -> Result<MeasurementRecord> {
    let d = rho.dim();
    if report.dim() != d {
        return Err(Error::InconsistentReport(format!(
            "report covers dimension {}, state has {d}",
            report.dim()
        )));
    }
    let m = rho.matrix();
    let mut values = vec![SKIPPED; d * d];
    for i in 0..d {
        values[i] = m[(i, i)].re.clamp(0.0, 1.0);
    }
    for &(i, j) in &report.selected_pairs {
        if i >= j || j >= d {
            return Err(Error::InconsistentReport(format!("pair ({i},{j})")));
        }
        let mean = 0.5 * (m[(i, i)].re + m[(j, j)].re);
        let k = d + 2 * pair_index(d, i, j);
        values[k] = (mean + m[(i, j)].re).clamp(0.0, 1.0);
        values[k + 1] = (mean - m[(i, j)].im).clamp(0.0, 1.0);
    }
    MeasurementRecord::new(rho.n_qubits(), values)
}

/// Measurement settings shared by dataset generation and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub threshold: ThresholdMode,
    /// Finite-shot estimates when set; exact expectation values otherwise.
    pub shots: Option<u64>,
}

/// Runs the full protocol on `rho`: diagonal, selection, off-diagonal outcomes.
///
/// With finite shots each projector is estimated independently from a
/// binomial draw, and the selection uses the estimated diagonal.
pub fn measure(
    rng: &mut Rng,
    rho: &DensityMatrix,
    opts: &MeasureOptions,
) -> Result<(ThresholdReport, MeasurementRecord)> {
    let Some(shots) = opts.shots else {
        let report = select_with(&rho.diagonal(), opts.threshold)?;
        let rec = simulate_outcomes(rho, &report)?;
        return Ok((report, rec));
    };
    if shots == 0 {
        return Err(Error::InvalidSpec("shots must be positive".into()));
    }
    let exact = simulate_outcomes(rho, &select_with(&rho.diagonal(), ThresholdMode::Fixed(0.0))?)?;
    let estimate = |rng: &mut Rng, p: f64| rng.binomial(shots, p) as f64 / shots as f64;
    let d = rho.dim();
    let mut diag: Vec<f64> = exact.diag().iter().map(|&p| estimate(rng, p)).collect();
    if diag.iter().all(|&x| x == 0.0) {
        diag = exact.diag().to_vec();
    }
    let report = select_with(&diag, opts.threshold)?;
    let mut values = vec![SKIPPED; d * d];
    values[..d].copy_from_slice(&diag);
    for &(i, j) in &report.selected_pairs {
        let (r, s) = exact.pair(i, j).expect("all pairs present at t = 0");
        let k = d + 2 * pair_index(d, i, j);
        values[k] = estimate(rng, r);
        values[k + 1] = estimate(rng, s);
    }
    Ok((report, MeasurementRecord::new(rho.n_qubits(), values)?))
}

/// Network input on the `2ⁿ × 2ⁿ` grid, two channels per cell:
/// `(diag_i, 0)` on the diagonal and `(r, s)` at both `(i, j)` and `(j, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInput {
    n_qubits: usize,
    grid: Vec<[f64; 2]>,
}

impl EncodedInput {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.grid[i * self.dim() + j]
    }

    /// Row-major `[i][j][channel]` values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.grid.iter().flat_map(|c| c.iter().copied()).collect()
    }
}

pub fn encode_input(rec: &MeasurementRecord) -> EncodedInput {
    let d = rec.dim();
    let v = rec.values();
    let mut grid = vec![[0.0; 2]; d * d];
    for i in 0..d {
        grid[i * d + i] = [v[i], 0.0];
    }
    for (k, (i, j)) in pairs(d).enumerate() {
        let cell = [v[d + 2 * k], v[d + 2 * k + 1]];
        grid[i * d + j] = cell;
        grid[j * d + i] = cell;
    }
    EncodedInput {
        n_qubits: rec.n_qubits(),
        grid,
    }
}

/// Inverse of [`encode_input`]; reads the upper triangle.
pub fn decode_input(enc: &EncodedInput) -> Result<MeasurementRecord> {
    let d = enc.dim();
    let mut values = Vec::with_capacity(d * d);
    values.extend((0..d).map(|i| enc.get(i, i)[0]));
    for (i, j) in pairs(d) {
        values.extend_from_slice(&enc.get(i, j));
    }
    MeasurementRecord::new(enc.n_qubits(), values)
}

/// Applies `noise` to `rho_clean`, runs the protocol on the noisy state and
/// returns `(noisy record, clean target)`. The threshold comes from the noisy
/// diagonal, so the measurement count can differ from the noiseless case.
pub fn noisy_pipeline(
    rng: &mut Rng,
    rho_clean: &DensityMatrix,
    noise: &NoiseSpec,
) -> Result<(MeasurementRecord, DensityMatrix)> {
    let (rec, _) = noisy_pipeline_with(rng, rho_clean, noise, &MeasureOptions::default())?;
    Ok((rec, rho_clean.clone()))
}

/// [`noisy_pipeline`] with explicit measurement options; also returns the report.
pub fn noisy_pipeline_with(
    rng: &mut Rng,
    rho_clean: &DensityMatrix,
    noise: &NoiseSpec,
    opts: &MeasureOptions,
) -> Result<(MeasurementRecord, ThresholdReport)> {
    noise.validate(rho_clean.n_qubits())?;
    let noisy = noise.apply(rng, rho_clean)?;
    let (report, rec) = measure(rng, &noisy, opts)?;
    Ok((rec, report))
}

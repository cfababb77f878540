//! Density-matrix files: JSON with real and imaginary parts, plus a
//! magnitude/phase text table.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tqst::numerics::{Complex64, ComplexMatrix};
use tqst::{DensityMatrix, MeasurementRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n_qubits: usize,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
}

impl MatrixFile {
    pub fn from_state(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let d = rho.dim();
        Self {
            n_qubits: rho.n_qubits(),
            real: (0..d).map(|i| (0..d).map(|j| m[(i, j)].re).collect()).collect(),
            imag: (0..d).map(|i| (0..d).map(|j| m[(i, j)].im).collect()).collect(),
            method: None,
            measurements: None,
            purity: None,
            fidelity: None,
        }
    }

    pub fn to_state(&self) -> Result<DensityMatrix> {
        let d = self.real.len();
        if d != 1 << self.n_qubits || self.imag.len() != d || self.real.iter().chain(&self.imag).any(|r| r.len() != d) {
            bail!("matrix file is not {0}×{0}", 1usize << self.n_qubits);
        }
        let m = ComplexMatrix::from_fn(d, d, |i, j| Complex64::new(self.real[i][j], self.imag[i][j]));
        Ok(DensityMatrix::try_new(m)?)
    }
}

/// `|ρ_ij|` and `arg ρ_ij / π` side by side.
pub fn magnitude_phase_table(rho: &DensityMatrix) -> String {
    let m = rho.matrix();
    let d = rho.dim();
    let mut out = String::from("magnitude\n");
    for i in 0..d {
        let row: Vec<String> = (0..d).map(|j| format!("{:7.4}", m[(i, j)].norm())).collect();
        writeln!(out, "  {}", row.join(" ")).unwrap();
    }
    out.push_str("phase / pi\n");
    for i in 0..d {
        let row: Vec<String> = (0..d)
            .map(|j| {
                let z = m[(i, j)];
                if z.norm() < 1e-9 {
                    format!("{:>7}", "-")
                } else {
                    format!("{:7.3}", z.arg() / std::f64::consts::PI)
                }
            })
            .collect();
        writeln!(out, "  {}", row.join(" ")).unwrap();
    }
    out
}

/// A record file is either a JSON array of `4ⁿ` outcomes, a JSON object with
/// a `values` array, or a CSV in the dataset export layout (first row used
/// unless `row` is given).
pub fn read_record(path: &Path, row: Option<usize>) -> Result<MeasurementRecord> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let rows = tqst::datagen::import_csv(path)?;
        let k = row.unwrap_or(0);
        let Some(r) = rows.into_iter().nth(k) else {
            bail!("{} has no row {k}", path.display());
        };
        return Ok(r.record);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let values = match &value {
        serde_json::Value::Array(_) => value,
        serde_json::Value::Object(o) => o.get("values").cloned().context("record object has no \"values\"")?,
        _ => bail!("record must be a JSON array or object"),
    };
    let values: Vec<f64> = serde_json::from_value(values)?;
    Ok(MeasurementRecord::from_values(values)?)
}

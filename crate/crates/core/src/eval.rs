//! Test-set metrics: reconstruction fidelity for tomography, MSE and R² for
//! purity, plus means stratified by the number of zeros on the diagonal.

use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::penet::{Example, Model, Task};
use crate::qstate::{fidelity, DensityMatrix};
use crate::reconstruct::{clamp_purity, reconstruct, RawReconstruction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: usize,
    pub zeros: usize,
    pub rank: usize,
    pub pure: bool,
    pub noise_strength: f64,
    pub measurements: usize,
    /// Tomography only; 0 when the prediction had a degenerate trace.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    /// Purity only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_purity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_purity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squared_error: Option<f64>,
}

impl SampleRow {
    /// Fidelity for tomography, squared error for purity.
    pub fn metric(&self) -> f64 {
        self.fidelity.or(self.squared_error).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub zeros_lo: usize,
    pub zeros_hi: usize,
    pub count: usize,
    /// Mean fidelity (tomography) or mean squared error (purity); absent
    /// for an empty bucket.
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n_qubits: usize,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    pub mean_measurements: f64,
    /// Predictions whose trace was too small to normalize.
    pub degenerate: usize,
    pub buckets: Vec<Bucket>,
    pub rows: Vec<SampleRow>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(1/N) Σ (y_p − y_o)²`.
pub fn mse(pred: &[f64], obs: &[f64]) -> f64 {
    pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum::<f64>() / obs.len() as f64
}

/// `1 − Σ(y_o − y_p)² / Σ(y_o − ȳ_o)²`; NaN when the observations are constant.
pub fn r_squared(pred: &[f64], obs: &[f64]) -> f64 {
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let ss_res: f64 = pred.iter().zip(obs).map(|(p, o)| (o - p) * (o - p)).sum();
    let ss_tot: f64 = obs.iter().map(|o| (o - mean) * (o - mean)).sum();
    if ss_tot == 0.0 {
        f64::NAN
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Zero-count buckets of width `⌈(2ⁿ − 1)/3⌉` covering `0..=2ⁿ − 2`:
/// `{0}, {1}, {2}` for two qubits and `0–4, 5–9, 10–14` for four.
pub fn zero_buckets(n_qubits: usize) -> Vec<(usize, usize)> {
    let d = 1usize << n_qubits;
    let max_z = d - 2;
    let width = (d - 1).div_ceil(3);
    (0..=max_z)
        .step_by(width)
        .map(|lo| (lo, (lo + width - 1).min(max_z)))
        .collect()
}

fn bucketize(rows: &[SampleRow], n_qubits: usize) -> Vec<Bucket> {
    zero_buckets(n_qubits)
        .into_iter()
        .map(|(lo, hi)| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| (lo..=hi).contains(&r.zeros))
                .map(SampleRow::metric)
                .collect();
            let stats = (!xs.is_empty()).then(|| mean_std(&xs));
            Bucket {
                zeros_lo: lo,
                zeros_hi: hi,
                count: xs.len(),
                mean: stats.map(|s| s.0),
                std: stats.map(|s| s.1),
            }
        })
        .collect()
}

fn base_row(index: usize, s: &Sample) -> SampleRow {
    SampleRow {
        index,
        zeros: s.meta.zeros,
        rank: s.meta.rank,
        pure: s.meta.pure,
        noise_strength: s.meta.noise_strength,
        measurements: s.meta.measurements,
        fidelity: None,
        predicted_purity: None,
        target_purity: None,
        squared_error: None,
    }
}

fn check_inputs<T>(preds: &[T], samples: &[&Sample]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if preds.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: preds.len(),
        });
    }
    Ok(samples[0].record.n_qubits())
}

fn mean_measurements(samples: &[&Sample]) -> f64 {
    samples.iter().map(|s| s.meta.measurements as f64).sum::<f64>() / samples.len() as f64
}

/// Fidelity of already-reconstructed states against the clean targets.
pub fn evaluate_states(states: &[Option<DensityMatrix>], samples: &[&Sample]) -> Result<EvalReport> {
    let n_qubits = check_inputs(states, samples)?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut degenerate = 0;
    for (k, (state, s)) in states.iter().zip(samples).enumerate() {
        let f = match state {
            Some(rho) => fidelity(rho, &s.target_state()?)?,
            None => {
                degenerate += 1;
                0.0
            }
        };
        rows.push(SampleRow {
            fidelity: Some(f),
            ..base_row(k, s)
        });
    }
    let fids: Vec<f64> = rows.iter().map(SampleRow::metric).collect();
    let (mean, std) = mean_std(&fids);
    Ok(EvalReport {
        task: Task::Tomography,
        n_qubits,
        count: rows.len(),
        mean_fidelity: Some(mean),
        std_fidelity: Some(std),
        mse: None,
        r2: None,
        mean_measurements: mean_measurements(samples),
        degenerate,
        buckets: bucketize(&rows, n_qubits),
        rows,
    })
}

/// Decodes and projects raw `4ⁿ` predictions, then scores them. A
/// degenerate trace counts as fidelity 0.
pub fn evaluate_tomography(preds: &[Vec<f64>], samples: &[&Sample]) -> Result<EvalReport> {
    let n_qubits = check_inputs(preds, samples)?;
    let states = preds
        .iter()
        .map(|p| match reconstruct(&RawReconstruction::new(n_qubits, p.clone())?) {
            Ok(rho) => Ok(Some(rho)),
            Err(Error::DegenerateTrace(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_states(&states, samples)
}

/// MSE and R² of clamped purity predictions.
pub fn evaluate_purity(preds: &[f64], samples: &[&Sample]) -> Result<EvalReport> {
    let n_qubits = check_inputs(preds, samples)?;
    let clamped: Vec<f64> = preds.iter().map(|&p| clamp_purity(p, n_qubits)).collect();
    let obs: Vec<f64> = samples.iter().map(|s| s.target_purity).collect();
    let rows: Vec<SampleRow> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| SampleRow {
            predicted_purity: Some(clamped[k]),
            target_purity: Some(obs[k]),
            squared_error: Some((clamped[k] - obs[k]).powi(2)),
            ..base_row(k, s)
        })
        .collect();
    let r2 = r_squared(&clamped, &obs);
    Ok(EvalReport {
        task: Task::Purity,
        n_qubits,
        count: rows.len(),
        mean_fidelity: None,
        std_fidelity: None,
        mse: Some(mse(&clamped, &obs)),
        r2: r2.is_finite().then_some(r2),
        mean_measurements: mean_measurements(samples),
        degenerate: 0,
        buckets: bucketize(&rows, n_qubits),
        rows,
    })
}

/// Training pairs for `task`: model input from the record, clean target.
pub fn examples(model: &Model, task: Task, samples: &[&Sample]) -> Vec<Example> {
    samples
        .iter()
        .map(|s| Example {
            input: model.input_for(&s.record),
            target: match task {
                Task::Tomography => s.target_params.clone(),
                Task::Purity => vec![s.target_purity],
            },
        })
        .collect()
}

pub fn evaluate_model(model: &Model, samples: &[&Sample]) -> Result<EvalReport> {
    let task = model
        .config()
        .map(|c| c.task)
        .ok_or_else(|| Error::InvalidConfig("model has no config".into()))?;
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| model.input_for(&s.record)).collect();
    let preds = model.predict_batch(&inputs)?;
    match task {
        Task::Tomography => evaluate_tomography(&preds, samples),
        Task::Purity => evaluate_purity(&preds.iter().map(|p| p[0]).collect::<Vec<_>>(), samples),
    }
}

//! Dataset construction and stratified splitting.
//!
//! For every `(z, r)` pair with `0 ≤ z ≤ 2ⁿ − 2` and `2 ≤ r ≤ 2ⁿ − z`, `M`
//! mixed states are drawn, plus `M` pure states with the same `z`. That gives
//! `2·M·2ⁿ⁻¹(2ⁿ − 1)` samples in total. Each sample's clean state depends only
//! on `(seed, index)`, so datasets built with different noise but the same
//! seed hold the same clean states.

mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{mix_seed, Rng};
use crate::qstate::{check_qubits, generate_state, purity, DensityMatrix, NoiseSpec, StateSpec};
use crate::reconstruct::{encode_params, vector_to_hermitian, RawReconstruction};
use crate::tqst::{noisy_pipeline_with, MeasureOptions, MeasurementRecord};
use crate::{Error, Result};

pub use io::{
    export_csv, import_csv, load_dataset, save_dataset, CsvRow, Manifest, DATASET_MAGIC,
    MANIFEST_FILE, SAMPLES_FILE,
};

const STATE_STREAM: u64 = 0x5354_4154;
const NOISE_STREAM: u64 = 0x4e4f_4953;
const SPLIT_STREAM: u64 = 0x5350_4c54;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_qubits: usize,
    /// `M`: samples per `(z, r)` pair and per purity class.
    pub per_pair: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    #[serde(default)]
    pub measure: MeasureOptions,
}

impl DatasetSpec {
    pub fn new(n_qubits: usize, per_pair: usize, seed: u64) -> Self {
        Self {
            n_qubits,
            per_pair,
            noise: NoiseSpec::NONE,
            seed,
            measure: MeasureOptions::default(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_measure(mut self, measure: MeasureOptions) -> Self {
        self.measure = measure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_qubits(self.n_qubits)?;
        if self.per_pair == 0 {
            return Err(Error::InvalidSpec("per_pair must be positive".into()));
        }
        self.noise.validate(self.n_qubits)
    }

    /// All `(z, r)` pairs of mixed states, `z` outer, `r` inner.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let d = 1usize << self.n_qubits;
        (0..=d - 2)
            .flat_map(|z| (2..=d - z).map(move |r| (z, r)))
            .collect()
    }

    /// `2·M·2ⁿ⁻¹(2ⁿ − 1)`.
    pub fn total_samples(&self) -> usize {
        let d = 1usize << self.n_qubits;
        2 * self.per_pair * (d / 2) * (d - 1)
    }

    /// State spec of sample `index`: mixed samples first, then pure ones.
    fn state_spec(&self, index: usize) -> Result<StateSpec> {
        let pairs = self.pairs();
        let half = pairs.len() * self.per_pair;
        let (pure, k) = if index < half {
            (false, index)
        } else {
            (true, index - half)
        };
        let (z, r) = pairs[k / self.per_pair];
        if pure {
            StateSpec::pure(self.n_qubits, z)
        } else {
            StateSpec::mixed(self.n_qubits, z, r)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub zeros: usize,
    pub rank: usize,
    pub pure: bool,
    pub noise_strength: f64,
    pub measurements: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Model input (possibly noisy).
    pub record: MeasurementRecord,
    /// Clean state in the output-parameter layout.
    pub target_params: Vec<f64>,
    pub target_purity: f64,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn target_state(&self) -> Result<DensityMatrix> {
        let raw = RawReconstruction::new(self.record.n_qubits(), self.target_params.clone())?;
        Ok(DensityMatrix::from_trusted(vector_to_hermitian(&raw)?))
    }

    /// Target decodes to a valid state whose purity matches `target_purity`.
    pub fn validate(&self) -> Result<()> {
        let rho = self.target_state()?;
        rho.validate()?;
        let p = purity(&rho);
        if (p - self.target_purity).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "stored purity {} vs recomputed {p}",
                self.target_purity
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.spec.n_qubits
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn mixed_count(&self) -> usize {
        self.samples.iter().filter(|s| !s.meta.pure).count()
    }

    pub fn mean_measurements(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.meta.measurements as f64).sum::<f64>() / self.len() as f64
    }
}

fn build_sample(spec: &DatasetSpec, index: usize) -> Result<Sample> {
    let state_spec = spec.state_spec(index)?;
    let mut state_rng = Rng::derive(mix_seed(spec.seed, STATE_STREAM), index as u64);
    let rho = generate_state(&mut state_rng, &state_spec)?;
    let mut noise_rng = Rng::derive(mix_seed(spec.seed, NOISE_STREAM), index as u64);
    let (record, _) = noisy_pipeline_with(&mut noise_rng, &rho, &spec.noise, &spec.measure)?;
    Ok(Sample {
        meta: SampleMeta {
            zeros: state_spec.zeros,
            rank: state_spec.rank,
            pure: state_spec.pure,
            noise_strength: spec.noise.strength,
            measurements: record.performed_count(),
        },
        target_params: encode_params(&rho),
        target_purity: purity(&rho),
        record,
    })
}

/// Builds every sample of `spec`; deterministic in `spec.seed` regardless of
/// thread count.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let samples = (0..spec.total_samples())
        .into_par_iter()
        .map(|k| build_sample(spec, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: *spec,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.90,
            val: 0.05,
            test: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded split stratified by `(pure, zeros)`: every stratum is shuffled and
/// cut by the fractions (rounded per stratum). Index lists come back sorted.
pub fn split(ds: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Split> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total = fractions.train + fractions.val + fractions.test;
    let all_valid = [fractions.train, fractions.val, fractions.test]
        .iter()
        .all(|f| (0.0..=1.0).contains(f));
    if !all_valid || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec(format!("split fractions {fractions:?}")));
    }
    let mut strata: std::collections::BTreeMap<(usize, bool), Vec<usize>> = Default::default();
    for (i, s) in ds.samples.iter().enumerate() {
        strata.entry((s.meta.zeros, s.meta.pure)).or_default().push(i);
    }
    let key = mix_seed(seed, SPLIT_STREAM);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for ((zeros, pure), mut idx) in strata {
        let mut rng = Rng::derive(key, (zeros as u64) << 1 | pure as u64);
        rng.shuffle(&mut idx);
        let n = idx.len();
        let n_test = (fractions.test * n as f64).round() as usize;
        let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_test);
        out.test.extend_from_slice(&idx[..n_test]);
        out.val.extend_from_slice(&idx[n_test..n_test + n_val]);
        out.train.extend_from_slice(&idx[n_test + n_val..]);
    }
    for (name, part, frac) in [
        ("train", &out.train, fractions.train),
        ("validation", &out.val, fractions.val),
        ("test", &out.test, fractions.test),
    ] {
        if part.is_empty() && frac > 0.0 {
            return Err(Error::TooSmall(format!(
                "{name} split is empty for {} samples",
                ds.len()
            )));
        }
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

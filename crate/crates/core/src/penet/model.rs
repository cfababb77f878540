use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{Dropout, Layer, Linear, PeLinear};
use super::tensor::Tensor;
use crate::numerics::Rng;
use crate::qstate::check_qubits;
use crate::tqst::{encode_input, MeasurementRecord};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TQSTMDL1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Tomography,
    Purity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mlp,
    Pemlp,
    Combined,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tomography" | "tqst" => Ok(Task::Tomography),
            "purity" => Ok(Task::Purity),
            _ => Err(Error::InvalidConfig(format!("unknown task {s:?}"))),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Family::Mlp),
            "pemlp" => Ok(Family::Pemlp),
            "combined" => Ok(Family::Combined),
            _ => Err(Error::InvalidConfig(format!("unknown family {s:?}"))),
        }
    }
}

/// Architecture description. `pe_features` lists the hidden channel counts
/// of the equivariant stack (always followed by a layer back to 2 channels
/// and the readout); `dense_hidden` lists the hidden Linear widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub n_qubits: usize,
    pub family: Family,
    pub pe_features: Vec<usize>,
    pub dense_hidden: Vec<usize>,
    /// Dropout probability before the output Linear; 0 disables it.
    pub dropout: f64,
}

impl ModelConfig {
    /// Reference architectures: MLP 2×32; PEMLP with one 64-feature layer;
    /// combined 3×32 features plus a 512-neuron layer, with dropout 0.5 for
    /// purity.
    pub fn standard(task: Task, family: Family, n_qubits: usize) -> Self {
        let (pe_features, dense_hidden, dropout) = match family {
            Family::Mlp => (vec![], vec![32, 32], 0.0),
            Family::Pemlp => (vec![64], vec![], 0.0),
            Family::Combined => (
                vec![32, 32, 32],
                vec![512],
                if task == Task::Purity { 0.5 } else { 0.0 },
            ),
        };
        Self {
            task,
            n_qubits,
            family,
            pe_features,
            dense_hidden,
            dropout,
        }
    }

    pub fn input_len(&self) -> usize {
        let n = 1usize << (2 * self.n_qubits);
        match self.family {
            Family::Mlp => n,
            _ => 2 * n,
        }
    }

    pub fn output_len(&self) -> usize {
        match self.task {
            Task::Tomography => 1 << (2 * self.n_qubits),
            Task::Purity => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_qubits(self.n_qubits).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.pe_features.contains(&0) || self.dense_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        match self.family {
            Family::Mlp if !self.pe_features.is_empty() => bad("MLP has no equivariant layers"),
            Family::Pemlp if self.pe_features.is_empty() || !self.dense_hidden.is_empty() => {
                bad("PEMLP needs equivariant layers and no hidden Linear layers")
            }
            Family::Combined if self.pe_features.is_empty() || self.dense_hidden.is_empty() => {
                bad("combined model needs both equivariant and hidden Linear layers")
            }
            _ => Ok(()),
        }
    }
}

/// Sequential network. Hand-assembled stacks carry no config and cannot be
/// checkpointed.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: Option<ModelConfig>,
    layers: Vec<Layer>,
}

/// Activations recorded by a forward pass, consumed by [`Model::backward`].
#[derive(Clone, Debug, Default)]
pub struct Graph {
    /// Input of every layer followed by the network output.
    acts: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Output of layer `k` (input of layer `k + 1`).
    pub fn activation(&self, k: usize) -> Option<&[f64]> {
        self.acts.get(k + 1).map(Vec::as_slice)
    }
}

pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let cells = 1usize << (2 * cfg.n_qubits);
    let mut layers = Vec::new();
    let mut width = cells;
    if cfg.family != Family::Mlp {
        let mut c = 2;
        for &f in &cfg.pe_features {
            layers.push(Layer::PeLinear(PeLinear::new(&mut rng, c, f)));
            layers.push(Layer::Relu);
            c = f;
        }
        layers.push(Layer::PeLinear(PeLinear::new(&mut rng, c, 2)));
        layers.push(Layer::Readout);
    }
    let has_head = cfg.family != Family::Pemlp || cfg.task == Task::Purity;
    if has_head {
        for &h in &cfg.dense_hidden {
            layers.push(Layer::Linear(Linear::new(&mut rng, width, h)));
            layers.push(Layer::Relu);
            width = h;
        }
        if cfg.dropout > 0.0 {
            layers.push(Layer::Dropout(Dropout { p: cfg.dropout }));
        }
        layers.push(Layer::Linear(Linear::new(&mut rng, width, cfg.output_len())));
    }
    Ok(Model {
        config: Some(cfg.clone()),
        layers,
    })
}

impl Model {
    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self {
            config: None,
            layers,
        }
    }

    pub fn config(&self) -> Option<&ModelConfig> {
        self.config.as_ref()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Parameter tensors in declaration order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.values().iter().copied()).collect()
    }

    /// Network input for a record: the raw `4ⁿ` outcomes for an MLP, the
    /// two-channel grid for equivariant stacks.
    pub fn input_for(&self, rec: &MeasurementRecord) -> Vec<f64> {
        match self.layers.first() {
            Some(Layer::PeLinear(_)) => encode_input(rec).to_flat(),
            _ => rec.values().to_vec(),
        }
    }

    fn run(&self, x: &[f64], mut rng: Option<&mut Rng>) -> Result<Graph> {
        let mut g = Graph {
            acts: Vec::with_capacity(self.layers.len() + 1),
            masks: Vec::with_capacity(self.layers.len()),
        };
        g.acts.push(x.to_vec());
        for layer in &self.layers {
            let input = g.acts.last().expect("input pushed");
            let mask = match (layer, rng.as_deref_mut()) {
                (Layer::Dropout(d), Some(r)) => Some(d.mask(r, input.len())),
                _ => None,
            };
            let y = layer.forward(input, mask.as_deref())?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("activation".into()));
            }
            g.masks.push(mask);
            g.acts.push(y);
        }
        Ok(g)
    }

    /// Inference-mode forward pass (dropout off).
    pub fn forward(&self, x: &[f64]) -> Result<Graph> {
        self.run(x, None)
    }

    /// Training-mode forward pass; dropout masks are drawn from `rng`.
    pub fn forward_train(&self, x: &[f64], rng: &mut Rng) -> Result<Graph> {
        self.run(x, Some(rng))
    }

    /// Accumulates parameter gradients for `d loss / d output = grad_out`
    /// and returns the gradient with respect to the input.
    pub fn backward(&mut self, graph: &Graph, grad_out: &[f64]) -> Result<Vec<f64>> {
        if graph.acts.len() != self.layers.len() + 1 || grad_out.len() != graph.output().len() {
            return Err(Error::GraphNotBuilt);
        }
        let mut g = grad_out.to_vec();
        for (k, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.backward(&graph.acts[k], &g, graph.masks[k].as_deref())?;
        }
        Ok(g)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.acts.pop().unwrap_or_default())
    }

    /// Order-preserving; samples run in parallel on a shared model.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn predict_record(&self, rec: &MeasurementRecord) -> Result<Vec<f64>> {
        self.predict(&self.input_for(rec))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let cfg = self
            .config
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model has no config to save".into()))?;
        let json = serde_json::to_vec(cfg)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&(self.parameter_count() as u64).to_le_bytes())?;
        for t in self.params() {
            for v in t.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let truncated = || Error::Format("truncated checkpoint".into());
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes.get(*pos..*pos + n).ok_or_else(truncated)?;
            *pos += n;
            Ok(s)
        };
        let mut pos = 0;
        if take(&mut pos, 8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize;
        let cfg: ModelConfig = serde_json::from_slice(take(&mut pos, len)?)?;
        let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().expect("8 bytes")) as usize;
        let mut model = build_model(&cfg, 0)?;
        if count != model.parameter_count() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} parameters, config implies {}",
                model.parameter_count()
            )));
        }
        for t in model.params_mut() {
            for v in t.values_mut() {
                *v = f64::from_le_bytes(take(&mut pos, 8)?.try_into().expect("8 bytes"));
            }
        }
        if pos != bytes.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        Ok(model)
    }
}

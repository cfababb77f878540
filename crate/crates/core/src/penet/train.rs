use serde::{Deserialize, Serialize};

use super::model::Model;
use super::optim::{mse_loss, Adam};
use crate::numerics::{mix_seed, Rng};
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// Empty when no validation set was given.
    pub val_loss: Vec<f64>,
}

/// Mean per-element squared error over `examples`, inference mode.
pub fn evaluate_loss(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for ex in examples {
        total += mse_loss(&model.predict(&ex.input)?, &ex.target).0;
    }
    Ok(total / examples.len() as f64)
}

pub fn train(model: &mut Model, train_set: &[Example], val_set: &[Example], cfg: &TrainConfig) -> Result<TrainHistory> {
    train_with(model, train_set, val_set, cfg, |_, _| {})
}

/// Minibatch Adam on the mean squared error. Batches are taken from a fresh
/// seeded permutation every epoch; `on_epoch(epoch, history)` runs after each.
pub fn train_with(
    model: &mut Model,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &TrainHistory),
) -> Result<TrainHistory> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidConfig(format!("{cfg:?}")));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    model.zero_grad();
    for epoch in 0..cfg.epochs {
        Rng::derive(mix_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64).shuffle(&mut order);
        let mut dropout_rng = Rng::derive(mix_seed(cfg.seed, DROPOUT_STREAM), epoch as u64);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                let ex = &train_set[k];
                let graph = model.forward_train(&ex.input, &mut dropout_rng)?;
                let (loss, mut grad) = mse_loss(graph.output(), &ex.target);
                grad.iter_mut().for_each(|g| *g *= scale);
                model.backward(&graph, &grad)?;
                epoch_loss += loss;
            }
            adam.step(&mut model.params_mut());
            model.zero_grad();
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        history.train_loss.push(train_loss);
        if !val_set.is_empty() {
            history.val_loss.push(evaluate_loss(model, val_set)?);
        }
        on_epoch(epoch, &history);
    }
    Ok(history)
}

//! Training and inference over a temporal graph sequence.
//!
//! A training sample for snapshot `t` is the history `t-h+1 ..= t` (clipped
//! at 0): the evolver starts from the learned initial weights at the first
//! snapshot of the history, the loss is the summed cross-entropy on
//! snapshot `t`, and gradients flow back through the whole history. One Adam
//! step is taken per sample. Inference on snapshot `t` replays the same
//! history, so predictions never depend on how the sequence was chunked.

use alloc::vec::Vec;
use core::ops::Range;

use super::adam::Adam;
use super::matrix::Matrix;
use super::model::{argmax_rows, forward_on_tape, EvolveGcn, GraphInput};
use super::tape::Tape;
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub history_window: usize,
    /// (train, validation, test) fractions of the temporal sequence.
    pub split: [f64; 3],
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub seed: u64,
    /// Optional per-class loss weights.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, history_window: 6, split: [0.65, 0.10, 0.25], epochs: 200, patience: 20, seed: 0, class_weights: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split.iter().any(|&f| f < 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("split fractions {:?} must be >= 0 and sum to 1", self.split)));
        }
        if self.history_window == 0 {
            return Err(Error::InvalidParameter("history window must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Contiguous temporal split of `n` snapshots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// Validation and test sizes are rounded from their fractions; training
    /// takes the remainder at the front of the sequence.
    pub fn new(n: usize, fractions: [f64; 3]) -> Result<Self> {
        let n_test = math::round(fractions[2] * n as f64) as usize;
        let n_val = math::round(fractions[1] * n as f64) as usize;
        let n_train = n.saturating_sub(n_test + n_val);
        let split = Self { train: 0..n_train, validation: n_train..n_train + n_val, test: n_train + n_val..n };
        if split.train.is_empty() {
            return Err(Error::EmptySplit("training"));
        }
        if split.validation.is_empty() {
            return Err(Error::EmptySplit("validation"));
        }
        if split.test.is_empty() || n_train + n_val > n {
            return Err(Error::EmptySplit("test"));
        }
        Ok(split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample training loss.
    pub train_loss: f64,
    /// Mean per-snapshot validation loss.
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

fn history(t: usize, window: usize) -> Range<usize> {
    (t + 1).saturating_sub(window)..t + 1
}

/// Loss on snapshot `t` and gradients of every parameter, history replayed
/// over `history_window` snapshots.
pub fn loss_and_gradients(
    model: &EvolveGcn,
    inputs: &[GraphInput],
    t: usize,
    history_window: usize,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let seq: Vec<&GraphInput> = inputs[history(t, history_window)].iter().collect();
    let logits = *forward_on_tape(&bound, &mut tape, &seq)?.last().expect("non-empty history");
    let labels = inputs[t].labels.clone().ok_or_else(|| Error::InvalidParameter(alloc::format!("snapshot {t} is unlabelled")))?;
    let weights = class_weights.map(|w| labels.iter().map(|&y| w.get(y).copied().unwrap_or(1.0)).collect());
    let loss = tape.cross_entropy(logits, labels, weights);
    let value = tape.value(loss).data[0];
    let grads = tape.backward(loss);
    Ok((value, bound.vars.iter().map(|&v| grads.get(&tape, v)).collect()))
}

/// Loss on snapshot `t` without gradients.
pub fn snapshot_loss(model: &EvolveGcn, inputs: &[GraphInput], t: usize, history_window: usize) -> Result<f64> {
    let logits = predict_logits(model, inputs, t, history_window)?;
    let labels = inputs[t].labels.as_deref().ok_or_else(|| Error::InvalidParameter(alloc::format!("snapshot {t} is unlabelled")))?;
    super::model::loss(&logits, labels)
}

/// Logits for snapshot `t`, warm-started over its history window.
pub fn predict_logits(model: &EvolveGcn, inputs: &[GraphInput], t: usize, history_window: usize) -> Result<Matrix> {
    let seq: Vec<&GraphInput> = inputs[history(t, history_window)].iter().collect();
    let out = super::model::forward_sequence(model, &seq)?;
    Ok(out.into_iter().last().expect("non-empty history"))
}

/// Predicted class per node for every snapshot in `range`.
pub fn predict(model: &EvolveGcn, inputs: &[GraphInput], range: Range<usize>, history_window: usize) -> Result<Vec<Vec<usize>>> {
    range.map(|t| predict_logits(model, inputs, t, history_window).map(|l| argmax_rows(&l))).collect()
}

/// Fit `model` on the training split with Adam, keeping the parameters with
/// the lowest validation loss.
pub fn train(model: &mut EvolveGcn, inputs: &[GraphInput], split: &Split, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if split.validation.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let shapes: Vec<(usize, usize)> = model.parameters().iter().map(|m| m.shape()).collect();
    let mut adam = Adam::new(config.learning_rate, &shapes);
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut epochs = Vec::new();
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for (step, t) in split.train.clone().enumerate() {
            let (loss, grads) = loss_and_gradients(model, inputs, t, config.history_window, config.class_weights.as_deref())?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            total += loss;
            adam.update(model.parameters_mut(), &grads);
        }
        let mut val = 0.0;
        for t in split.validation.clone() {
            val += snapshot_loss(model, inputs, t, config.history_window)?;
        }
        let stats =
            EpochStats { epoch, train_loss: total / split.train.len() as f64, validation_loss: val / split.validation.len() as f64 };
        if !stats.validation_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: split.train.len() });
        }
        epochs.push(stats);
        if stats.validation_loss < best.0 {
            best = (stats.validation_loss, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (best_validation_loss, best_epoch, best_model) = best;
    *model = best_model;
    Ok(TrainReport { epochs, best_epoch, best_validation_loss })
}

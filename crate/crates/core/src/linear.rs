//! Linear probabilistic classifier over sparse message features.
//!
//! Two logits (negative, positive), softmax output, trained by mini-batch
//! SGD on mean cross-entropy with a small L2 term on the weights. Each
//! epoch visits the training messages in an order keyed to message ids
//! (not file positions), so permuting the input file does not change the
//! trained model, and per-message gradients are reduced in message order,
//! so the result is bit-identical for any thread count.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Class, LabeledDataset, Message};
use crate::error::Error;
use crate::evaluate::{confusion, precision_recall_f1};
use crate::features::{
    featurize, FeatureVector, CHAR_SLOTS, CHAR_TABLE, FEATURE_DIM, HASH_BUCKETS,
    HASH_FUNCTION_ID,
};
use crate::rng::{derive_seed, fnv1a64, mix64};
use crate::Result;

/// SGD hyperparameters. Defaults: lr 0.05 decayed by 0.6 each epoch,
/// batches of 128, 15 epochs, L2 1e-6.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay_per_epoch: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            lr_decay_per_epoch: 0.6,
            epochs: 15,
            batch_size: 128,
            seed: 0,
            l2: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(Error::InvalidInput(
                "lr_decay_per_epoch must be in (0, 1]".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weights `[2 x FEATURE_DIM]` and bias `[2]`; row 0 scores the negative
/// class, row 1 the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: [Vec<f64>; 2],
    bias: [f64; 2],
}

impl LinearModel {
    /// Zero-initialized model: scores (0.5, 0.5) for every message.
    pub fn new() -> Self {
        LinearModel {
            weights: [vec![0.0; FEATURE_DIM], vec![0.0; FEATURE_DIM]],
            bias: [0.0, 0.0],
        }
    }

    pub fn weight(&self, row: usize, index: u32) -> f64 {
        self.weights[row][index as usize]
    }

    pub fn set_weight(&mut self, row: usize, index: u32, value: f64) {
        self.weights[row][index as usize] = value;
    }

    pub fn bias(&self) -> [f64; 2] {
        self.bias
    }

    pub fn set_bias(&mut self, bias: [f64; 2]) {
        self.bias = bias;
    }

    fn logits(&self, fv: &FeatureVector) -> [f64; 2] {
        let mut z = self.bias;
        for &(idx, val) in fv.entries() {
            z[0] += self.weights[0][idx as usize] * val;
            z[1] += self.weights[1][idx as usize] * val;
        }
        z
    }

    /// `(p_neg, p_pos)` via a numerically stable softmax; sums to 1.
    pub fn predict(&self, fv: &FeatureVector) -> (f64, f64) {
        let z = self.logits(fv);
        softmax2(z)
    }

    fn squared_weight_norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|row| row.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }
}

impl Default for LinearModel {
    fn default() -> Self {
        Self::new()
    }
}

fn softmax2(z: [f64; 2]) -> (f64, f64) {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let sum = e0 + e1;
    (e0 / sum, e1 / sum)
}

fn class_index(class: Class) -> usize {
    match class {
        Class::Negative => 0,
        Class::Positive => 1,
    }
}

/// Mean cross-entropy of a batch plus `l2/2 * ||W||^2`.
pub fn batch_loss(model: &LinearModel, batch: &[(&FeatureVector, Class)], l2: f64) -> f64 {
    let ce: f64 = batch
        .iter()
        .map(|(fv, class)| {
            let (p_neg, p_pos) = model.predict(fv);
            let p = match class {
                Class::Negative => p_neg,
                Class::Positive => p_pos,
            };
            -p.max(f64::MIN_POSITIVE).ln()
        })
        .sum();
    ce / batch.len() as f64 + 0.5 * l2 * model.squared_weight_norm()
}

/// Cross-entropy gradient of a batch, mean-normalized, without the L2
/// term (the trainer folds L2 into the update; checks add `l2 * w`).
pub struct CeGrad {
    /// feature index -> per-row gradient.
    pub weights: HashMap<u32, [f64; 2]>,
    pub bias: [f64; 2],
}

pub fn batch_ce_grad(model: &LinearModel, batch: &[(&FeatureVector, Class)]) -> CeGrad {
    // Per-message terms in parallel, reduced in batch order.
    let per_message: Vec<[f64; 2]> = batch
        .par_iter()
        .map(|(fv, class)| {
            let (p_neg, p_pos) = model.predict(fv);
            let mut gz = [p_neg, p_pos];
            gz[class_index(*class)] -= 1.0;
            gz
        })
        .collect();

    let mut weights: HashMap<u32, [f64; 2]> = HashMap::new();
    let mut bias = [0.0, 0.0];
    for ((fv, _), gz) in batch.iter().zip(&per_message) {
        bias[0] += gz[0];
        bias[1] += gz[1];
        for &(idx, val) in fv.entries() {
            let slot = weights.entry(idx).or_insert([0.0, 0.0]);
            slot[0] += gz[0] * val;
            slot[1] += gz[1] * val;
        }
    }
    let n = batch.len() as f64;
    for slot in weights.values_mut() {
        slot[0] /= n;
        slot[1] /= n;
    }
    bias[0] /= n;
    bias[1] /= n;
    CeGrad { weights, bias }
}

/// Result of training: the selected model and where it came from.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: LinearModel,
    /// Epoch (0-based) whose checkpoint won on validation F1, when any
    /// epoch had a defined F1; otherwise the final-epoch parameters are
    /// kept and this is `None`.
    pub best_epoch: Option<usize>,
    pub best_val_f1: Option<f64>,
}

/// Trains on the dataset's train split, selecting the epoch checkpoint
/// with the best validation F1.
pub fn train_dataset(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(&ds.name, &ds.train()?, &ds.val()?, cfg)
}

pub fn train(
    name: &str,
    train_msgs: &[&Message],
    val_msgs: &[&Message],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_msgs.is_empty() {
        return Err(Error::SingleClassTraining { name: name.into() });
    }
    let has_pos = train_msgs.iter().any(|m| m.binary_class.is_positive());
    let has_neg = train_msgs.iter().any(|m| !m.binary_class.is_positive());
    if !has_pos || !has_neg {
        return Err(Error::SingleClassTraining { name: name.into() });
    }

    let featurized: Vec<(&str, FeatureVector, Class)> = train_msgs
        .par_iter()
        .map(|m| (m.id.as_str(), featurize(&tokenize(&m.text), &m.text), m.binary_class))
        .collect();
    let val_featurized: Vec<(FeatureVector, Class)> = val_msgs
        .par_iter()
        .map(|m| (featurize(&tokenize(&m.text), &m.text), m.binary_class))
        .collect();

    let mut model = LinearModel::new();
    let mut best: Option<(f64, usize, LinearModel)> = None;
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        // Epoch order is a function of (seed, epoch, message id) so that
        // input file order cannot influence the trained parameters.
        let epoch_seed = derive_seed(cfg.seed, &format!("epoch/{epoch}"));
        let mut order: Vec<usize> = (0..featurized.len()).collect();
        order.sort_by_key(|&i| (mix64(epoch_seed ^ fnv1a64(featurized[i].0.as_bytes())), featurized[i].0));

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&FeatureVector, Class)> = chunk
                .iter()
                .map(|&i| (&featurized[i].1, featurized[i].2))
                .collect();
            let grad = batch_ce_grad(&model, &batch);
            // w -= lr * (g_ce + l2 * w), with the dense L2 part applied
            // as a scale so only touched features need visiting.
            if cfg.l2 > 0.0 {
                let scale = 1.0 - lr * cfg.l2;
                for row in &mut model.weights {
                    for w in row.iter_mut() {
                        *w *= scale;
                    }
                }
            }
            for (&idx, g) in &grad.weights {
                model.weights[0][idx as usize] -= lr * g[0];
                model.weights[1][idx as usize] -= lr * g[1];
            }
            model.bias[0] -= lr * grad.bias[0];
            model.bias[1] -= lr * grad.bias[1];
        }
        lr *= cfg.lr_decay_per_epoch;

        if !val_featurized.is_empty() {
            let items: Vec<(f64, Class)> = val_featurized
                .par_iter()
                .map(|(fv, class)| (model.predict(fv).1, *class))
                .collect();
            let prf = precision_recall_f1(&confusion(&items, 0.5));
            if let Some(f1) = prf.f1 {
                let improved = best.as_ref().map_or(true, |(b, _, _)| f1 > *b);
                if improved {
                    best = Some((f1, epoch, model.clone()));
                }
            }
        }
    }

    Ok(match best {
        Some((f1, epoch, snapshot)) => TrainOutcome {
            model: snapshot,
            best_epoch: Some(epoch),
            best_val_f1: Some(f1),
        },
        None => TrainOutcome {
            model,
            best_epoch: None,
            best_val_f1: None,
        },
    })
}

/// Scores a slice of messages in parallel, preserving order.
pub fn predict_messages(model: &LinearModel, messages: &[&Message]) -> Vec<(f64, f64)> {
    messages
        .par_iter()
        .map(|m| model.predict(&featurize(&tokenize(&m.text), &m.text)))
        .collect()
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FeatureSpace {
    hash_function: String,
    hash_buckets: usize,
    char_slots: usize,
    char_table: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    feature_space: FeatureSpace,
    bias: Vec<f64>,
    /// Nonzero weights per row as (index, value) pairs.
    weights: Vec<Vec<(u32, f64)>>,
}

pub fn model_to_json(model: &LinearModel) -> String {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        kind: "linear-classifier".to_string(),
        feature_space: FeatureSpace {
            hash_function: HASH_FUNCTION_ID.to_string(),
            hash_buckets: HASH_BUCKETS,
            char_slots: CHAR_SLOTS,
            char_table: CHAR_TABLE.iter().collect(),
        },
        bias: model.bias.to_vec(),
        weights: model
            .weights
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(i, w)| (i as u32, *w))
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn model_from_json(json: &str, origin: &str) -> Result<LinearModel> {
    let bad = |message: String| Error::BadModelFile {
        path: origin.to_string(),
        message,
    };
    let file: ModelFile =
        serde_json::from_str(json).map_err(|e| bad(format!("parse error: {e}")))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    if file.kind != "linear-classifier" {
        return Err(bad(format!("unsupported kind {:?}", file.kind)));
    }
    let fs = &file.feature_space;
    let expected_table: String = CHAR_TABLE.iter().collect();
    if fs.hash_function != HASH_FUNCTION_ID
        || fs.hash_buckets != HASH_BUCKETS
        || fs.char_slots != CHAR_SLOTS
        || fs.char_table != expected_table
    {
        return Err(bad("feature space does not match this build".into()));
    }
    if file.bias.len() != 2 || file.weights.len() != 2 {
        return Err(bad("expected exactly two classes".into()));
    }
    let mut model = LinearModel::new();
    model.bias = [file.bias[0], file.bias[1]];
    for (row, entries) in file.weights.iter().enumerate() {
        for &(idx, w) in entries {
            if idx as usize >= FEATURE_DIM {
                return Err(bad(format!("weight index {idx} out of range")));
            }
            if !w.is_finite() {
                return Err(bad(format!("non-finite weight at index {idx}")));
            }
            model.weights[row][idx as usize] = w;
        }
    }
    if !model.bias.iter().all(|b| b.is_finite()) {
        return Err(bad("non-finite bias".into()));
    }
    Ok(model)
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::report::write_atomic(path, model_to_json(model).as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    model_from_json(&json, &path.display().to_string())
}

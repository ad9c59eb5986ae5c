//! Optimization: cross-entropy, global-norm clipping, Adam, and a training
//! loop that validates every few hundred updates and keeps the best model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::lexicon::{EncodedSentence, PAD_ID};
use crate::model::{Dropout, SwmConfig, SwmModel, SwmParams, Variant};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub validate_every: usize,
    /// Examples per optimizer update.
    pub batch_size: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            epochs: 20,
            validate_every: 200,
            batch_size: 1,
            seed: 0,
            variant: Variant::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        if self.epochs == 0 || self.validate_every == 0 || self.batch_size == 0 {
            return Err(Error::invalid(
                "epochs, validate-every and batch size must be at least 1",
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSentence {
    pub sentence: EncodedSentence,
    pub label: usize,
}

/// `-ln p[label]` for a probability vector.
pub fn cross_entropy(p: &[f64], label: usize) -> Result<f64> {
    let &py = p.get(label).ok_or(Error::InvalidLabel(label))?;
    if label > 1 {
        return Err(Error::InvalidLabel(label));
    }
    if !(py > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(-py.ln())
}

/// `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel(label));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

pub fn global_norm<P: ParamSet>(grads: &P) -> f64 {
    grads
        .tensors()
        .iter()
        .map(|(_, t)| t.sum_squares())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns whether scaling happened.
pub fn clip_gradients<P: ParamSet>(grads: &mut P, max_norm: f64) -> bool {
    let norm = global_norm(grads);
    if norm <= max_norm {
        return false;
    }
    let scale = max_norm / norm;
    for (_, t) in grads.tensors_mut() {
        t.data_mut().iter_mut().for_each(|g| *g *= scale);
    }
    true
}

/// Adam first/second moments mirroring a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        OptimizerState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Gradients are zeroed afterwards.
pub fn adam_step<P: ParamSet>(
    params: &mut P,
    grads: &mut P,
    state: &mut OptimizerState,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;
    for (((_, p), (_, g)), (m, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors_mut())
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        let (p, g) = (p.data_mut(), g.data_mut());
        for (((p, g), m), v) in p
            .iter_mut()
            .zip(g.iter_mut())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * *g;
            *v = b2 * *v + (1.0 - b2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            *g = 0.0;
        }
    }
}

/// Fraction of examples whose argmax prediction matches the label (dropout off).
pub fn evaluate(model: &SwmModel, data: &[LabeledSentence], variant: Variant) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let correct = predictions(model, data, variant)?
        .iter()
        .zip(data)
        .filter(|(p, ex)| **p == ex.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Predicted labels in dataset order; computed in parallel.
pub fn predictions(model: &SwmModel, data: &[LabeledSentence], variant: Variant) -> Result<Vec<usize>> {
    data.par_iter()
        .map(|ex| {
            model
                .forward(&ex.sentence, variant, &mut Dropout::Off)
                .map(|t| t.predicted())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub update: usize,
    /// Mean training loss since the previous row.
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

pub fn format_log(rows: &[LogRow]) -> String {
    let mut out = String::from("update\ttrain_loss\tvalid_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\n",
            r.update, r.train_loss, r.valid_accuracy
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation accuracy (earliest on ties).
    pub model: SwmModel,
    pub best_valid_accuracy: f64,
    pub best_update: usize,
    pub initial_valid_accuracy: f64,
    pub updates: usize,
    pub log: Vec<LogRow>,
}

fn zero_pad_rows(grads: &mut SwmParams) {
    grads.word_embedding.row_mut(PAD_ID).fill(0.0);
    grads.sememe_embedding.row_mut(PAD_ID).fill(0.0);
}

/// Trains a freshly initialized model.
///
/// Runs `epochs` passes over a seed-shuffled order with one optimizer
/// update per `batch_size` examples. Validation accuracy is measured every
/// `validate_every` updates and once more after the last update if that
/// update was not already a validation point.
pub fn train(
    model_config: &SwmConfig,
    train_set: &[LabeledSentence],
    valid_set: &[LabeledSentence],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SwmModel::init(model_config.clone(), &mut rng)?;
    let variant = config.variant;
    let initial_valid_accuracy = evaluate(&model, valid_set, variant)?;

    let mut state = OptimizerState::new(&model.params);
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, SwmParams)> = None;
    let (mut window_loss, mut window_count) = (0.0, 0usize);
    let mut update = 0usize;
    let rate = model.config.dropout;

    let mut validate = |model: &SwmModel, update: usize, loss: f64, log: &mut Vec<LogRow>| -> Result<()> {
        let acc = evaluate(model, valid_set, variant)?;
        log::info!("update {update}: train loss {loss:.4}, valid acc {acc:.4}");
        log.push(LogRow {
            update,
            train_loss: loss,
            valid_accuracy: acc,
        });
        if best.as_ref().map_or(true, |(b, _, _)| acc > *b) {
            best = Some((acc, update, model.params.clone()));
        }
        Ok(())
    };

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train_set[i];
                let loss = model.loss_and_grad(
                    &ex.sentence,
                    ex.label,
                    variant,
                    &mut Dropout::On { rate, rng: &mut rng },
                    &mut grads,
                    scale,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { update, loss });
                }
                window_loss += loss;
                window_count += 1;
            }
            zero_pad_rows(&mut grads);
            clip_gradients(&mut grads, config.clip_norm);
            adam_step(&mut model.params, &mut grads, &mut state, config);
            update += 1;
            if update % config.validate_every == 0 {
                let mean = window_loss / window_count.max(1) as f64;
                validate(&model, update, mean, &mut log)?;
                (window_loss, window_count) = (0.0, 0);
            }
        }
    }
    if update % config.validate_every != 0 {
        let mean = window_loss / window_count.max(1) as f64;
        validate(&model, update, mean, &mut log)?;
    }

    let (best_valid_accuracy, best_update, params) = best.expect("validated at least once");
    model.params = params;
    Ok(TrainOutcome {
        model,
        best_valid_accuracy,
        best_update,
        initial_valid_accuracy,
        updates: update,
        log,
    })
}

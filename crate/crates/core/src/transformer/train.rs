//! Mini-batch fine-tuning loop and optional language-model pre-training.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{forward_backward, predict, EncodedInput, ModelConfig, ModelParams, Objective};
use super::optim::{adam_step, AdamConfig, AdamState};
use crate::datasim::metrics::{evaluate, Metrics};
use crate::error::{Error, Result};

/// One classification example: encoded input plus gold label indices.
#[derive(Debug, Clone)]
pub struct LabeledInput {
    pub input: EncodedInput,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Epochs of next-token pre-training before fine-tuning (0 = none).
    #[serde(default)]
    pub lm_pretrain_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
            lm_pretrain_epochs: 0,
        }
    }
}

/// Running metrics over one epoch's training forward passes (computed
/// before each batch's update).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub f1: f64,
    pub accuracy: f64,
}

// Independent ChaCha streams off one seed.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_LM: u64 = 4;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Positive-class decisions from logits (sigmoid > 0.5).
pub fn decide(logits: &[f64]) -> Vec<usize> {
    logits
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn add_grads(acc: &mut [Option<Array2<f64>>], grads: Vec<Option<Array2<f64>>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        if let Some(g) = g {
            match a {
                Some(a) => *a += &g,
                None => *a = Some(g),
            }
        }
    }
}

fn scale_grads(acc: &mut [Option<Array2<f64>>], k: f64) {
    for g in acc.iter_mut().flatten() {
        g.mapv_inplace(|v| v * k);
    }
}

/// Fresh parameters for `model`, deterministic in `seed`.
pub fn init_params(model: &ModelConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::init(model, &mut rng_for(seed, STREAM_INIT))
}

/// Fine-tunes freshly initialized parameters on `data`.
pub fn train(
    data: &[LabeledInput],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    let params = init_params(model, cfg.seed)?;
    train_from(params, data, cfg)
}

/// Fine-tunes `params` on `data`.
pub fn train_from(
    mut params: ModelParams,
    data: &[LabeledInput],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    for item in data {
        item.input.check(&params.config)?;
    }
    let mut state = AdamState::new(&params.tensors);
    let mut shuffle = rng_for(cfg.seed, STREAM_SHUFFLE);
    let mut drop_rng = rng_for(cfg.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut predicted = Vec::with_capacity(data.len());
        let mut gold = Vec::with_capacity(data.len());
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Option<Array2<f64>>> = vec![None; params.tensors.len()];
            for &i in batch {
                let item = &data[i];
                let pass = forward_backward(
                    &item.input,
                    &params,
                    Objective::Classification(&item.gold),
                    Some(&mut drop_rng),
                )?;
                if !pass.loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss {} at epoch {epoch}, batch {b}, example {i}",
                        pass.loss
                    )));
                }
                loss_sum += pass.loss;
                predicted.push(decide(pass.logits.as_deref().unwrap_or(&[])));
                gold.push(item.gold.clone());
                add_grads(&mut acc, pass.grads);
            }
            scale_grads(&mut acc, 1.0 / batch.len() as f64);
            adam_step(&mut params.tensors, &acc, &mut state, &cfg.adam);
            if !params.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite parameter after epoch {epoch}, batch {b}"
                )));
            }
        }
        let m = evaluate(&predicted, &gold)?;
        log::info!(
            "epoch {} loss {:.5} f1 {:.4} acc {:.4}",
            epoch + 1,
            loss_sum / data.len() as f64,
            m.f1,
            m.accuracy
        );
        history.push(EpochMetrics {
            epoch: epoch + 1,
            mean_loss: loss_sum / data.len() as f64,
            f1: m.f1,
            accuracy: m.accuracy,
        });
    }
    Ok((params, history))
}

/// Next-token pre-training on plain sequences (encoded under a causal mask).
/// Returns the mean loss of each epoch.
pub fn pretrain_lm(
    params: &mut ModelParams,
    data: &[EncodedInput],
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut state = AdamState::new(&params.tensors);
    let mut shuffle = rng_for(cfg.seed, STREAM_LM);
    let mut drop_rng = rng_for(cfg.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut acc: Vec<Option<Array2<f64>>> = vec![None; params.tensors.len()];
            for &i in batch {
                let pass = forward_backward(
                    &data[i],
                    params,
                    Objective::LanguageModel,
                    Some(&mut drop_rng),
                )?;
                if !pass.loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite LM loss at epoch {epoch}, example {i}"
                    )));
                }
                total += pass.loss;
                add_grads(&mut acc, pass.grads);
            }
            scale_grads(&mut acc, 1.0 / batch.len() as f64);
            adam_step(&mut params.tensors, &acc, &mut state, &cfg.adam);
        }
        losses.push(total / data.len() as f64);
    }
    Ok(losses)
}

/// Predictions (label index sets) for every input.
pub fn predict_all(params: &ModelParams, inputs: &[LabeledInput]) -> Result<Vec<Vec<usize>>> {
    inputs
        .iter()
        .map(|x| predict(&x.input, params).map(|z| decide(&z)))
        .collect()
}

pub fn evaluate_params(params: &ModelParams, inputs: &[LabeledInput]) -> Result<Metrics> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predicted = predict_all(params, inputs)?;
    let gold: Vec<Vec<usize>> = inputs.iter().map(|x| x.gold.clone()).collect();
    evaluate(&predicted, &gold)
}

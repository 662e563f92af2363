use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::model::{backward, forward, l2_penalty, predict};
use crate::optim::{Adam, AdamConfig};
use crate::params::Params;
use crate::spec::ModelSpec;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub l2_lambda: f64,
    pub rng_seed: u64,
    /// Build each epoch's order so every batch keeps the dataset's class ratio.
    pub stratified: bool,
    /// Visit at most this many (freshly drawn) samples per epoch.
    pub max_samples_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 128,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            l2_lambda: 1e-4,
            rng_seed: 42,
            stratified: false,
            max_samples_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.max_samples_per_epoch == Some(0) {
            return bad("max_samples_per_epoch must be positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Inputs `[n, length, channels]` (or `[n, length]`) with class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(NnError::InvalidTensor(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    /// Builds a single-channel dataset from equal-length sequences.
    pub fn from_sequences<R: AsRef<[f64]>>(rows: &[R], labels: Vec<usize>) -> Result<Self> {
        let t = Tensor::from_rows(rows)?;
        let (n, len) = (t.rows(), t.row_len());
        Self::new(t.reshape(vec![n, len, 1])?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub(crate) fn one_hot(&self, idx: &[usize], classes: usize) -> Tensor {
        let mut y = Tensor::zeros(&[idx.len(), classes]);
        for (row, &i) in idx.iter().enumerate() {
            y.data_mut()[row * classes + self.labels[i]] = 1.0;
        }
        y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training objective (data loss plus the l2 term) over the epoch's batches.
    pub loss: f64,
    /// Fraction of the epoch's samples classified correctly while training.
    pub accuracy: f64,
}

/// Trains from a seeded initialization.
pub fn train(spec: &ModelSpec, data: &Dataset, config: &TrainConfig) -> Result<(Params, Vec<EpochStats>)> {
    let params = Params::init(spec, config.rng_seed)?;
    train_from(spec, params, data, config)
}

/// Continues training existing params with a fresh optimizer state.
pub fn train_from(
    spec: &ModelSpec,
    mut params: Params,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(Params, Vec<EpochStats>)> {
    config.validate()?;
    spec.validate()?;
    params.check(spec)?;
    if config.epochs == 0 {
        return Ok((params, Vec::new()));
    }
    if data.is_empty() {
        return Err(NnError::InvalidConfig("empty training set".into()));
    }
    let classes = spec.output_classes;
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::InvalidConfig(format!("label {bad} out of range for {classes} classes")));
    }
    let loss_kind = spec.loss_kind();
    let mut adam = Adam::new(config.adam(), &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order = if config.stratified {
            stratified_order(&data.labels, classes, &mut rng)
        } else {
            let mut o: Vec<usize> = (0..data.len()).collect();
            o.shuffle(&mut rng);
            o
        };
        if let Some(cap) = config.max_samples_per_epoch {
            order.truncate(cap);
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let x = data.inputs.select_rows(idx);
            let y = data.one_hot(idx, classes);
            let (out, cache) = forward(spec, &params, &x)?;
            let loss = loss_kind.value(&y, &out) + l2_penalty(spec, &params, config.l2_lambda);
            if !loss.is_finite() || !out.is_finite() {
                return Err(NnError::NonFinite {
                    epoch,
                    batch: b,
                    learning_rate: config.learning_rate,
                });
            }
            loss_sum += loss * idx.len() as f64;
            correct += out
                .argmax_rows()
                .iter()
                .zip(idx)
                .filter(|(p, &i)| **p == data.labels[i])
                .count();
            let grads = backward(spec, &params, &cache, &y, config.l2_lambda)?;
            adam.step(&mut params, &grads);
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
        };
        debug!("epoch {epoch}: loss {:.5} acc {:.4}", stats.loss, stats.accuracy);
        history.push(stats);
    }
    Ok((params, history))
}

/// Orders samples so that each class is spread evenly through the epoch.
fn stratified_order(labels: &[usize], classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(labels.len());
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let n = members.len() as f64;
        for (j, i) in members.into_iter().enumerate() {
            keyed.push(((j as f64 + rng.gen::<f64>()) / n, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Fraction of `data` whose argmax prediction matches its label.
pub fn accuracy(spec: &ModelSpec, params: &Params, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let out = predict(spec, params, &data.inputs)?;
    let hits = out
        .argmax_rows()
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

use rayon::prelude::*;
use serde::Serialize;

use super::network::{loss_and_gradients, prepare_input, Network};
use super::optim::sgd_step;
use super::{argmax, ModelConfig, Params, PROB_FLOOR};
use crate::dataset::{derive_seed, ClassLabel, XorShift64Star, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Network-ready input with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: ClassLabel,
}

impl Sample {
    pub fn from_image(img: &RgbImage, label: ClassLabel, input_size: usize) -> Self {
        Self {
            input: prepare_input(img, input_size),
            label,
        }
    }
}

/// Mean of `−ln max(p_true, 1e-12)`.
pub fn cross_entropy(probs: &[[f64; NUM_CLASSES]], labels: &[ClassLabel]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("loss"));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, l)| -p[l.code()].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / probs.len() as f64)
}

/// Fraction of argmax predictions equal to the label.
pub fn accuracy_of(probs: &[[f64; NUM_CLASSES]], labels: &[ClassLabel]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, l)| argmax(p) == **l)
        .count();
    hits as f64 / probs.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    pub metrics: Vec<EpochMetrics>,
    /// 1-based epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

fn evaluate(config: &ModelConfig, params: &Params, samples: &[Sample]) -> Result<(f64, f64)> {
    let net = Network::new(config, params)?;
    let probs: Vec<[f64; NUM_CLASSES]> = samples
        .par_iter()
        .map(|s| net.probabilities(&s.input))
        .collect::<Result<_>>()?;
    let labels: Vec<ClassLabel> = samples.iter().map(|s| s.label).collect();
    Ok((cross_entropy(&probs, &labels)?, accuracy_of(&probs, &labels)))
}

/// Mini-batch training for exactly `max_epochs` epochs.
///
/// Batches are drawn from a fresh shuffle each epoch using
/// `derive_seed(config.seed, 1)`. Training loss and accuracy are running
/// values over the epoch's batches (before each update). The returned
/// parameters are those at the end of the epoch with the best validation
/// accuracy (lower validation loss, then earlier epoch, breaks ties); with
/// no validation samples the running training accuracy is used instead.
pub fn train(train_set: &[Sample], val_set: &[Sample], config: &ModelConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let mut params = Params::init(config)?;
    let mut velocity = params.zeros_like();
    let mut rng = XorShift64Star::new(derive_seed(config.seed, 1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut metrics = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, f64, usize, Params)> = None;

    for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads, hits) = loss_and_gradients(config, &params, &batch)?;
            loss_sum += loss * batch.len() as f64;
            correct += hits;
            sgd_step(
                &mut params,
                &grads,
                &mut velocity,
                config.learning_rate,
                config.momentum,
                config.nesterov,
            )?;
        }
        if !params.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "parameters diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        let n = train_set.len() as f64;
        let (train_loss, train_accuracy) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(config, &params, val_set)?;
            (Some(l), Some(a))
        };
        let score = (
            val_accuracy.unwrap_or(train_accuracy),
            val_loss.unwrap_or(train_loss),
        );
        let better = match &best {
            None => true,
            Some((acc, loss, _, _)) => score.0 > *acc || (score.0 == *acc && score.1 < *loss),
        };
        if better {
            best = Some((score.0, score.1, epoch, params.clone()));
        }
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }

    Ok(match best {
        Some((_, _, epoch, p)) => TrainOutcome {
            params: p,
            metrics,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            params,
            metrics,
            best_epoch: None,
        },
    })
}

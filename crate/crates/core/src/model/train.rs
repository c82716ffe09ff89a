use serde::{Deserialize, Serialize};

use super::backward::backward;
use super::ToyModel;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::{build_training_example, Selection, TrainingInput};
use crate::rng::{stream_rng, Stream};
use crate::types::{Codebook, TextCondition};

/// One tokenized training sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub tokens: Vec<usize>,
    pub valid: Vec<bool>,
    pub condition: TextCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean pre-update loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Plain SGD over the samples, one example per sequence per epoch, with
/// `config.epochs` epochs and step size `config.lr`.
///
/// Example `i` of epoch `e` draws its masking randomness from its own stream, so
/// the loss curve depends only on `config.seed`.
pub fn train(
    model: &mut ToyModel,
    samples: &[TrainSample],
    codebook: &Codebook,
    config: &Config,
    selection: Selection,
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if codebook.size() != model.shape.vocab {
        return Err(Error::DimMismatch {
            expected: model.shape.vocab,
            got: codebook.size(),
        });
    }
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        let mut counted = 0usize;
        for (i, s) in samples.iter().enumerate() {
            let id = (epoch * samples.len() + i) as u64;
            let mut rng = stream_rng(config.seed, Stream::Masking, id);
            let input = TrainingInput {
                tokens: &s.tokens,
                valid: &s.valid,
                codebook,
                condition: &s.condition,
            };
            let example = build_training_example(&input, config, selection, &mut rng)?;
            if !example.loss_mask.iter().any(|&m| m) {
                continue;
            }
            let (loss, grads) = backward(model, &example, config)?;
            total += loss;
            counted += 1;
            if config.lr > 0.0 {
                model.params.sgd_step(&grads, config.lr);
            }
        }
        epoch_losses.push(if counted > 0 { total / counted as f64 } else { 0.0 });
    }
    Ok(TrainReport { epoch_losses })
}

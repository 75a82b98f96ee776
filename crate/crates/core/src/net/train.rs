use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::backprop::{loss_and_gradients_into, Gradients, Reduction};
use super::optim::{sgd_step, OptimizerState};
use super::{MlpModel, NetError, NetShape};
use crate::data_io::{Dataset, SparseVector};
use crate::embedding::EmbeddingMatrix;
use crate::label_projection::{project_dataset, LabelTarget};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Probability of zeroing each output unit during training.
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub reduction: Reduction,
    /// Scale label targets to unit length.
    pub normalize_targets: bool,
    /// Reshuffle the training order every epoch.
    pub shuffle: bool,
    pub seed: u64,
    /// Gradient workers per minibatch. Results are reproducible for a fixed count.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.015,
            momentum: 0.9,
            weight_decay: 0.0005,
            dropout_rate: 0.5,
            epochs: 100,
            batch_size: 64,
            reduction: Reduction::Mean,
            normalize_targets: true,
            shuffle: true,
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let err = |m: &str| Err(NetError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return err("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err("dropout_rate must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive");
        }
        if self.threads == 0 {
            return err("threads must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean per-sample distance over each epoch.
    pub epoch_losses: Vec<f64>,
    /// Dataset indices of the points the network was trained on.
    pub point_ids: Vec<usize>,
}

/// Inverted-dropout multipliers: `1/(1-rate)` for kept units, 0 for dropped.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Trains the embedding network on `(input, target)` pairs.
pub fn train_on_targets(
    inputs: &[&SparseVector],
    targets: &[LabelTarget],
    shape: NetShape,
    config: &TrainConfig,
) -> Result<(MlpModel, Vec<f64>), NetError> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(NetError::NoLabeledPoints);
    }
    if inputs.len() != targets.len() {
        return Err(NetError::Shape(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    for x in inputs {
        if x.min_dim() > shape.input_dim {
            return Err(NetError::FeatureOutOfRange {
                index: x.min_dim() as u32 - 1,
                dim: shape.input_dim,
            });
        }
    }
    if let Some(t) = targets.iter().find(|t| t.0.len() != shape.output_dim) {
        return Err(NetError::Shape(format!(
            "target length {} differs from output dimension {}",
            t.0.len(),
            shape.output_dim
        )));
    }

    let mut model = MlpModel::init(shape, config.seed);
    let mut state = OptimizerState::zeros(shape);
    let workers = config.threads.max(1);
    let mut grads: Vec<Gradients> = (0..workers).map(|_| Gradients::zeros(shape)).collect();
    let mut rng = rng::derived(config.seed, rng::stream::NET_TRAIN);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for ids in order.chunks(config.batch_size) {
            let batch: Vec<(&SparseVector, &LabelTarget)> =
                ids.iter().map(|&i| (inputs[i], &targets[i])).collect();
            let masks: Option<Vec<Vec<f64>>> = (config.dropout_rate > 0.0).then(|| {
                (0..batch.len())
                    .map(|_| dropout_mask(shape.output_dim, config.dropout_rate, &mut rng))
                    .collect()
            });

            let loss = if workers == 1 {
                let g = &mut grads[0];
                g.clear();
                loss_and_gradients_into(&model, &batch, masks.as_deref(), config.reduction, batch.len(), g)
            } else {
                let per = batch.len().div_ceil(workers);
                let model_ref = &model;
                let losses: Vec<f64> = grads
                    .par_iter_mut()
                    .enumerate()
                    .map(|(w, g)| {
                        g.clear();
                        let lo = (w * per).min(batch.len());
                        let hi = ((w + 1) * per).min(batch.len());
                        if lo == hi {
                            return 0.0;
                        }
                        let m = masks.as_ref().map(|m| &m[lo..hi]);
                        loss_and_gradients_into(model_ref, &batch[lo..hi], m, config.reduction, batch.len(), g)
                    })
                    .collect();
                let (first, rest) = grads.split_first_mut().expect("at least one worker");
                for g in rest.iter() {
                    first.accumulate(g);
                }
                losses.iter().sum()
            };
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss(loss));
            }
            loss_sum += match config.reduction {
                Reduction::Mean => loss * batch.len() as f64,
                Reduction::Sum => loss,
            };
            sgd_step(&mut model, &mut state, &grads[0], config)?;
        }
        let mean = loss_sum / inputs.len() as f64;
        info!(
            "epoch {} mean loss {:.6} time {:.3}s",
            epoch + 1,
            mean,
            started.elapsed().as_secs_f64()
        );
        epoch_losses.push(mean);
    }
    Ok((model, epoch_losses))
}

/// Projects the dataset's label sets through `embedding` and trains the
/// network on the labeled points.
pub fn train(
    dataset: &Dataset,
    embedding: &EmbeddingMatrix,
    config: &TrainConfig,
    hidden: usize,
    use_bias: bool,
) -> Result<TrainOutcome, NetError> {
    if embedding.count() != dataset.num_labels() {
        return Err(NetError::Shape(format!(
            "label embedding has {} columns but the dataset has {} labels",
            embedding.count(),
            dataset.num_labels()
        )));
    }
    let projected = project_dataset(embedding, dataset, config.normalize_targets)
        .map_err(|e| NetError::Shape(e.to_string()))?;
    if projected.point_ids.is_empty() {
        return Err(NetError::NoLabeledPoints);
    }
    let inputs: Vec<&SparseVector> = projected
        .point_ids
        .iter()
        .map(|&i| &dataset.points()[i].features)
        .collect();
    let shape = NetShape {
        input_dim: dataset.num_features(),
        hidden,
        output_dim: embedding.dim(),
        use_bias,
    };
    let (model, epoch_losses) = train_on_targets(&inputs, &projected.targets, shape, config)?;
    Ok(TrainOutcome {
        model,
        epoch_losses,
        point_ids: projected.point_ids,
    })
}

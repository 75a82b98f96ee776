//! DeepWalk label embedding: random walks over the label graph fed to
//! skip-gram with negative sampling.

mod skipgram;
mod walks;

pub use skipgram::{train_skipgram, train_skipgram_model, SkipGram};
pub use walks::{generate_walks, WalkCorpus, WalkWeighting};

use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::label_graph::LabelGraph;

#[derive(Debug, Error, PartialEq)]
#[error("invalid DeepWalk config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct DeepWalkConfig {
    /// Embedding dimension.
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Context positions on each side of the center node.
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    /// Rate reached at the end of training under linear decay.
    pub min_learning_rate: f64,
    pub weighting: WalkWeighting,
    pub seed: u64,
    /// 1 for reproducible training; more threads run lock-free and non-deterministically.
    pub threads: usize,
}

impl Default for DeepWalkConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            negative_samples: 5,
            epochs: 5,
            initial_learning_rate: 0.025,
            min_learning_rate: 1e-4,
            weighting: WalkWeighting::Uniform,
            seed: 1,
            threads: 1,
        }
    }
}

impl DeepWalkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("dim", self.dim),
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negative_samples", self.negative_samples),
            ("epochs", self.epochs),
            ("threads", self.threads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be positive")));
            }
        }
        if self.window >= self.walk_length {
            return Err(ConfigError(format!(
                "window ({}) must be smaller than walk_length ({})",
                self.window, self.walk_length
            )));
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            return Err(ConfigError("initial_learning_rate must be positive".into()));
        }
        if !(self.min_learning_rate > 0.0 && self.min_learning_rate <= self.initial_learning_rate) {
            return Err(ConfigError(
                "min_learning_rate must be positive and at most initial_learning_rate".into(),
            ));
        }
        Ok(())
    }
}

/// Embeds every node of `graph` into `config.dim` dimensions.
///
/// Isolated nodes never appear in a training pair and keep their random
/// initialization.
pub fn embed_labels(graph: &LabelGraph, config: &DeepWalkConfig) -> Result<EmbeddingMatrix, ConfigError> {
    config.validate()?;
    let corpus = generate_walks(
        graph,
        config.walks_per_node,
        config.walk_length,
        config.seed,
        config.weighting,
    );
    Ok(train_skipgram(&corpus, config))
}

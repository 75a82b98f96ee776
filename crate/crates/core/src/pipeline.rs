//! End-to-end training and prediction.
//!
//! Training runs five stages in order: label graph, label embedding, label
//! targets, network training, clustering of the embedded training points.
//! Every learned array is rounded to `f32` as soon as it is produced, so the
//! in-memory model is exactly what a saved model file reloads to.

use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use thiserror::Error;

use crate::cluster::{kmeans, ClusterError, ClusterIndex};
use crate::data_io::{normalize_features, normalize_vector, Dataset, LabelSet, Normalization, SparseVector};
use crate::embedding::EmbeddingMatrix;
use crate::graph_embed::{embed_labels, ConfigError, DeepWalkConfig};
use crate::label_graph::{build_label_graph, LabelGraph};
use crate::net::{self, MlpModel, NetError, TrainConfig};
use crate::predictor::{PredictError, PredictParams, Prediction, PredictorParts};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("label graph: {0}")]
    Graph(String),
    #[error("label embedding: {0}")]
    Embedding(#[from] ConfigError),
    #[error("network training: {0}")]
    Network(#[from] NetError),
    #[error("clustering: {0}")]
    Cluster(#[from] ClusterError),
    #[error("prediction: {0}")]
    Predict(#[from] PredictError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Dataset size class selecting default network and embedding sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Small,
    Large,
}

impl Scale {
    pub fn hidden(self) -> usize {
        match self {
            Scale::Small => 256,
            Scale::Large => 512,
        }
    }

    pub fn embedding_dim(self) -> usize {
        match self {
            Scale::Small => 100,
            Scale::Large => 300,
        }
    }

    pub fn clusters(self) -> usize {
        match self {
            Scale::Small => 1,
            Scale::Large => 8,
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(Scale::Small),
            "large" => Ok(Scale::Large),
            other => Err(format!("unknown scale {other:?} (expected small or large)")),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Small => "small",
            Scale::Large => "large",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scale: Scale,
    pub deepwalk: DeepWalkConfig,
    pub train: TrainConfig,
    pub hidden: usize,
    pub use_bias: bool,
    pub clusters: usize,
    pub kmeans_iters: usize,
    pub kmeans_seed: u64,
    pub normalization: Normalization,
    pub threads: usize,
}

impl PipelineConfig {
    /// Defaults for `scale`, every stage seeded from `seed`.
    pub fn for_scale(scale: Scale, seed: u64) -> Self {
        Self {
            scale,
            deepwalk: DeepWalkConfig {
                dim: scale.embedding_dim(),
                seed,
                ..Default::default()
            },
            train: TrainConfig {
                seed,
                ..Default::default()
            },
            hidden: scale.hidden(),
            use_bias: true,
            clusters: scale.clusters(),
            kmeans_iters: 100,
            kmeans_seed: seed,
            normalization: Normalization::None,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.deepwalk.validate()?;
        self.train.validate()?;
        if self.hidden == 0 {
            return Err(NetError::Config("hidden size must be positive".into()).into());
        }
        if self.clusters == 0 {
            return Err(ClusterError::NoClusters.into());
        }
        Ok(())
    }

    /// Human-readable list of the stages `train_model` will run.
    pub fn plan(&self) -> Vec<String> {
        let dw = &self.deepwalk;
        let tr = &self.train;
        vec![
            format!("0. normalize features: {}", self.normalization),
            "1. build label co-occurrence graph".to_string(),
            format!(
                "2. DeepWalk label embedding: dim={} walks_per_node={} walk_length={} window={} negatives={} epochs={} lr={}",
                dw.dim, dw.walks_per_node, dw.walk_length, dw.window, dw.negative_samples, dw.epochs, dw.initial_learning_rate
            ),
            format!("3. project label sets to targets (unit length: {})", tr.normalize_targets),
            format!(
                "4. train network: hidden={} bias={} lr={} momentum={} weight_decay={} dropout={} epochs={} batch={}",
                self.hidden, self.use_bias, tr.learning_rate, tr.momentum, tr.weight_decay, tr.dropout_rate, tr.epochs, tr.batch_size
            ),
            format!("5. k-means on embedded training points: m={} max_iters={}", self.clusters, self.kmeans_iters),
        ]
    }
}

/// A trained model: everything prediction needs, with no reference to the
/// training file.
#[derive(Debug, Clone, PartialEq)]
pub struct DxmlModel {
    pub config: PipelineConfig,
    pub num_features: usize,
    pub num_labels: usize,
    pub label_embedding: EmbeddingMatrix,
    pub net: MlpModel,
    pub clusters: ClusterIndex,
    pub train_embeddings: EmbeddingMatrix,
    pub train_labels: Vec<LabelSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub timings: Vec<StageTiming>,
    pub epoch_losses: Vec<f64>,
    pub num_edges: usize,
    pub skipped_unlabeled: usize,
    pub wcss_history: Vec<f64>,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &'static str, f: impl FnOnce() -> T) -> T {
    let started = Instant::now();
    let out = f();
    let seconds = started.elapsed().as_secs_f64();
    info!("stage {stage}: {seconds:.3}s");
    timings.push(StageTiming { stage, seconds });
    out
}

/// Trains a model on `dataset`. `prior_graph` replaces the co-occurrence
/// graph when a label hierarchy is known.
pub fn train_model(
    dataset: &Dataset,
    config: &PipelineConfig,
    prior_graph: Option<LabelGraph>,
) -> Result<(DxmlModel, TrainReport), PipelineError> {
    config.validate()?;
    let mut timings = Vec::new();
    let dataset = normalize_features(dataset.clone(), config.normalization);

    let graph = match prior_graph {
        Some(g) if g.num_nodes() != dataset.num_labels() => {
            return Err(PipelineError::Graph(format!(
                "prior graph has {} nodes, dataset has {} labels",
                g.num_nodes(),
                dataset.num_labels()
            )))
        }
        Some(g) => g,
        None => timed(&mut timings, "label_graph", || build_label_graph(&dataset)),
    };
    info!("label graph: {} nodes, {} edges", graph.num_nodes(), graph.num_edges());

    let mut label_embedding = timed(&mut timings, "graph_embed", || embed_labels(&graph, &config.deepwalk))?;
    label_embedding.round_to_f32();

    let outcome = timed(&mut timings, "train_network", || {
        net::train(&dataset, &label_embedding, &config.train, config.hidden, config.use_bias)
    })?;
    let mut net = outcome.model;
    net.round_to_f32();

    let train_points: Vec<&SparseVector> = outcome.point_ids.iter().map(|&i| &dataset.points()[i].features).collect();
    let train_labels: Vec<LabelSet> = outcome.point_ids.iter().map(|&i| dataset.points()[i].labels.clone()).collect();
    let mut train_embeddings = net.embed_all(train_points.par_iter().copied())?;
    train_embeddings.round_to_f32();

    let clustering = timed(&mut timings, "cluster", || {
        kmeans(&train_embeddings, config.clusters, config.kmeans_iters, config.kmeans_seed)
    })?;
    let mut centers = clustering.index.centers().clone();
    centers.round_to_f32();
    let clusters = ClusterIndex::from_assignments(centers, clustering.index.assignments().to_vec())?;

    let report = TrainReport {
        timings,
        epoch_losses: outcome.epoch_losses,
        num_edges: graph.num_edges(),
        skipped_unlabeled: dataset.num_points() - outcome.point_ids.len(),
        wcss_history: clustering.wcss_history,
    };
    let model = DxmlModel {
        config: config.clone(),
        num_features: dataset.num_features(),
        num_labels: dataset.num_labels(),
        label_embedding,
        net,
        clusters,
        train_embeddings,
        train_labels,
    };
    Ok((model, report))
}

impl DxmlModel {
    pub fn parts(&self) -> PredictorParts<'_> {
        PredictorParts {
            net: &self.net,
            clusters: &self.clusters,
            train_embeddings: &self.train_embeddings,
            train_labels: &self.train_labels,
        }
    }

    /// Predicts one raw (unnormalized) feature vector.
    pub fn predict(&self, x: &SparseVector, params: &PredictParams) -> Result<Prediction, PredictError> {
        let mut x = x.clone();
        normalize_vector(&mut x, self.config.normalization);
        self.parts().predict(&x, params)
    }

    /// Predicts every point of `test`, in order. Points are processed in
    /// parallel; the output does not depend on the thread count.
    pub fn predict_dataset(&self, test: &Dataset, params: &PredictParams) -> Result<Vec<Prediction>, PipelineError> {
        if test.num_features() != self.num_features {
            return Err(PipelineError::Dimension(format!(
                "test data has {} features, model expects {}",
                test.num_features(),
                self.num_features
            )));
        }
        self.parts().check()?;
        let out = test
            .points()
            .par_iter()
            .map(|p| self.predict(&p.features, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(out)
    }
}

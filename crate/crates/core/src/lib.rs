//! Deep embedding for extreme multi-label classification.
//!
//! Labels are embedded by running DeepWalk on their co-occurrence graph. A
//! two-layer network then learns to map sparse feature vectors next to the
//! (averaged) embeddings of their labels. At test time a point is embedded,
//! routed to its nearest k-means cluster of embedded training points, and
//! scored from the labels of its k nearest neighbors there.
//!
//! | stage | module |
//! | ----- | ------ |
//! | dataset I/O | [`data_io`] |
//! | label graph | [`label_graph`] |
//! | label embedding | [`graph_embed`] |
//! | label targets | [`label_projection`] |
//! | feature network | [`net`] |
//! | clustering | [`cluster`] |
//! | k-NN prediction | [`predictor`] |
//! | evaluation | [`metrics`] |
//! | orchestration and persistence | [`pipeline`], [`model_file`], [`cli`] |

pub mod cli;
pub mod cluster;
pub mod data_io;
pub mod embedding;
pub mod graph_embed;
pub mod label_graph;
pub mod label_projection;
pub mod metrics;
pub mod model_file;
pub mod net;
pub mod pipeline;
pub mod predictor;
pub mod rng;

pub use cluster::{kmeans, ClusterIndex};
pub use data_io::{Dataset, LabelSet, SparseVector};
pub use embedding::EmbeddingMatrix;
pub use label_graph::{build_label_graph, LabelGraph};
pub use pipeline::{train_model, DxmlModel, PipelineConfig, Scale};
pub use predictor::{PredictParams, Prediction};

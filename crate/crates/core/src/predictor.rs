//! Test-time path: embed the query, route it to its nearest cluster, rank the
//! cluster's training points by distance, and score labels from the k nearest.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;
use std::str::FromStr;

use log::debug;
use thiserror::Error;

use crate::cluster::ClusterIndex;
use crate::data_io::{LabelSet, SparseVector};
use crate::embedding::{squared_distance, EmbeddingMatrix};
use crate::net::{MlpModel, NetError};

const INVERSE_DISTANCE_EPS: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Input(#[from] NetError),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("bad prediction line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    /// Euclidean distance to the query.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist_sq: f64,
    id: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact k-nearest neighbors of `query` among `candidates` (columns of `points`).
///
/// Returns `min(k, candidates.len())` neighbors by ascending distance, ties
/// broken by ascending id.
pub fn knn_search(points: &EmbeddingMatrix, candidates: &[u32], query: &[f64], k: usize) -> Vec<Neighbor> {
    assert!(k >= 1, "k must be at least 1");
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
    for &id in candidates {
        let entry = HeapEntry {
            dist_sq: squared_distance(points.column(id as usize), query),
            id,
        };
        if heap.len() < k {
            heap.push(entry);
        } else if entry < *heap.peek().expect("heap holds k entries") {
            heap.pop();
            heap.push(entry);
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|e| Neighbor {
            id: e.id,
            distance: e.dist_sq.sqrt(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Fraction of neighbors carrying the label.
    #[default]
    Uniform,
    /// Weights `1/(distance + 1e-8)`, normalized to sum to one.
    InverseDistance,
    /// Number of neighbors carrying the label.
    Count,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "inverse_distance" | "inverse-distance" => Ok(Weighting::InverseDistance),
            "count" | "sum" => Ok(Weighting::Count),
            other => Err(format!(
                "unknown weighting {other:?} (expected uniform, inverse_distance or count)"
            )),
        }
    }
}

/// Sparse label scores keyed by label id.
pub type Scores = BTreeMap<u32, f64>;

/// Scores labels from neighbor label sets (paired with their distances).
pub fn aggregate_labels(neighbors: &[(&LabelSet, f64)], weighting: Weighting) -> Scores {
    assert!(!neighbors.is_empty(), "at least one neighbor required");
    let weights: Vec<f64> = match weighting {
        Weighting::Uniform => vec![1.0 / neighbors.len() as f64; neighbors.len()],
        Weighting::Count => vec![1.0; neighbors.len()],
        Weighting::InverseDistance => {
            let raw: Vec<f64> = neighbors
                .iter()
                .map(|&(_, d)| 1.0 / (d + INVERSE_DISTANCE_EPS))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
    };
    let mut scores = Scores::new();
    if weighting == Weighting::Uniform {
        // count first, divide once: a label in every neighbor scores exactly 1
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for (labels, _) in neighbors {
            for l in labels.iter() {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        let k = neighbors.len() as f64;
        for (l, c) in counts {
            scores.insert(l, c as f64 / k);
        }
        return scores;
    }
    for ((labels, _), w) in neighbors.iter().zip(weights) {
        for l in labels.iter() {
            *scores.entry(l).or_insert(0.0) += w;
        }
    }
    scores
}

/// Labels of `scores` ordered by descending score, ties by ascending label.
pub fn ranked_labels(scores: &Scores) -> Vec<(u32, f64)> {
    let mut ranked: Vec<(u32, f64)> = scores.iter().map(|(&l, &s)| (l, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// The `p` best-scoring labels (fewer if fewer are scored).
pub fn top_p(scores: &Scores, p: usize) -> Vec<u32> {
    assert!(p >= 1, "p must be at least 1");
    ranked_labels(scores).into_iter().take(p).map(|(l, _)| l).collect()
}

/// Like [`top_p`] but pads with unscored labels in ascending order up to `p`
/// (bounded by `num_labels`).
pub fn top_p_padded(scores: &Scores, p: usize, num_labels: usize) -> Vec<u32> {
    let mut top = top_p(scores, p);
    let mut next = 0u32;
    while top.len() < p.min(num_labels) {
        if !scores.contains_key(&next) {
            top.push(next);
        }
        next += 1;
    }
    top
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Scores,
    pub top_labels: Vec<u32>,
}

impl Prediction {
    /// One `label:score` field per scored label, descending by score, tab-separated.
    pub fn to_line(&self, limit: Option<usize>) -> String {
        let mut out = String::new();
        let ranked = ranked_labels(&self.scores);
        let n = limit.unwrap_or(ranked.len()).min(ranked.len());
        for (i, (l, s)) in ranked[..n].iter().enumerate() {
            if i > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{l}:{s}");
        }
        out
    }
}

/// Parses a line written by [`Prediction::to_line`] back into scores.
pub fn parse_prediction_line(line: &str, lineno: usize) -> Result<Scores, PredictError> {
    let mut scores = Scores::new();
    for field in line.split(['\t', ' ']).filter(|f| !f.is_empty()) {
        let err = |message: String| PredictError::Parse { line: lineno, message };
        let (l, s) = field
            .split_once(':')
            .ok_or_else(|| err(format!("expected label:score, got {field:?}")))?;
        let l: u32 = l.parse().map_err(|_| err(format!("bad label {l:?}")))?;
        let s: f64 = s.parse().map_err(|_| err(format!("bad score {s:?}")))?;
        if !s.is_finite() || s < 0.0 {
            return Err(err(format!("score must be finite and non-negative, got {s}")));
        }
        if scores.insert(l, s).is_some() {
            return Err(err(format!("label {l} listed twice")));
        }
    }
    Ok(scores)
}

/// Everything prediction needs from a trained model.
#[derive(Debug, Clone, Copy)]
pub struct PredictorParts<'a> {
    pub net: &'a MlpModel,
    pub clusters: &'a ClusterIndex,
    /// Embedded training points, one column per training point.
    pub train_embeddings: &'a EmbeddingMatrix,
    pub train_labels: &'a [LabelSet],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictParams {
    pub k: usize,
    pub p: usize,
    pub weighting: Weighting,
}

impl Default for PredictParams {
    fn default() -> Self {
        Self {
            k: 10,
            p: 5,
            weighting: Weighting::Uniform,
        }
    }
}

impl PredictorParts<'_> {
    pub fn check(&self) -> Result<(), PredictError> {
        let n = self.train_labels.len();
        if self.train_embeddings.count() != n || self.clusters.num_points() != n {
            return Err(PredictError::Inconsistent(format!(
                "{} training embeddings, {} clustered points, {} label sets",
                self.train_embeddings.count(),
                self.clusters.num_points(),
                n
            )));
        }
        if self.train_embeddings.dim() != self.net.shape.output_dim
            || self.clusters.centers().dim() != self.net.shape.output_dim
        {
            return Err(PredictError::Inconsistent("embedding dimensions differ".into()));
        }
        Ok(())
    }

    /// Scores from an already embedded query.
    pub fn predict_embedded(&self, embedded: &[f64], params: &PredictParams) -> Result<Prediction, PredictError> {
        let cluster = self.clusters.nearest_cluster(embedded);
        let members = self.clusters.members(cluster);
        if members.is_empty() {
            return Err(PredictError::EmptyCluster(cluster));
        }
        if members.len() < params.k {
            debug!(
                "cluster {cluster} has {} members, fewer than k = {}",
                members.len(),
                params.k
            );
        }
        let neighbors = knn_search(self.train_embeddings, members, embedded, params.k);
        let labeled: Vec<(&LabelSet, f64)> = neighbors
            .iter()
            .map(|n| (&self.train_labels[n.id as usize], n.distance))
            .collect();
        let scores = aggregate_labels(&labeled, params.weighting);
        let top_labels = top_p(&scores, params.p);
        Ok(Prediction { scores, top_labels })
    }

    pub fn predict(&self, x: &SparseVector, params: &PredictParams) -> Result<Prediction, PredictError> {
        let embedded = self.net.embed(x)?;
        self.predict_embedded(&embedded, params)
    }
}

//! Maps a label set to its target point in the label embedding space: the
//! mean of its labels' embedding columns, optionally scaled to unit length.

use log::warn;
use thiserror::Error;

use crate::data_io::{Dataset, LabelSet};
use crate::embedding::EmbeddingMatrix;

const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("unlabeled point: cannot project an empty label set")]
    Unlabeled,
    #[error("label {label} out of range for embedding with {count} columns")]
    LabelOutOfRange { label: u32, count: usize },
    #[error("degenerate target: mean label embedding has norm {0:e}")]
    Degenerate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTarget(pub Vec<f64>);

impl LabelTarget {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn project_label_vector(
    embedding: &EmbeddingMatrix,
    labels: &LabelSet,
    normalize: bool,
) -> Result<LabelTarget, ProjectionError> {
    if labels.is_empty() {
        return Err(ProjectionError::Unlabeled);
    }
    let mut sum = vec![0.0; embedding.dim()];
    for label in labels.iter() {
        if label as usize >= embedding.count() {
            return Err(ProjectionError::LabelOutOfRange {
                label,
                count: embedding.count(),
            });
        }
        for (s, v) in sum.iter_mut().zip(embedding.column(label as usize)) {
            *s += v;
        }
    }
    let inv = 1.0 / labels.len() as f64;
    sum.iter_mut().for_each(|s| *s *= inv);

    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM {
        return Err(ProjectionError::Degenerate(norm));
    }
    if normalize {
        sum.iter_mut().for_each(|s| *s /= norm);
    }
    Ok(LabelTarget(sum))
}

/// Training targets for the labeled points of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTargets {
    /// Indices into the dataset of the points that received a target.
    pub point_ids: Vec<usize>,
    pub targets: Vec<LabelTarget>,
    pub skipped_unlabeled: usize,
    pub skipped_degenerate: usize,
}

/// Projects every labeled point. Unlabeled points and points whose mean
/// label embedding vanishes are skipped and counted.
pub fn project_dataset(
    embedding: &EmbeddingMatrix,
    dataset: &Dataset,
    normalize: bool,
) -> Result<ProjectedTargets, ProjectionError> {
    let mut point_ids = Vec::new();
    let mut targets = Vec::new();
    let mut skipped = 0;
    let mut degenerate = 0;
    for (i, p) in dataset.points().iter().enumerate() {
        match project_label_vector(embedding, &p.labels, normalize) {
            Ok(t) => {
                point_ids.push(i);
                targets.push(t);
            }
            Err(ProjectionError::Unlabeled) => skipped += 1,
            Err(ProjectionError::Degenerate(_)) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        warn!("skipped {skipped} unlabeled training points");
    }
    if degenerate > 0 {
        warn!("skipped {degenerate} training points with a degenerate label target");
    }
    Ok(ProjectedTargets {
        point_ids,
        targets,
        skipped_unlabeled: skipped,
        skipped_degenerate: degenerate,
    })
}

//! k-means partition of the embedded training points and nearest-center routing.

use rand::Rng;
use thiserror::Error;

use crate::embedding::{squared_distance, EmbeddingMatrix};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot form {clusters} clusters from {points} points")]
    TooManyClusters { clusters: usize, points: usize },
    #[error("number of clusters must be at least 1")]
    NoClusters,
    #[error("inconsistent cluster index: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndex {
    centers: EmbeddingMatrix,
    assignments: Vec<u32>,
    members: Vec<Vec<u32>>,
}

impl ClusterIndex {
    /// Rebuilds an index from centers and per-point assignments.
    pub fn from_assignments(centers: EmbeddingMatrix, assignments: Vec<u32>) -> Result<Self, ClusterError> {
        let mut members = vec![Vec::new(); centers.count()];
        for (p, &c) in assignments.iter().enumerate() {
            members
                .get_mut(c as usize)
                .ok_or_else(|| ClusterError::Inconsistent(format!("point {p} assigned to missing cluster {c}")))?
                .push(p as u32);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(ClusterError::Inconsistent(format!("cluster {c} is empty")));
        }
        Ok(Self {
            centers,
            assignments,
            members,
        })
    }

    pub fn centers(&self) -> &EmbeddingMatrix {
        &self.centers
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    /// Ascending point ids of cluster `c`.
    pub fn members(&self, c: usize) -> &[u32] {
        &self.members[c]
    }

    pub fn num_clusters(&self) -> usize {
        self.centers.count()
    }

    pub fn num_points(&self) -> usize {
        self.assignments.len()
    }

    /// Cluster whose center is closest to `query`; ties go to the lowest id.
    pub fn nearest_cluster(&self, query: &[f64]) -> usize {
        nearest_center(&self.centers, query).0
    }
}

fn nearest_center(centers: &EmbeddingMatrix, query: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.columns().enumerate() {
        let d = squared_distance(center, query);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    pub index: ClusterIndex,
    /// Within-cluster sum of squares after seeding, then after every iteration.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to squared distance from the nearest chosen center.
fn seed_centers<R: Rng>(points: &EmbeddingMatrix, m: usize, rng: &mut R) -> EmbeddingMatrix {
    let n = points.count();
    let mut chosen = Vec::with_capacity(m);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut dist: Vec<f64> = points.columns().map(|p| squared_distance(p, points.column(first))).collect();
    while chosen.len() < m {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut ticket = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if ticket < d {
                        break;
                    }
                    ticket -= d;
                }
            }
            pick.expect("positive total implies a positive entry")
        } else {
            // all remaining points coincide with chosen centers
            (0..n).find(|&i| !is_chosen[i]).expect("m <= n")
        };
        chosen.push(next);
        is_chosen[next] = true;
        for (d, p) in dist.iter_mut().zip(points.columns()) {
            *d = d.min(squared_distance(p, points.column(next)));
        }
    }
    EmbeddingMatrix::from_columns(points.dim(), &chosen.iter().map(|&i| points.column(i)).collect::<Vec<_>>())
}

fn wcss(points: &EmbeddingMatrix, centers: &EmbeddingMatrix, assignments: &[u32]) -> f64 {
    points
        .columns()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, centers.column(c as usize)))
        .sum()
}

/// Gives every empty cluster one point: the point farthest from its own
/// center among clusters with more than one member (lowest id on ties).
fn repair_empty(points: &EmbeddingMatrix, centers: &mut EmbeddingMatrix, assignments: &mut [u32]) {
    let m = centers.count();
    loop {
        let mut sizes = vec![0usize; m];
        for &c in assignments.iter() {
            sizes[c as usize] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.columns().enumerate() {
            let c = assignments[i] as usize;
            if sizes[c] < 2 {
                continue;
            }
            let d = squared_distance(p, centers.column(c));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("m <= n guarantees a cluster with two members");
        centers.column_mut(empty).copy_from_slice(points.column(i));
        assignments[i] = empty as u32;
    }
}

fn update_centers(points: &EmbeddingMatrix, centers: &mut EmbeddingMatrix, assignments: &[u32]) {
    let dim = points.dim();
    let m = centers.count();
    let mut sums = vec![0.0; dim * m];
    let mut counts = vec![0usize; m];
    for (p, &c) in points.columns().zip(assignments) {
        let c = c as usize;
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..m {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centers.column_mut(c).iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *dst = s * inv;
            }
        }
    }
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops after `max_iters` iterations or once assignments no longer change.
pub fn kmeans(points: &EmbeddingMatrix, m: usize, max_iters: usize, seed: u64) -> Result<KMeansOutcome, ClusterError> {
    let n = points.count();
    if m == 0 {
        return Err(ClusterError::NoClusters);
    }
    if m > n {
        return Err(ClusterError::TooManyClusters { clusters: m, points: n });
    }
    let mut rng = rng::derived(seed, rng::stream::KMEANS);
    let mut centers = seed_centers(points, m, &mut rng);
    let mut assignments: Vec<u32> = points
        .columns()
        .map(|p| nearest_center(&centers, p).0 as u32)
        .collect();
    repair_empty(points, &mut centers, &mut assignments);
    let mut history = vec![wcss(points, &centers, &assignments)];

    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        update_centers(points, &mut centers, &assignments);
        let next: Vec<u32> = points
            .columns()
            .map(|p| nearest_center(&centers, p).0 as u32)
            .collect();
        let changed = next != assignments;
        assignments = next;
        repair_empty(points, &mut centers, &mut assignments);
        history.push(wcss(points, &centers, &assignments));
        if !changed {
            break;
        }
    }
    // centers become the exact means of their final members
    update_centers(points, &mut centers, &assignments);
    *history.last_mut().expect("non-empty") = wcss(points, &centers, &assignments);

    let index = ClusterIndex::from_assignments(centers, assignments)?;
    Ok(KMeansOutcome {
        index,
        wcss_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_columns(2, rows)
    }

    #[test]
    fn single_cluster_is_mean() {
        let p = pts(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]);
        let out = kmeans(&p, 1, 10, 3).unwrap();
        assert_eq!(out.index.centers().column(0), &[1.0, 1.0]);
        assert_eq!(out.index.members(0), &[0, 1, 2]);
    }

    #[test]
    fn separated_pairs() {
        let p = pts(&[[0.0, 0.0], [10.0, 0.0], [0.1, 0.0], [10.1, 0.0]]);
        for seed in 0..10 {
            let out = kmeans(&p, 2, 20, seed).unwrap();
            let idx = &out.index;
            let c0 = idx.assignments()[0] as usize;
            let c1 = idx.assignments()[1] as usize;
            assert_ne!(c0, c1);
            assert_eq!(idx.members(c0), &[0, 2]);
            assert_eq!(idx.members(c1), &[1, 3]);
            assert!((idx.centers().column(c0)[0] - 0.05).abs() < 1e-12);
            assert!((idx.centers().column(c1)[0] - 10.05).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let p = pts(&[[0.0, 0.0]]);
        assert_eq!(kmeans(&p, 2, 5, 0), Err(ClusterError::TooManyClusters { clusters: 2, points: 1 }));
        assert_eq!(kmeans(&p, 0, 5, 0), Err(ClusterError::NoClusters));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let p = pts(&[[1.0, 1.0]; 5]);
        let out = kmeans(&p, 3, 10, 0).unwrap();
        assert!((0..3).all(|c| !out.index.members(c).is_empty()));
        assert_eq!(out.wcss_history.last(), Some(&0.0));
    }

    #[test]
    fn nearest_cluster_tie_goes_low() {
        let centers = pts(&[[-1.0, 0.0], [1.0, 0.0]]);
        let idx = ClusterIndex::from_assignments(centers, vec![0, 1]).unwrap();
        assert_eq!(idx.nearest_cluster(&[0.0, 5.0]), 0);
        assert_eq!(idx.nearest_cluster(&[1.0, 0.0]), 1);
    }

    #[test]
    fn from_assignments_rejects_empty_cluster() {
        let centers = pts(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(ClusterIndex::from_assignments(centers, vec![0, 0]).is_err());
    }
}

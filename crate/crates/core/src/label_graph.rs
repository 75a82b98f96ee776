//! Undirected label co-occurrence graph.
//!
//! Two labels are adjacent when they appear together in at least one point.
//! Edge weights count those points; walks ignore them unless asked not to.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

use crate::data_io::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("adjacency line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelGraph {
    adjacency: Vec<Vec<u32>>,
    weights: Vec<Vec<u32>>,
}

impl LabelGraph {
    /// Builds a graph from an edge-weight map keyed by `(low, high)` node pairs.
    fn from_edge_map(num_nodes: usize, edges: HashMap<(u32, u32), u32>) -> Self {
        let mut lists: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_nodes];
        for (&(a, b), &w) in &edges {
            lists[a as usize].push((b, w));
            lists[b as usize].push((a, w));
        }
        let mut adjacency = Vec::with_capacity(num_nodes);
        let mut weights = Vec::with_capacity(num_nodes);
        for mut list in lists {
            list.sort_unstable();
            adjacency.push(list.iter().map(|&(n, _)| n).collect());
            weights.push(list.iter().map(|&(_, w)| w).collect());
        }
        Self { adjacency, weights }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn check(&self, node: usize) -> Result<(), GraphError> {
        if node >= self.num_nodes() {
            Err(GraphError::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes(),
            })
        } else {
            Ok(())
        }
    }

    pub fn degree(&self, node: usize) -> Result<usize, GraphError> {
        self.check(node)?;
        Ok(self.adjacency[node].len())
    }

    /// Sorted neighbor ids of `node`.
    pub fn neighbors(&self, node: usize) -> Result<&[u32], GraphError> {
        self.check(node)?;
        Ok(&self.adjacency[node])
    }

    /// Co-occurrence counts aligned with [`LabelGraph::neighbors`].
    pub fn neighbor_weights(&self, node: usize) -> Result<&[u32], GraphError> {
        self.check(node)?;
        Ok(&self.weights[node])
    }

    /// Weight of edge `{a, b}`, or `None` if absent.
    pub fn edge_weight(&self, a: usize, b: usize) -> Result<Option<u32>, GraphError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.adjacency[a]
            .binary_search(&(b as u32))
            .ok()
            .map(|pos| self.weights[a][pos]))
    }

    pub fn is_isolated(&self, node: usize) -> bool {
        self.adjacency[node].is_empty()
    }

    /// Exports one `i j weight` line per edge with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, (adj, w)) in self.adjacency.iter().zip(&self.weights).enumerate() {
            for (&j, &w) in adj.iter().zip(w) {
                if (i as u32) < j {
                    let _ = writeln!(out, "{i} {j} {w}");
                }
            }
        }
        out
    }

    /// Loads a graph from `i j [weight]` lines, e.g. a prior label hierarchy.
    ///
    /// Edges are undirected; a repeated edge keeps the larger weight. Missing
    /// weights default to 1. Blank lines and lines starting with `#` are skipped.
    pub fn from_edge_list<R: BufRead>(reader: R, num_nodes: usize) -> Result<Self, GraphError> {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| GraphError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(err(format!("expected `i j [weight]`, got {line:?}")));
            }
            let parse = |s: &str| s.parse::<u32>().map_err(|_| err(format!("bad integer {s:?}")));
            let a = parse(fields[0])?;
            let b = parse(fields[1])?;
            let w = if fields.len() == 3 { parse(fields[2])? } else { 1 };
            if a as usize >= num_nodes || b as usize >= num_nodes {
                return Err(err(format!("node out of range for {num_nodes} nodes")));
            }
            if a == b {
                return Err(err(format!("self-loop on node {a}")));
            }
            if w == 0 {
                return Err(err("edge weight must be positive".into()));
            }
            let key = (a.min(b), a.max(b));
            let entry = edges.entry(key).or_insert(w);
            *entry = (*entry).max(w);
        }
        Ok(Self::from_edge_map(num_nodes, edges))
    }
}

/// Connects every pair of labels that co-occur in some point of `dataset`.
pub fn build_label_graph(dataset: &Dataset) -> LabelGraph {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for labels in dataset.label_sets() {
        let labels = labels.as_slice();
        for (k, &a) in labels.iter().enumerate() {
            for &b in &labels[k + 1..] {
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    LabelGraph::from_edge_map(dataset.num_labels(), edges)
}

use rand::Rng;
use rayon::prelude::*;

use crate::label_graph::LabelGraph;
use crate::rng;

/// How the next node of a walk is chosen among the current node's neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WalkWeighting {
    /// Every neighbor equally likely.
    #[default]
    Uniform,
    /// Proportional to co-occurrence counts.
    CoOccurrence,
}

impl std::str::FromStr for WalkWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(WalkWeighting::Uniform),
            "cooccurrence" | "co_occurrence" | "weighted" => Ok(WalkWeighting::CoOccurrence),
            other => Err(format!("unknown walk weighting {other:?} (expected uniform or cooccurrence)")),
        }
    }
}

/// Truncated random walks, grouped by start node.
///
/// Walks `[s * walks_per_node, (s + 1) * walks_per_node)` start at node `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub num_nodes: usize,
}

impl WalkCorpus {
    pub fn num_tokens(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// Occurrence count of every node across all walks.
    pub fn node_frequencies(&self) -> Vec<u64> {
        let mut freq = vec![0u64; self.num_nodes];
        for walk in &self.walks {
            for &n in walk {
                freq[n as usize] += 1;
            }
        }
        freq
    }
}

fn walk_from<R: Rng>(
    graph: &LabelGraph,
    start: usize,
    walk_length: usize,
    weighting: WalkWeighting,
    rng: &mut R,
) -> Vec<u32> {
    let mut walk = Vec::with_capacity(walk_length);
    walk.push(start as u32);
    if graph.is_isolated(start) {
        return walk;
    }
    let mut current = start;
    while walk.len() < walk_length {
        // neighbors() cannot fail: every stored id is a valid node
        let neighbors = graph.neighbors(current).expect("valid node");
        let next = match weighting {
            WalkWeighting::Uniform => neighbors[rng.random_range(0..neighbors.len())],
            WalkWeighting::CoOccurrence => {
                let weights = graph.neighbor_weights(current).expect("valid node");
                let total: u64 = weights.iter().map(|&w| w as u64).sum();
                let mut ticket = rng.random_range(0..total);
                let mut chosen = neighbors[neighbors.len() - 1];
                for (&n, &w) in neighbors.iter().zip(weights) {
                    if ticket < w as u64 {
                        chosen = n;
                        break;
                    }
                    ticket -= w as u64;
                }
                chosen
            }
        };
        walk.push(next);
        current = next as usize;
    }
    walk
}

/// Generates `walks_per_node` walks from every node.
///
/// Each start node draws from its own seeded stream, so the corpus is
/// identical whatever the thread count. Walks from isolated nodes have
/// length 1.
pub fn generate_walks(
    graph: &LabelGraph,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
    weighting: WalkWeighting,
) -> WalkCorpus {
    assert!(walk_length >= 1, "walk_length must be at least 1");
    let base = seed ^ rng::stream::WALKS;
    let per_node: Vec<Vec<Vec<u32>>> = (0..graph.num_nodes())
        .into_par_iter()
        .map(|start| {
            let mut rng = rng::derived(base, start as u64);
            (0..walks_per_node)
                .map(|_| walk_from(graph, start, walk_length, weighting, &mut rng))
                .collect()
        })
        .collect();
    WalkCorpus {
        walks: per_node.into_iter().flatten().collect(),
        walk_length,
        walks_per_node,
        num_nodes: graph.num_nodes(),
    }
}

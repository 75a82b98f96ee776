//! Skip-gram with negative sampling over walk corpora.
//!
//! Parameters live in `AtomicU64` cells holding `f64` bits. With one thread
//! the update order is fixed and training is reproducible; with several
//! threads updates race lock-free and results vary between runs.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use super::walks::WalkCorpus;
use super::DeepWalkConfig;
use crate::embedding::EmbeddingMatrix;
use crate::rng;

const NEG_POWER: f64 = 0.75;

struct SharedMatrix {
    dim: usize,
    cells: Vec<AtomicU64>,
}

impl SharedMatrix {
    fn from_values(dim: usize, values: &[f64]) -> Self {
        Self {
            dim,
            cells: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    #[inline]
    fn load_row(&self, row: usize, out: &mut [f64]) {
        let cells = &self.cells[row * self.dim..(row + 1) * self.dim];
        for (o, c) in out.iter_mut().zip(cells) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    #[inline]
    fn add_to_row(&self, row: usize, delta: &[f64]) {
        let cells = &self.cells[row * self.dim..(row + 1) * self.dim];
        for (c, d) in cells.iter().zip(delta) {
            let v = f64::from_bits(c.load(Ordering::Relaxed)) + d;
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn to_values(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| f64::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable `ln(sigmoid(x))`.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Noise distribution over nodes: corpus frequency raised to 0.75.
fn noise_distribution(corpus: &WalkCorpus) -> Option<WeightedIndex<f64>> {
    let weights: Vec<f64> = corpus
        .node_frequencies()
        .into_iter()
        .map(|f| (f as f64).powf(NEG_POWER))
        .collect();
    WeightedIndex::new(weights).ok()
}

/// Calls `f(center, context)` for every ordered pair within `window` positions.
fn for_each_pair(walk: &[u32], window: usize, mut f: impl FnMut(usize, usize)) {
    for (pos, &center) in walk.iter().enumerate() {
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(walk.len());
        for (ctx_pos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
            if ctx_pos != pos {
                f(center as usize, context as usize);
            }
        }
    }
}

/// Trained skip-gram parameters: node vectors plus context vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGram {
    /// Node vectors; these become the label embedding.
    pub input: EmbeddingMatrix,
    /// Context (output) vectors used only during training.
    pub output: EmbeddingMatrix,
}

impl SkipGram {
    /// Node vectors uniform in `[-0.5/dim, 0.5/dim]`, context vectors zero.
    pub fn init(num_nodes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng::derived(seed, rng::stream::SKIPGRAM);
        let bound = 0.5 / dim as f64;
        let values = (0..num_nodes * dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            input: EmbeddingMatrix::from_values(dim, values),
            output: EmbeddingMatrix::zeros(dim, num_nodes),
        }
    }

    /// Mean negative-sampling log-likelihood per (center, context) pair.
    ///
    /// Negatives are drawn from a stream seeded by `seed`, so two models
    /// evaluated with the same seed see the same negatives. Returns `None`
    /// when the corpus has no pairs.
    pub fn objective(&self, corpus: &WalkCorpus, window: usize, negatives: usize, seed: u64) -> Option<f64> {
        let noise = noise_distribution(corpus)?;
        let mut rng = rng::seeded(seed);
        let mut total = 0.0;
        let mut pairs = 0usize;
        for walk in &corpus.walks {
            for_each_pair(walk, window, |center, context| {
                let h = self.input.column(center);
                let mut ll = log_sigmoid(crate::embedding::dot(h, self.output.column(context)));
                for _ in 0..negatives {
                    let neg = noise.sample(&mut rng);
                    if neg != context {
                        ll += log_sigmoid(-crate::embedding::dot(h, self.output.column(neg)));
                    }
                }
                total += ll;
                pairs += 1;
            });
        }
        (pairs > 0).then(|| total / pairs as f64)
    }
}

struct Trainer<'a> {
    input: SharedMatrix,
    output: SharedMatrix,
    noise: Option<WeightedIndex<f64>>,
    config: &'a DeepWalkConfig,
    total_tokens: f64,
}

impl Trainer<'_> {
    fn learning_rate(&self, processed: usize) -> f64 {
        let progress = (processed as f64 / self.total_tokens).min(1.0);
        let cfg = self.config;
        cfg.initial_learning_rate - (cfg.initial_learning_rate - cfg.min_learning_rate) * progress
    }

    /// Trains on `walks`; `processed` counts tokens seen before this call
    /// across all workers (approximate in parallel mode).
    fn train_walks<R: Rng>(&self, walks: &[&Vec<u32>], processed_before: usize, rng: &mut R) {
        let dim = self.config.dim;
        let mut h = vec![0.0; dim];
        let mut u = vec![0.0; dim];
        let mut grad_h = vec![0.0; dim];
        let mut delta = vec![0.0; dim];
        let mut processed = processed_before;
        let Some(noise) = &self.noise else { return };
        for walk in walks {
            let lr = self.learning_rate(processed);
            processed += walk.len();
            for_each_pair(walk, self.config.window, |center, context| {
                self.input.load_row(center, &mut h);
                grad_h.fill(0.0);
                for k in 0..=self.config.negative_samples {
                    let (target, label) = if k == 0 {
                        (context, 1.0)
                    } else {
                        let neg = noise.sample(rng);
                        if neg == context {
                            continue;
                        }
                        (neg, 0.0)
                    };
                    self.output.load_row(target, &mut u);
                    let score = crate::embedding::dot(&h, &u);
                    let g = (label - sigmoid(score)) * lr;
                    for ((gh, &uv), (d, &hv)) in grad_h.iter_mut().zip(&u).zip(delta.iter_mut().zip(&h)) {
                        *gh += g * uv;
                        *d = g * hv;
                    }
                    self.output.add_to_row(target, &delta);
                }
                self.input.add_to_row(center, &grad_h);
            });
        }
    }
}

/// Trains node vectors on `corpus` and returns the trained model.
///
/// With `config.threads == 1` the result depends only on the corpus and the
/// config (including its seed).
pub fn train_skipgram_model(corpus: &WalkCorpus, config: &DeepWalkConfig) -> SkipGram {
    let init = SkipGram::init(corpus.num_nodes, config.dim, config.seed);
    let trainer = Trainer {
        input: SharedMatrix::from_values(config.dim, init.input.values()),
        output: SharedMatrix::from_values(config.dim, init.output.values()),
        noise: noise_distribution(corpus),
        config,
        total_tokens: (config.epochs * corpus.num_tokens()).max(1) as f64,
    };

    let mut order_rng = rng::derived(config.seed, rng::stream::SKIPGRAM + 1);
    let tokens_per_epoch = corpus.num_tokens();
    for epoch in 0..config.epochs {
        let mut order: Vec<&Vec<u32>> = corpus.walks.iter().collect();
        order.shuffle(&mut order_rng);
        let epoch_start = epoch * tokens_per_epoch;
        let epoch_seed = config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9);
        if config.threads <= 1 {
            let mut rng = rng::derived(epoch_seed, rng::stream::SKIPGRAM + 2);
            trainer.train_walks(&order, epoch_start, &mut rng);
        } else {
            let chunk = order.len().div_ceil(config.threads).max(1);
            order.par_chunks(chunk).enumerate().for_each(|(w, walks)| {
                let mut rng = rng::derived(epoch_seed, rng::stream::SKIPGRAM + 3 + w as u64);
                // every worker decays the rate as if it owned its share of the epoch
                let start = epoch_start + w * chunk * corpus.walk_length.max(1);
                trainer.train_walks(walks, start.min(epoch_start + tokens_per_epoch), &mut rng);
            });
        }
    }

    SkipGram {
        input: EmbeddingMatrix::from_values(config.dim, trainer.input.to_values()),
        output: EmbeddingMatrix::from_values(config.dim, trainer.output.to_values()),
    }
}

/// Trains skip-gram on `corpus` and returns the `dim x num_nodes` node embedding.
pub fn train_skipgram(corpus: &WalkCorpus, config: &DeepWalkConfig) -> EmbeddingMatrix {
    train_skipgram_model(corpus, config).input
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn pairs_respect_window() {
        let mut pairs = Vec::new();
        for_each_pair(&[10, 11, 12], 1, |c, o| pairs.push((c, o)));
        assert_eq!(pairs, vec![(10, 11), (11, 10), (11, 12), (12, 11)]);
    }

    #[test]
    fn init_range() {
        let m = SkipGram::init(7, 4, 3);
        assert!(m.input.values().iter().all(|v| v.abs() <= 0.125));
        assert!(m.output.values().iter().all(|&v| v == 0.0));
    }
}

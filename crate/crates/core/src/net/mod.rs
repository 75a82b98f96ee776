//! Two-layer embedding network mapping sparse features onto the unit sphere
//! of the label embedding space:
//!
//! ```text
//! f(x) = normalize(dropout(W2ᵀ relu(W1ᵀ x + b1) + b2))
//! ```
//!
//! trained with the smooth-ℓ1 distance to each point's label target and SGD
//! with momentum. `W1` is stored one row per input feature so a sparse input
//! only touches the rows of its nonzero features.

mod backprop;
mod loss;
mod optim;
mod train;

pub use backprop::{batch_loss, loss_and_gradients, loss_and_gradients_into, Gradients, Reduction};
pub use loss::{embed_distance, smooth_l1, smooth_l1_grad, try_embed_distance};
pub use optim::{sgd_step, OptimizerState};
pub use train::{dropout_mask, train, train_on_targets, TrainConfig, TrainOutcome};

use log::debug;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data_io::SparseVector;
use crate::embedding::{round_slice_to_f32, EmbeddingMatrix};
use crate::rng;

/// Below this norm the output normalization adds [`NORM_EPSILON`] to its divisor.
pub const NORM_FLOOR: f64 = 1e-10;
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("feature index {index} >= input dimension {dim}")]
    FeatureOutOfRange { index: u32, dim: usize },
    #[error("non-finite gradient in {tensor} at entry {index}")]
    NonFiniteGradient { tensor: &'static str, index: usize },
    #[error("non-finite loss {0} during training")]
    NonFiniteLoss(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no labeled training points")]
    NoLabeledPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub use_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub shape: NetShape,
    /// `input_dim x hidden`, row-major (one row per feature).
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden x output_dim`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Dropout behaviour for one forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Eval,
    /// Per-output multipliers: 0 for dropped units, `1/(1-rate)` for kept ones.
    Train(&'a [f64]),
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Output after dropout, before normalization.
    pub pre_norm: Vec<f64>,
    pub norm: f64,
    pub divisor: f64,
    pub output: Vec<f64>,
}

impl MlpModel {
    /// Seeded He-uniform weights (`bound = sqrt(6 / fan_in)`), zero biases.
    pub fn init(shape: NetShape, seed: u64) -> Self {
        assert!(shape.input_dim > 0 && shape.hidden > 0 && shape.output_dim > 0);
        let mut rng = rng::derived(seed, rng::stream::NET_INIT);
        let b1_bound = (6.0 / shape.input_dim as f64).sqrt();
        let b2_bound = (6.0 / shape.hidden as f64).sqrt();
        let w1 = (0..shape.input_dim * shape.hidden)
            .map(|_| rng.random_range(-b1_bound..b1_bound))
            .collect();
        let w2 = (0..shape.hidden * shape.output_dim)
            .map(|_| rng.random_range(-b2_bound..b2_bound))
            .collect();
        Self {
            shape,
            w1,
            b1: vec![0.0; shape.hidden],
            w2,
            b2: vec![0.0; shape.output_dim],
        }
    }

    pub fn zeros(shape: NetShape) -> Self {
        Self {
            shape,
            w1: vec![0.0; shape.input_dim * shape.hidden],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.hidden * shape.output_dim],
            b2: vec![0.0; shape.output_dim],
        }
    }

    pub fn check_shapes(&self) -> Result<(), NetError> {
        let s = self.shape;
        let ok = self.w1.len() == s.input_dim * s.hidden
            && self.b1.len() == s.hidden
            && self.w2.len() == s.hidden * s.output_dim
            && self.b2.len() == s.output_dim;
        if ok {
            Ok(())
        } else {
            Err(NetError::Shape("parameter lengths do not match the declared shape".into()))
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter to the nearest `f32` (the precision models are stored with).
    pub fn round_to_f32(&mut self) {
        for t in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            round_slice_to_f32(t);
        }
    }

    pub fn validate_input(&self, x: &SparseVector) -> Result<(), NetError> {
        match x.indices().last() {
            Some(&i) if i as usize >= self.shape.input_dim => Err(NetError::FeatureOutOfRange {
                index: i,
                dim: self.shape.input_dim,
            }),
            _ => Ok(()),
        }
    }

    /// Forward pass recording activations into `cache`.
    ///
    /// Panics if `x` has a feature index outside the input dimension.
    pub fn forward_cached(&self, x: &SparseVector, mode: Mode<'_>, cache: &mut ForwardCache) {
        let NetShape { hidden, output_dim, .. } = self.shape;
        cache.hidden_pre.clear();
        cache.hidden_pre.extend_from_slice(&self.b1);
        for (i, v) in x.iter() {
            let row = &self.w1[i as usize * hidden..(i as usize + 1) * hidden];
            for (h, w) in cache.hidden_pre.iter_mut().zip(row) {
                *h += v * w;
            }
        }
        cache.hidden.clear();
        cache.hidden.extend(cache.hidden_pre.iter().map(|&h| h.max(0.0)));

        cache.pre_norm.clear();
        cache.pre_norm.extend_from_slice(&self.b2);
        for (h, &a) in cache.hidden.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.w2[h * output_dim..(h + 1) * output_dim];
            for (o, w) in cache.pre_norm.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        if let Mode::Train(mask) = mode {
            for (o, m) in cache.pre_norm.iter_mut().zip(mask) {
                *o *= m;
            }
        }

        let norm = cache.pre_norm.iter().map(|v| v * v).sum::<f64>().sqrt();
        let divisor = if norm < NORM_FLOOR {
            debug!("near-zero embedding norm {norm:e}; using epsilon-guarded normalization");
            norm + NORM_EPSILON
        } else {
            norm
        };
        cache.norm = norm;
        cache.divisor = divisor;
        cache.output.clear();
        cache.output.extend(cache.pre_norm.iter().map(|v| v / divisor));
    }

    pub fn forward(&self, x: &SparseVector, mode: Mode<'_>) -> Vec<f64> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, mode, &mut cache);
        cache.output
    }

    /// Eval-mode embedding with input validation.
    pub fn embed(&self, x: &SparseVector) -> Result<Vec<f64>, NetError> {
        self.validate_input(x)?;
        Ok(self.forward(x, Mode::Eval))
    }

    /// Eval-mode embeddings of many inputs, one column each.
    pub fn embed_all<'a, I>(&self, inputs: I) -> Result<EmbeddingMatrix, NetError>
    where
        I: IntoParallelIterator<Item = &'a SparseVector>,
        I::Iter: IndexedParallelIterator,
    {
        let columns: Vec<Vec<f64>> = inputs
            .into_par_iter()
            .map(|x| self.embed(x))
            .collect::<Result<_, _>>()?;
        let mut values = Vec::with_capacity(columns.len() * self.shape.output_dim);
        for c in columns {
            values.extend(c);
        }
        Ok(EmbeddingMatrix::from_values(self.shape.output_dim, values))
    }
}

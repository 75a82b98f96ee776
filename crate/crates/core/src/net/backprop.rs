use super::loss::{embed_distance, smooth_l1_grad};
use super::{ForwardCache, MlpModel, Mode, NetShape};
use crate::data_io::SparseVector;
use crate::label_projection::LabelTarget;

/// How per-sample distances combine into the batch loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn scale(self, batch: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / batch as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Parameter-shaped gradient buffers.
///
/// Only the `w1` rows of features seen since the last [`Gradients::clear`]
/// can be nonzero; they are listed in `touched_rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub touched_rows: Vec<u32>,
    row_touched: Vec<bool>,
    hidden: usize,
}

impl Gradients {
    pub fn zeros(shape: NetShape) -> Self {
        Self {
            w1: vec![0.0; shape.input_dim * shape.hidden],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.hidden * shape.output_dim],
            b2: vec![0.0; shape.output_dim],
            touched_rows: Vec::new(),
            row_touched: vec![false; shape.input_dim],
            hidden: shape.hidden,
        }
    }

    pub fn clear(&mut self) {
        let h = self.hidden;
        for &r in &self.touched_rows {
            let r = r as usize;
            self.w1[r * h..(r + 1) * h].fill(0.0);
            self.row_touched[r] = false;
        }
        self.touched_rows.clear();
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }

    fn touch(&mut self, row: u32) {
        if !self.row_touched[row as usize] {
            self.row_touched[row as usize] = true;
            self.touched_rows.push(row);
        }
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients) {
        let h = self.hidden;
        for &r in &other.touched_rows {
            self.touch(r);
            let r = r as usize;
            for (a, b) in self.w1[r * h..(r + 1) * h].iter_mut().zip(&other.w1[r * h..(r + 1) * h]) {
                *a += b;
            }
        }
        for (dst, src) in [
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

/// Accumulates `scale * d(distance)/d(params)` for one sample.
fn backward_sample(
    model: &MlpModel,
    x: &SparseVector,
    target: &[f64],
    mask: Option<&[f64]>,
    cache: &ForwardCache,
    scale: f64,
    grads: &mut Gradients,
    scratch: &mut Vec<f64>,
) {
    let NetShape {
        hidden, output_dim, ..
    } = model.shape;

    // d/d(output), then through the normalization f = z / divisor(|z|)
    let g_out: Vec<f64> = cache
        .output
        .iter()
        .zip(target)
        .map(|(&f, &t)| scale * smooth_l1_grad(f, t))
        .collect();
    let mut g_z: Vec<f64> = g_out.iter().map(|g| g / cache.divisor).collect();
    if cache.norm > 0.0 {
        let proj: f64 = g_out.iter().zip(&cache.pre_norm).map(|(g, z)| g * z).sum();
        let c = proj / (cache.divisor * cache.divisor * cache.norm);
        for (gz, z) in g_z.iter_mut().zip(&cache.pre_norm) {
            *gz -= c * z;
        }
    }
    if let Some(mask) = mask {
        for (gz, m) in g_z.iter_mut().zip(mask) {
            *gz *= m;
        }
    }

    if model.shape.use_bias {
        for (gb, g) in grads.b2.iter_mut().zip(&g_z) {
            *gb += g;
        }
    }

    scratch.clear();
    scratch.resize(hidden, 0.0);
    let g_hidden_pre = scratch;
    for h in 0..hidden {
        let row = &model.w2[h * output_dim..(h + 1) * output_dim];
        let a = cache.hidden[h];
        if a != 0.0 {
            let grow = &mut grads.w2[h * output_dim..(h + 1) * output_dim];
            for (gw, g) in grow.iter_mut().zip(&g_z) {
                *gw += a * g;
            }
        }
        if cache.hidden_pre[h] > 0.0 {
            g_hidden_pre[h] = row.iter().zip(&g_z).map(|(w, g)| w * g).sum();
        }
    }

    if model.shape.use_bias {
        for (gb, g) in grads.b1.iter_mut().zip(g_hidden_pre.iter()) {
            *gb += g;
        }
    }
    for (i, v) in x.iter() {
        grads.touch(i);
        let grow = &mut grads.w1[i as usize * hidden..(i as usize + 1) * hidden];
        for (gw, g) in grow.iter_mut().zip(g_hidden_pre.iter()) {
            *gw += v * g;
        }
    }
}

/// Batch loss and its exact gradient, accumulated into `grads` (which the
/// caller clears).
///
/// `masks`, when given, holds one dropout mask per sample. Panics if a
/// feature index exceeds the model's input dimension.
pub fn loss_and_gradients_into(
    model: &MlpModel,
    batch: &[(&SparseVector, &LabelTarget)],
    masks: Option<&[Vec<f64>]>,
    reduction: Reduction,
    scale_batch: usize,
    grads: &mut Gradients,
) -> f64 {
    let scale = reduction.scale(scale_batch);
    let mut cache = ForwardCache::default();
    let mut scratch = Vec::new();
    let mut loss = 0.0;
    for (s, (x, target)) in batch.iter().enumerate() {
        let mask = masks.map(|m| m[s].as_slice());
        let mode = mask.map_or(Mode::Eval, Mode::Train);
        model.forward_cached(x, mode, &mut cache);
        loss += embed_distance(&cache.output, target.as_slice());
        backward_sample(model, x, target.as_slice(), mask, &cache, scale, grads, &mut scratch);
    }
    loss * scale
}

/// Batch loss and fresh gradients.
pub fn loss_and_gradients(
    model: &MlpModel,
    batch: &[(&SparseVector, &LabelTarget)],
    masks: Option<&[Vec<f64>]>,
    reduction: Reduction,
) -> (f64, Gradients) {
    assert!(!batch.is_empty(), "batch must not be empty");
    let mut grads = Gradients::zeros(model.shape);
    let loss = loss_and_gradients_into(model, batch, masks, reduction, batch.len(), &mut grads);
    (loss, grads)
}

/// Batch loss without gradients.
pub fn batch_loss(
    model: &MlpModel,
    batch: &[(&SparseVector, &LabelTarget)],
    masks: Option<&[Vec<f64>]>,
    reduction: Reduction,
) -> f64 {
    let mut total = 0.0;
    for (s, (x, target)) in batch.iter().enumerate() {
        let mode = masks.map_or(Mode::Eval, |m| Mode::Train(&m[s]));
        total += embed_distance(&model.forward(x, mode), target.as_slice());
    }
    total * reduction.scale(batch.len())
}

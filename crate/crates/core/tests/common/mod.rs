#![allow(dead_code)]

use std::collections::BTreeMap;

use dxml::data_io::{Dataset, LabelSet, Point, SparseVector};
use dxml::label_projection::LabelTarget;
use dxml::net::{batch_loss, dropout_mask, loss_and_gradients, MlpModel, NetShape, Reduction};
use dxml::pipeline::{DxmlModel, PipelineConfig, Scale};
use dxml::predictor::Scores;
use dxml::rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Topic-structured multi-label data: each point picks a topic, draws its
/// labels mostly from the topic's labels and its features mostly from the
/// topic's features.
pub fn synthetic(n: usize, d: usize, num_labels: usize, avg_labels: f64, avg_nnz: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let topics = (num_labels / 4).clamp(2, 40).min(num_labels).min(d).max(1);
    let mut label_ids: Vec<u32> = (0..num_labels as u32).collect();
    label_ids.shuffle(&mut rng);
    let topic_labels: Vec<Vec<u32>> = (0..topics)
        .map(|t| label_ids.iter().copied().skip(t).step_by(topics).collect())
        .collect();
    let mut feature_ids: Vec<u32> = (0..d as u32).collect();
    feature_ids.shuffle(&mut rng);
    let topic_features: Vec<Vec<u32>> = (0..topics)
        .map(|t| feature_ids.iter().copied().skip(t).step_by(topics).collect())
        .collect();

    let points = (0..n)
        .map(|_| {
            let t = rng.random_range(0..topics);
            let mut labels = Vec::new();
            let count = 1 + (0..(2.0 * (avg_labels - 1.0)).ceil() as usize)
                .filter(|_| rng.random_bool(0.5))
                .count();
            for _ in 0..count {
                let l = if rng.random_bool(0.9) {
                    let pool = &topic_labels[t];
                    pool[rng.random_range(0..pool.len().min(6))]
                } else {
                    rng.random_range(0..num_labels as u32)
                };
                labels.push(l);
            }
            let mut feats = BTreeMap::new();
            let nnz = rng.random_range(avg_nnz / 2..=avg_nnz * 3 / 2).max(1);
            for _ in 0..nnz {
                let f = if rng.random_bool(0.8) {
                    let pool = &topic_features[t];
                    pool[rng.random_range(0..pool.len())]
                } else {
                    rng.random_range(0..d as u32)
                };
                feats.insert(f, 1.0);
            }
            Point {
                features: SparseVector::from_pairs(feats.into_iter().collect()).unwrap(),
                labels: LabelSet::new(labels),
            }
        })
        .collect();
    Dataset::new(d, num_labels, points).unwrap()
}

/// Train/test pair drawn from one synthetic distribution.
pub fn synthetic_split(n_train: usize, n_test: usize, d: usize, num_labels: usize, seed: u64) -> (Dataset, Dataset) {
    let all = synthetic(n_train + n_test, d, num_labels, 2.4, 12, seed);
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    (all.subset(&train).unwrap(), all.subset(&test).unwrap())
}

/// Small, fast pipeline settings for tests.
pub fn quick_config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::for_scale(Scale::Small, seed);
    c.deepwalk.dim = 16;
    c.deepwalk.walks_per_node = 5;
    c.deepwalk.walk_length = 20;
    c.deepwalk.epochs = 2;
    c.hidden = 32;
    c.train.epochs = 15;
    c.train.batch_size = 16;
    c
}

/// Precision@k by counting, for each true label, how many labels outrank it.
pub fn oracle_precision(scores: &[f64], truth: &[u32], k: usize) -> f64 {
    let rank = |j: usize| {
        (0..scores.len())
            .filter(|&i| scores[i] > scores[j] || (scores[i] == scores[j] && i < j))
            .count()
    };
    let hits = truth.iter().filter(|&&l| rank(l as usize) < k).count();
    hits as f64 / k as f64
}

pub fn oracle_ndcg(scores: &[f64], truth: &[u32], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort on descending score keeps ascending index among ties
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut dcg = 0.0;
    for (pos, &l) in order.iter().take(k).enumerate() {
        if truth.contains(&(l as u32)) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut ideal = 0.0;
    for pos in 0..k.min(truth.len()) {
        ideal += 1.0 / ((pos + 2) as f64).log2();
    }
    dcg / ideal
}

/// Full-sort k nearest columns of `points` to `query`: `(squared distance, id)`.
pub fn oracle_knn(points: &dxml::EmbeddingMatrix, candidates: &[u32], query: &[f64], k: usize) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&id| {
            let d: f64 = points
                .column(id as usize)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, id)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

/// Label scores from a global scan over all training points (no clustering),
/// scored by the fraction of the k neighbors carrying each label.
pub fn oracle_global_predict(model: &DxmlModel, x: &SparseVector, k: usize) -> Scores {
    let q = model.net.embed(x).unwrap();
    let ids: Vec<u32> = (0..model.train_embeddings.count() as u32).collect();
    let nn = oracle_knn(&model.train_embeddings, &ids, &q, k);
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (_, id) in &nn {
        for l in model.train_labels[*id as usize].iter() {
            *counts.entry(l).or_default() += 1;
        }
    }
    counts.into_iter().map(|(l, c)| (l, c as f64 / nn.len() as f64)).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero gradient entries.
pub const GRAD_FLOOR: f64 = 1e-6;

fn tensor(m: &mut MlpModel, t: usize) -> &mut Vec<f64> {
    match t {
        0 => &mut m.w1,
        1 => &mut m.b1,
        2 => &mut m.w2,
        _ => &mut m.b2,
    }
}

/// Compares analytic gradients of one random small network against central
/// finite differences.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut rng = rng::seeded(seed);
    let shape = NetShape {
        input_dim: rng.random_range(2..=20),
        hidden: rng.random_range(2..=16),
        output_dim: rng.random_range(2..=8),
        use_bias: rng.random_bool(0.7),
    };
    let mut model = MlpModel::init(shape, seed);
    if shape.use_bias {
        for b in model.b1.iter_mut().chain(model.b2.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let batch_size = rng.random_range(1..5);
    let xs: Vec<SparseVector> = (0..batch_size)
        .map(|_| {
            let mut pairs = vec![(rng.random_range(0..shape.input_dim as u32), rng.random_range(0.2..2.0))];
            for i in 0..shape.input_dim as u32 {
                if rng.random_bool(0.5) && pairs[0].0 != i {
                    pairs.push((i, rng.random_range(-2.0..2.0)));
                }
            }
            SparseVector::from_pairs(pairs).unwrap()
        })
        .collect();
    let targets: Vec<LabelTarget> = (0..batch_size)
        .map(|_| {
            let v: Vec<f64> = (0..shape.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            LabelTarget(v.into_iter().map(|a| a / n).collect())
        })
        .collect();
    let masks: Option<Vec<Vec<f64>>> = rng
        .random_bool(0.5)
        .then(|| (0..batch_size).map(|_| dropout_mask(shape.output_dim, 0.3, &mut rng)).collect());
    let reduction = if rng.random_bool(0.5) { Reduction::Mean } else { Reduction::Sum };
    let batch: Vec<(&SparseVector, &LabelTarget)> = xs.iter().zip(&targets).collect();

    let (_, grads) = loss_and_gradients(&model, &batch, masks.as_deref(), reduction);
    let analytic = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
    let mut out = GradCheck::default();
    let tensors: &[usize] = if shape.use_bias { &[0, 1, 2, 3] } else { &[0, 2] };
    for &t in tensors {
        for i in 0..analytic[t].len() {
            let orig = tensor(&mut model, t)[i];
            tensor(&mut model, t)[i] = orig + FD_STEP;
            let plus = batch_loss(&model, &batch, masks.as_deref(), reduction);
            tensor(&mut model, t)[i] = orig - FD_STEP;
            let minus = batch_loss(&model, &batch, masks.as_deref(), reduction);
            tensor(&mut model, t)[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            out.checked += 1;
            if rel < GRAD_TOL {
                out.passed += 1;
            }
            out.worst = out.worst.max(rel);
        }
    }
    out
}

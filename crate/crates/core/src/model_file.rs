//! Binary model file.
//!
//! ```text
//! "DXML" | version: u32 | payload length: u64 | payload | SHA-256(payload)
//! ```
//!
//! All integers are little-endian. Learned arrays are stored as `f32`,
//! configuration reals as `f64`. Models produced by
//! [`crate::pipeline::train_model`] are already `f32`-exact, so saving and
//! loading reproduces them bit for bit.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::ClusterIndex;
use crate::data_io::{LabelSet, Normalization};
use crate::embedding::EmbeddingMatrix;
use crate::graph_embed::{DeepWalkConfig, WalkWeighting};
use crate::net::{MlpModel, NetShape, Reduction, TrainConfig};
use crate::pipeline::{DxmlModel, PipelineConfig, Scale};

pub const MAGIC: &[u8; 4] = b"DXML";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("checksum error: {0}")]
    Checksum(String),
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn f32s(&mut self, values: &[f64]) {
        for &v in values {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> ModelFileError {
    ModelFileError::Corrupt(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("payload ends early"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, ModelFileError> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("size overflows usize"))
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bool(&mut self) -> Result<bool, ModelFileError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("bad boolean byte {b}"))),
        }
    }
    fn f32s(&mut self, count: usize) -> Result<Vec<f64>, ModelFileError> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| corrupt("array too large"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

fn encode_payload(model: &DxmlModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let c = &model.config;
    let s = model.net.shape;

    w.u8(match c.scale {
        Scale::Small => 0,
        Scale::Large => 1,
    });
    w.usize(model.num_features);
    w.usize(model.num_labels);
    w.usize(s.output_dim);
    w.usize(s.hidden);
    w.usize(model.clusters.num_clusters());
    w.usize(model.train_labels.len());

    let dw = &c.deepwalk;
    for v in [dw.dim, dw.walks_per_node, dw.walk_length, dw.window, dw.negative_samples, dw.epochs] {
        w.usize(v);
    }
    w.f64(dw.initial_learning_rate);
    w.f64(dw.min_learning_rate);
    w.u8(match dw.weighting {
        WalkWeighting::Uniform => 0,
        WalkWeighting::CoOccurrence => 1,
    });
    w.u64(dw.seed);
    w.usize(dw.threads);

    let tr = &c.train;
    for v in [tr.learning_rate, tr.momentum, tr.weight_decay, tr.dropout_rate] {
        w.f64(v);
    }
    w.usize(tr.epochs);
    w.usize(tr.batch_size);
    w.u8(match tr.reduction {
        Reduction::Mean => 0,
        Reduction::Sum => 1,
    });
    w.bool(tr.normalize_targets);
    w.bool(tr.shuffle);
    w.u64(tr.seed);
    w.usize(tr.threads);

    w.bool(c.use_bias);
    w.usize(c.kmeans_iters);
    w.u64(c.kmeans_seed);
    w.u8(match c.normalization {
        Normalization::None => 0,
        Normalization::UnitL2 => 1,
    });
    w.usize(c.threads);

    w.f32s(model.label_embedding.values());
    w.f32s(&model.net.w1);
    w.f32s(&model.net.b1);
    w.f32s(&model.net.w2);
    w.f32s(&model.net.b2);
    w.f32s(model.clusters.centers().values());
    for &a in model.clusters.assignments() {
        w.u32(a);
    }
    w.f32s(model.train_embeddings.values());
    for labels in &model.train_labels {
        w.u32(labels.len() as u32);
        for l in labels.iter() {
            w.u32(l);
        }
    }
    w.0
}

fn decode_payload(payload: &[u8]) -> Result<DxmlModel, ModelFileError> {
    let mut r = Reader { buf: payload, pos: 0 };
    let scale = match r.u8()? {
        0 => Scale::Small,
        1 => Scale::Large,
        b => return Err(corrupt(format!("bad scale tag {b}"))),
    };
    let num_features = r.usize()?;
    let num_labels = r.usize()?;
    let dim = r.usize()?;
    let hidden = r.usize()?;
    let num_clusters = r.usize()?;
    let n_train = r.usize()?;
    if dim == 0 || hidden == 0 || num_clusters == 0 {
        return Err(corrupt("zero dimension in header"));
    }

    let mut dw_ints = [0usize; 6];
    for v in &mut dw_ints {
        *v = r.usize()?;
    }
    let deepwalk = DeepWalkConfig {
        dim: dw_ints[0],
        walks_per_node: dw_ints[1],
        walk_length: dw_ints[2],
        window: dw_ints[3],
        negative_samples: dw_ints[4],
        epochs: dw_ints[5],
        initial_learning_rate: r.f64()?,
        min_learning_rate: r.f64()?,
        weighting: match r.u8()? {
            0 => WalkWeighting::Uniform,
            1 => WalkWeighting::CoOccurrence,
            b => return Err(corrupt(format!("bad walk weighting tag {b}"))),
        },
        seed: r.u64()?,
        threads: r.usize()?,
    };

    let train = TrainConfig {
        learning_rate: r.f64()?,
        momentum: r.f64()?,
        weight_decay: r.f64()?,
        dropout_rate: r.f64()?,
        epochs: r.usize()?,
        batch_size: r.usize()?,
        reduction: match r.u8()? {
            0 => Reduction::Mean,
            1 => Reduction::Sum,
            b => return Err(corrupt(format!("bad reduction tag {b}"))),
        },
        normalize_targets: r.bool()?,
        shuffle: r.bool()?,
        seed: r.u64()?,
        threads: r.usize()?,
    };

    let use_bias = r.bool()?;
    let kmeans_iters = r.usize()?;
    let kmeans_seed = r.u64()?;
    let normalization = match r.u8()? {
        0 => Normalization::None,
        1 => Normalization::UnitL2,
        b => return Err(corrupt(format!("bad normalization tag {b}"))),
    };
    let threads = r.usize()?;

    let label_embedding = EmbeddingMatrix::from_values(dim, r.f32s(dim * num_labels)?);
    let shape = NetShape {
        input_dim: num_features,
        hidden,
        output_dim: dim,
        use_bias,
    };
    let net = MlpModel {
        shape,
        w1: r.f32s(num_features * hidden)?,
        b1: r.f32s(hidden)?,
        w2: r.f32s(hidden * dim)?,
        b2: r.f32s(dim)?,
    };
    let centers = EmbeddingMatrix::from_values(dim, r.f32s(dim * num_clusters)?);
    let assignments = (0..n_train).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let clusters =
        ClusterIndex::from_assignments(centers, assignments).map_err(|e| corrupt(e.to_string()))?;
    let train_embeddings = EmbeddingMatrix::from_values(dim, r.f32s(dim * n_train)?);
    let mut train_labels = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let len = r.u32()? as usize;
        let labels = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if labels.windows(2).any(|w| w[0] >= w[1]) || labels.last().is_some_and(|&l| l as usize >= num_labels) {
            return Err(corrupt("training label set not sorted or out of range"));
        }
        train_labels.push(LabelSet::new(labels));
    }
    if r.pos != payload.len() {
        return Err(corrupt(format!("{} trailing bytes", payload.len() - r.pos)));
    }

    Ok(DxmlModel {
        config: PipelineConfig {
            scale,
            deepwalk,
            train,
            hidden,
            use_bias,
            clusters: num_clusters,
            kmeans_iters,
            kmeans_seed,
            normalization,
            threads,
        },
        num_features,
        num_labels,
        label_embedding,
        net,
        clusters,
        train_embeddings,
        train_labels,
    })
}

pub fn to_bytes(model: &DxmlModel) -> Vec<u8> {
    let payload = encode_payload(model);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<DxmlModel, ModelFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(ModelFileError::Checksum("file truncated inside the header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion { found: version });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let expected = (HEADER_LEN as u64).checked_add(len).and_then(|v| v.checked_add(CHECKSUM_LEN as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(ModelFileError::Checksum(format!(
            "file is {} bytes, header declares a {len}-byte payload (truncated or padded)",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - CHECKSUM_LEN];
    let stored = &bytes[bytes.len() - CHECKSUM_LEN..];
    if Sha256::digest(payload).as_slice() != stored {
        return Err(ModelFileError::Checksum("payload digest mismatch".into()));
    }
    decode_payload(payload)
}

pub fn save_model(model: &DxmlModel, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    std::fs::write(path.as_ref(), to_bytes(model))
        .map_err(|e| ModelFileError::Io(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DxmlModel, ModelFileError> {
    let bytes = std::fs::read(path.as_ref())
        .map_err(|e| ModelFileError::Io(format!("{}: {e}", path.as_ref().display())))?;
    from_bytes(&bytes)
}

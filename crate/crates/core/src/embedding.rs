//! Dense column-major matrix of fixed-dimension vectors.
//!
//! Used for the label embedding matrix (one column per label), embedded
//! training points and cluster centers.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    count: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(dim: usize, count: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self {
            dim,
            count,
            values: vec![0.0; dim * count],
        }
    }

    /// Wraps column-major `values` (`dim` entries per column).
    pub fn from_values(dim: usize, values: Vec<f64>) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        assert_eq!(values.len() % dim, 0, "values length is not a multiple of dim");
        Self {
            dim,
            count: values.len() / dim,
            values,
        }
    }

    pub fn from_columns<C: AsRef<[f64]>>(dim: usize, columns: &[C]) -> Self {
        let mut values = Vec::with_capacity(dim * columns.len());
        for c in columns {
            assert_eq!(c.as_ref().len(), dim, "column length differs from dim");
            values.extend_from_slice(c.as_ref());
        }
        Self::from_values(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Rounds every entry to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        round_slice_to_f32(&mut self.values);
    }

    /// One `index v1 v2 ... v_dim` line per column.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (j, col) in self.columns().enumerate() {
            let _ = write!(out, "{j}");
            for v in col {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn round_slice_to_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_layout() {
        let m = EmbeddingMatrix::from_columns(2, &[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(m.count(), 3);
        assert_eq!(m.column(1), &[3.0, 4.0]);
        assert_eq!(m.to_text(), "0 1 2\n1 3 4\n2 5 6\n");
    }

    #[test]
    fn cosine() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert!((cosine_similarity(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }
}

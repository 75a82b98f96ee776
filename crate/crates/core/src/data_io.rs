//! Reading and writing multi-label datasets in the Extreme Classification
//! Repository sparse text format.
//!
//! ```text
//! n d L
//! lbl,lbl,... idx:val idx:val ...
//! ```
//!
//! The first line holds the number of points, features and labels. Each of
//! the following `n` lines lists comma-separated label ids, a space, then
//! `feature:value` pairs. The label field is empty for unlabeled points, in
//! which case the line starts with a space. All indices are 0-based.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("expected {expected} data lines after the header, found {found}")]
    LineCount { expected: usize, found: usize },
    #[error("split file line {line}: {message}")]
    Split { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(err: std::io::Error) -> Self {
        DataError::Io(err.to_string())
    }
}

fn line_err(line: usize, message: impl Into<String>) -> DataError {
    DataError::Line {
        line,
        message: message.into(),
    }
}

/// A sparse feature vector stored as parallel index/value arrays.
///
/// Indices are strictly increasing and no stored value is zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from `(index, value)` pairs in any order.
    ///
    /// Zero values are dropped; a repeated index is an error.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self, String> {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (k, &(index, value)) in pairs.iter().enumerate() {
            if k > 0 && pairs[k - 1].0 == index {
                return Err(format!("duplicate feature index {index}"));
            }
            if !value.is_finite() {
                return Err(format!("non-finite value for feature {index}"));
            }
            if value != 0.0 {
                indices.push(index);
                values.push(value);
            }
        }
        Ok(Self { indices, values })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest stored index plus one, or 0 for the empty vector.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every stored value by `factor` (which must be nonzero).
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Sorted, duplicate-free set of label ids. May be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    pub fn new(mut labels: Vec<u32>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        Self(labels)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: u32) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<u32> for LabelSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Point {
    pub features: SparseVector,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_features: usize,
    num_labels: usize,
    points: Vec<Point>,
}

impl Dataset {
    /// Creates a dataset, checking every point against `num_features` and `num_labels`.
    pub fn new(num_features: usize, num_labels: usize, points: Vec<Point>) -> Result<Self, DataError> {
        for (i, p) in points.iter().enumerate() {
            if p.features.min_dim() > num_features {
                return Err(line_err(
                    i + 2,
                    format!("feature index {} >= d = {num_features}", p.features.min_dim() - 1),
                ));
            }
            if let Some(&l) = p.labels.as_slice().last() {
                if l as usize >= num_labels {
                    return Err(line_err(i + 2, format!("label index {l} >= L = {num_labels}")));
                }
            }
        }
        Ok(Self {
            num_features,
            num_labels,
            points,
        })
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn label_sets(&self) -> impl Iterator<Item = &LabelSet> {
        self.points.iter().map(|p| &p.labels)
    }

    pub fn num_labeled(&self) -> usize {
        self.points.iter().filter(|p| !p.labels.is_empty()).count()
    }

    /// Returns the points at `ids`, in that order.
    pub fn subset(&self, ids: &[usize]) -> Result<Dataset, DataError> {
        let mut points = Vec::with_capacity(ids.len());
        for &id in ids {
            let p = self.points.get(id).ok_or_else(|| DataError::Split {
                line: 0,
                message: format!("point id {id} out of range for {} points", self.points.len()),
            })?;
            points.push(p.clone());
        }
        Ok(Dataset {
            num_features: self.num_features,
            num_labels: self.num_labels,
            points,
        })
    }

    pub fn stats(&self) -> DatasetStats {
        let total_labels: usize = self.points.iter().map(|p| p.labels.len()).sum();
        let n = self.points.len();
        DatasetStats {
            num_points: n,
            num_features: self.num_features,
            num_labels: self.num_labels,
            avg_labels_per_point: if n == 0 { 0.0 } else { total_labels as f64 / n as f64 },
            avg_points_per_label: if self.num_labels == 0 {
                0.0
            } else {
                total_labels as f64 / self.num_labels as f64
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub num_points: usize,
    pub num_features: usize,
    pub num_labels: usize,
    pub avg_labels_per_point: f64,
    pub avg_points_per_label: f64,
}

fn parse_header(line: Option<&str>) -> Result<(usize, usize, usize), DataError> {
    let line = line.ok_or_else(|| DataError::MalformedHeader("empty input".into()))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(DataError::MalformedHeader(format!(
            "expected `n d L`, got {line:?}"
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| DataError::MalformedHeader(format!("not a non-negative integer: {s:?}")))
    };
    Ok((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?))
}

fn parse_point(line: &str, lineno: usize, d: usize, num_labels: usize) -> Result<Point, DataError> {
    let (label_field, feature_field) = match line.find([' ', '\t']) {
        Some(pos) => (&line[..pos], &line[pos + 1..]),
        None if line.contains(':') => ("", line),
        None => (line, ""),
    };

    let mut labels = Vec::new();
    if !label_field.is_empty() {
        for tok in label_field.split(',') {
            let l: u32 = tok
                .trim()
                .parse()
                .map_err(|_| line_err(lineno, format!("bad label {tok:?}")))?;
            if l as usize >= num_labels {
                return Err(line_err(lineno, format!("label index {l} >= L = {num_labels}")));
            }
            labels.push(l);
        }
    }

    let mut pairs = Vec::new();
    for tok in feature_field.split_whitespace() {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| line_err(lineno, format!("expected idx:val, got {tok:?}")))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| line_err(lineno, format!("bad feature index {idx:?}")))?;
        if idx as usize >= d {
            return Err(line_err(lineno, format!("feature index {idx} >= d = {d}")));
        }
        let val = f64::from_str(val).map_err(|_| line_err(lineno, format!("bad feature value {val:?}")))?;
        pairs.push((idx, val));
    }
    let features = SparseVector::from_pairs(pairs).map_err(|m| line_err(lineno, m))?;
    Ok(Point {
        features,
        labels: LabelSet::new(labels),
    })
}

/// Parses a dataset in repository format. Error line numbers are 1-based.
pub fn parse_repo_file<R: BufRead>(reader: R) -> Result<Dataset, DataError> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    let (n, d, num_labels) = parse_header(header.as_deref().map(|l| l.trim_end_matches('\r')))?;

    let mut points = Vec::with_capacity(n);
    let mut lineno = 1;
    let mut trailing_blank = 0;
    for line in lines {
        let line = line?;
        lineno += 1;
        let line = line.trim_end_matches('\r');
        if points.len() == n {
            if line.trim().is_empty() {
                trailing_blank += 1;
                continue;
            }
            return Err(DataError::LineCount {
                expected: n,
                found: lineno - 1 - trailing_blank,
            });
        }
        points.push(parse_point(line, lineno, d, num_labels)?);
    }
    if points.len() != n {
        return Err(DataError::LineCount {
            expected: n,
            found: points.len(),
        });
    }
    Ok(Dataset {
        num_features: d,
        num_labels,
        points,
    })
}

pub fn parse_repo_str(text: &str) -> Result<Dataset, DataError> {
    parse_repo_file(text.as_bytes())
}

pub fn read_repo_file(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_repo_file(std::io::BufReader::new(file))
}

/// Serializes a dataset in repository format.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so `parse_repo_str(&write_repo_file(d)) == d`.
pub fn write_repo_file(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        dataset.num_points(),
        dataset.num_features,
        dataset.num_labels
    );
    for p in &dataset.points {
        for (k, l) in p.labels.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{l}");
        }
        for (idx, val) in p.features.iter() {
            let _ = write!(out, " {idx}:{val:?}");
        }
        if p.labels.is_empty() && p.features.is_empty() {
            out.push(' ');
        }
        out.push('\n');
    }
    out
}

/// Reads one column of a repository split file.
///
/// Split files hold one whitespace-separated column per split, each entry a
/// 1-based point id. The returned ids are 0-based.
pub fn read_split_column<R: BufRead>(reader: R, column: usize) -> Result<Vec<usize>, DataError> {
    let mut ids = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tok = line.split_whitespace().nth(column).ok_or_else(|| DataError::Split {
            line: i + 1,
            message: format!("no column {column}"),
        })?;
        let id: usize = tok.parse().map_err(|_| DataError::Split {
            line: i + 1,
            message: format!("bad point id {tok:?}"),
        })?;
        if id == 0 {
            return Err(DataError::Split {
                line: i + 1,
                message: "point ids are 1-based".into(),
            });
        }
        ids.push(id - 1);
    }
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    UnitL2,
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalization::None),
            "unit_l2" | "unit-l2" | "l2" => Ok(Normalization::UnitL2),
            other => Err(format!("unknown normalization {other:?} (expected none or unit_l2)")),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::UnitL2 => "unit_l2",
        })
    }
}

pub fn normalize_vector(v: &mut SparseVector, scheme: Normalization) {
    if scheme == Normalization::UnitL2 {
        let norm = v.norm();
        if norm > 0.0 {
            for x in &mut v.values {
                *x /= norm;
            }
        }
    }
}

pub fn normalize_features(mut dataset: Dataset, scheme: Normalization) -> Dataset {
    for p in &mut dataset.points {
        normalize_vector(&mut p.features, scheme);
    }
    dataset
}

//! Validated domain types shared by every stage of the pipeline.
//!
//! All types are immutable after construction. Row order, not ids, defines
//! which embedding row, label, and confidence row belong together; ids are
//! only checked for consistency when two containers are paired.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on confidence-row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Dense `M x D` feature matrix with one id per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
    ids: Vec<u32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major values, checking every invariant.
    pub fn new(rows: usize, dim: usize, values: Vec<f32>, ids: Vec<u32>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Empty("embedding matrix"));
        }
        if dim == 0 {
            return Err(Error::ZeroDimension("embedding matrix"));
        }
        let expected = rows
            .checked_mul(dim)
            .ok_or(Error::DimensionOverflow { rows: rows as u64, cols: dim as u64 })?;
        if values.len() != expected {
            return Err(Error::CardinalityMismatch {
                what: "values vs rows*dim",
                left: values.len(),
                right: expected,
            });
        }
        if ids.len() != rows {
            return Err(Error::CardinalityMismatch { what: "ids vs rows", left: ids.len(), right: rows });
        }
        check_finite(&values, dim)?;
        check_ascending(&ids)?;
        Ok(Self { rows, dim, values, ids })
    }

    /// Builds a matrix with ids `0..M`.
    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        let m = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(m * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(m, dim, values, (0..m as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::new(self.rows, self.dim, values, self.ids.clone())
    }
}

/// What a label set represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Noisy,
    Refined,
    Truth,
}

/// Per-sample class labels in `[0, C)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    ids: Vec<u32>,
    labels: Vec<usize>,
    num_classes: usize,
    kind: LabelKind,
}

impl LabelSet {
    pub fn new(ids: Vec<u32>, labels: Vec<usize>, num_classes: usize, kind: LabelKind) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label set"));
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if ids.len() != labels.len() {
            return Err(Error::CardinalityMismatch { what: "ids vs labels", left: ids.len(), right: labels.len() });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange { row, label: label as u64, num_classes });
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { ids, labels, num_classes, kind })
    }

    /// Labels with ids `0..M`.
    pub fn from_labels(labels: Vec<usize>, num_classes: usize, kind: LabelKind) -> Result<Self> {
        let ids = (0..labels.len() as u32).collect();
        Self::new(ids, labels, num_classes, kind)
    }

    /// Same ids and class count, new labels. Used by the injectors and the
    /// relabel engine, whose outputs are valid by construction.
    pub(crate) fn with_labels(&self, labels: Vec<usize>, kind: LabelKind) -> Self {
        debug_assert_eq!(labels.len(), self.labels.len());
        debug_assert!(labels.iter().all(|&l| l < self.num_classes));
        Self { ids: self.ids.clone(), labels, num_classes: self.num_classes, kind }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn relabeled_as(&self, kind: LabelKind) -> Self {
        Self { kind, ..self.clone() }
    }

    /// Number of positions where `self` and `other` disagree.
    pub fn count_differences(&self, other: &LabelSet) -> usize {
        self.labels.iter().zip(&other.labels).filter(|(a, b)| a != b).count()
    }
}

/// Row-stochastic `M x C` matrix of class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMatrix {
    rows: usize,
    num_classes: usize,
    values: Vec<f32>,
    ids: Vec<u32>,
}

impl ConfidenceMatrix {
    pub fn new(rows: usize, num_classes: usize, values: Vec<f32>, ids: Vec<u32>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Empty("confidence matrix"));
        }
        if num_classes == 0 {
            return Err(Error::ZeroDimension("confidence matrix"));
        }
        let expected = rows
            .checked_mul(num_classes)
            .ok_or(Error::DimensionOverflow { rows: rows as u64, cols: num_classes as u64 })?;
        if values.len() != expected {
            return Err(Error::CardinalityMismatch {
                what: "values vs rows*classes",
                left: values.len(),
                right: expected,
            });
        }
        if ids.len() != rows {
            return Err(Error::CardinalityMismatch { what: "ids vs rows", left: ids.len(), right: rows });
        }
        check_finite(&values, num_classes)?;
        check_ascending(&ids)?;
        for (row, chunk) in values.chunks_exact(num_classes).enumerate() {
            if let Some(col) = chunk.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!(
                    "confidence {} at row {row}, column {col} outside [0, 1]",
                    chunk[col]
                )));
            }
            let sum: f64 = chunk.iter().map(|&p| f64::from(p)).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(Self { rows, num_classes, values, ids })
    }

    /// Builds a matrix from f64 rows (rounded to f32) with ids `0..M`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { expected: c, found: row.len() });
            }
            values.extend(row.iter().map(|&p| p as f32));
        }
        Self::new(rows.len(), c, values, (0..rows.len() as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.num_classes)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

/// Labeled anchor embeddings: reliable exemplars for every class.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    embeddings: EmbeddingMatrix,
    classes: Vec<usize>,
    num_classes: usize,
}

impl AnchorSet {
    pub fn new(embeddings: EmbeddingMatrix, classes: Vec<usize>, num_classes: usize) -> Result<Self> {
        if classes.len() != embeddings.len() {
            return Err(Error::CardinalityMismatch {
                what: "anchor classes vs anchor rows",
                left: classes.len(),
                right: embeddings.len(),
            });
        }
        let mut counts = vec![0usize; num_classes];
        for (row, &c) in classes.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::LabelOutOfRange { row, label: c as u64, num_classes });
            }
            counts[c] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c));
        }
        Ok(Self { embeddings, classes, num_classes })
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Anchor vectors belonging to `class`, in file order.
    pub fn class_rows(&self, class: usize) -> impl Iterator<Item = &[f32]> + '_ {
        self.classes
            .iter()
            .zip(self.embeddings.rows())
            .filter(move |(&c, _)| c == class)
            .map(|(_, row)| row)
    }

    /// Returns a copy with every anchor multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.embeddings.scaled(factor)?, self.classes.clone(), self.num_classes)
    }
}

/// Embeddings paired row-by-row with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    embeddings: EmbeddingMatrix,
    labels: LabelSet,
}

/// Pairs embeddings with labels, checking cardinality and id consistency.
pub fn bind_dataset(embeddings: EmbeddingMatrix, labels: LabelSet) -> Result<Dataset> {
    if labels.is_empty() || embeddings.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::CardinalityMismatch {
            what: "embeddings vs labels",
            left: embeddings.len(),
            right: labels.len(),
        });
    }
    if let Some(row) = (0..labels.len()).find(|&i| embeddings.ids()[i] != labels.ids()[i]) {
        return Err(Error::IdMismatch { row, left: embeddings.ids()[row], right: labels.ids()[row] });
    }
    Ok(Dataset { embeddings, labels })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Same embeddings, different labels.
    pub fn with_labels(&self, labels: LabelSet) -> Result<Dataset> {
        bind_dataset(self.embeddings.clone(), labels)
    }
}

fn check_finite(values: &[f32], cols: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite { row: i / cols, col: i % cols }),
        None => Ok(()),
    }
}

fn check_ascending(ids: &[u32]) -> Result<()> {
    for (row, pair) in ids.windows(2).enumerate() {
        if pair[1] == pair[0] {
            return Err(Error::DuplicateId(pair[1]));
        }
        if pair[1] < pair[0] {
            return Err(Error::UnsortedIds { row: row + 1, id: pair[1] });
        }
    }
    Ok(())
}

//! Linear softmax classification head.
//!
//! The head maps an embedding `x` to `softmax(W x + b)`. Training minimises
//! mean cross-entropy plus `l2_weight * ||W||^2` (the bias is not
//! penalised) with mini-batch gradient descent. The learning rate decays
//! from its initial value to zero along a cosine over all steps, and batch
//! order is a seeded shuffle per epoch. Gradients are accumulated in a fixed
//! sample order, so trained parameters are bit-identical across runs.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ConfidenceMatrix, Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::io::{check_length, check_magic, read_f32s, read_file, read_u32, write_file};
use crate::rng::{stream, stream_rng};
use crate::sim::softmax;

pub const HEAD_MAGIC: &[u8; 4] = b"LH01";

/// Weight matrix `W` (`C x D`, row-major) and bias `b` (`C`).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    num_classes: usize,
    dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    /// Hex SHA-256 of the training data, when the head came from `train_head`.
    trained_on: Option<String>,
}

impl LinearHead {
    pub fn new(num_classes: usize, dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::ZeroDimension("linear head"));
        }
        if weights.len() != num_classes * dim {
            return Err(Error::DimensionMismatch { expected: num_classes * dim, found: weights.len() });
        }
        if bias.len() != num_classes {
            return Err(Error::DimensionMismatch { expected: num_classes, found: bias.len() });
        }
        if let Some(i) = weights.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i / dim, col: i % dim });
        }
        if let Some(i) = bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: dim });
        }
        Ok(Self { num_classes, dim, weights, bias, trained_on: None })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        Self::new(num_classes, dim, vec![0.0; num_classes * dim], vec![0.0; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn trained_on(&self) -> Option<&str> {
        self.trained_on.as_deref()
    }

    /// Reorders classes: class `i` of the result is class `order[i]` of `self`.
    pub fn permute_classes(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.num_classes {
            return Err(Error::DimensionMismatch { expected: self.num_classes, found: order.len() });
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        for &c in order {
            weights.extend_from_slice(&self.weights[c * self.dim..(c + 1) * self.dim]);
        }
        let bias = order.iter().map(|&c| self.bias[c]).collect();
        Self::new(self.num_classes, self.dim, weights, bias)
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(w, &b)| w.iter().zip(x).map(|(&w, &x)| f64::from(w) * f64::from(x)).sum::<f64>() + f64::from(b))
            .collect()
    }

    pub fn predict(&self, x: &[f32]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * (self.weights.len() + self.bias.len()));
        out.extend_from_slice(HEAD_MAGIC);
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        check_magic(bytes, HEAD_MAGIC)?;
        if bytes.len() < 12 {
            return Err(Error::Truncated { expected: 12, found: bytes.len() as u64 });
        }
        let c = u64::from(read_u32(bytes, 4));
        let d = u64::from(read_u32(bytes, 8));
        let expected = c
            .checked_mul(d)
            .and_then(|n| n.checked_add(c))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(12))
            .filter(|&n| usize::try_from(n).is_ok())
            .ok_or(Error::DimensionOverflow { rows: c, cols: d })?;
        check_length(bytes, expected)?;
        let mut params = read_f32s(&bytes[12..]);
        let bias = params.split_off((c * d) as usize);
        Self::new(c as usize, d as usize, params, bias)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `softmax(W x + b)` for every row of `emb`.
pub fn confidences(head: &LinearHead, emb: &EmbeddingMatrix) -> Result<ConfidenceMatrix> {
    if emb.dim() != head.dim {
        return Err(Error::DimensionMismatch { expected: head.dim, found: emb.dim() });
    }
    let mut values = Vec::with_capacity(emb.len() * head.num_classes);
    for x in emb.rows() {
        values.extend(softmax(&head.logits(x)).into_iter().map(|p| p as f32));
    }
    ConfidenceMatrix::new(emb.len(), head.num_classes, values, emb.ids().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub seed: u64,
    /// Marks a warm-started fine-tuning run.
    pub fine_tune: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 128, learning_rate: 0.1, l2_weight: 1e-4, seed: 0, fine_tune: false }
    }
}

impl TrainConfig {
    /// Short, low learning-rate schedule used after relabeling.
    pub fn fine_tuning(seed: u64) -> Self {
        Self { epochs: 50, learning_rate: 0.001, seed, fine_tune: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.l2_weight.is_finite() && self.l2_weight >= 0.0) {
            return Err(Error::invalid("l2_weight must be non-negative"));
        }
        Ok(())
    }

    /// Learning rate at `step` of `total` steps.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let progress = step as f64 / total.max(1) as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Regularised cross-entropy over a set of samples, in f64.
///
/// Parameters are passed as flat slices so the objective can be probed
/// directly, e.g. by a finite-difference check.
pub struct SoftmaxObjective<'a> {
    features: &'a [f64],
    labels: &'a [usize],
    num_classes: usize,
    dim: usize,
    l2_weight: f64,
}

impl<'a> SoftmaxObjective<'a> {
    pub fn new(features: &'a [f64], labels: &'a [usize], num_classes: usize, dim: usize, l2_weight: f64) -> Result<Self> {
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch { expected: labels.len() * dim, found: features.len() });
        }
        if labels.is_empty() {
            return Err(Error::Empty("objective samples"));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange { row, label: l as u64, num_classes });
        }
        Ok(Self { features, labels, num_classes, dim, l2_weight })
    }

    /// Zero-initialised `(W, b)` of the right shape.
    pub fn zero_parameters(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.num_classes * self.dim], vec![0.0; self.num_classes])
    }

    fn probabilities(&self, weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = weights
            .chunks_exact(self.dim)
            .zip(bias)
            .map(|(w, b)| w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect();
        softmax(&logits)
    }

    fn samples(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn loss(&self, weights: &[f64], bias: &[f64]) -> f64 {
        let n = self.labels.len() as f64;
        let ce: f64 = self
            .samples()
            .map(|(x, y)| -self.probabilities(weights, bias, x)[y].max(f64::MIN_POSITIVE).ln())
            .sum();
        ce / n + self.l2_weight * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient with respect to `(W, b)`.
    pub fn gradient(&self, weights: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gw = vec![0.0; weights.len()];
        let mut gb = vec![0.0; bias.len()];
        self.accumulate(weights, bias, self.samples(), &mut gw, &mut gb);
        let n = self.labels.len() as f64;
        for (g, w) in gw.iter_mut().zip(weights) {
            *g = *g / n + 2.0 * self.l2_weight * w;
        }
        for g in &mut gb {
            *g /= n;
        }
        (gw, gb)
    }

    /// Adds the un-normalised cross-entropy gradient of `samples` into
    /// `(gw, gb)`, in iteration order.
    fn accumulate<'s>(
        &self,
        weights: &[f64],
        bias: &[f64],
        samples: impl Iterator<Item = (&'s [f64], usize)>,
        gw: &mut [f64],
        gb: &mut [f64],
    ) {
        for (x, y) in samples {
            let mut p = self.probabilities(weights, bias, x);
            p[y] -= 1.0;
            for (c, &err) in p.iter().enumerate() {
                gb[c] += err;
                for (g, &xv) in gw[c * self.dim..(c + 1) * self.dim].iter_mut().zip(x) {
                    *g += err * xv;
                }
            }
        }
    }
}

/// Hex SHA-256 over embedding bytes and labels.
pub fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut hasher = Sha256::new();
    for v in ds.embeddings().values() {
        hasher.update(v.to_le_bytes());
    }
    for &l in ds.labels().labels() {
        hasher.update((l as u32).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Trained head plus the full-dataset objective after every epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub head: LinearHead,
    pub epoch_losses: Vec<f64>,
}

pub fn train_head(ds: &Dataset, cfg: &TrainConfig, warm_start: Option<&LinearHead>) -> Result<LinearHead> {
    Ok(run_training(ds, cfg, warm_start, false)?.head)
}

/// Like [`train_head`], also recording the objective after every epoch.
pub fn train_head_traced(ds: &Dataset, cfg: &TrainConfig, warm_start: Option<&LinearHead>) -> Result<TrainOutcome> {
    run_training(ds, cfg, warm_start, true)
}

fn run_training(ds: &Dataset, cfg: &TrainConfig, warm_start: Option<&LinearHead>, trace: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (c, d, m) = (ds.num_classes(), ds.dim(), ds.len());
    let (mut weights, mut bias) = match warm_start {
        Some(h) if h.num_classes != c || h.dim != d => {
            return Err(Error::DimensionMismatch { expected: c * d, found: h.num_classes * h.dim })
        }
        Some(h) => (
            h.weights.iter().map(|&v| f64::from(v)).collect::<Vec<_>>(),
            h.bias.iter().map(|&v| f64::from(v)).collect::<Vec<_>>(),
        ),
        None => (vec![0.0; c * d], vec![0.0; c]),
    };
    let features: Vec<f64> = ds.embeddings().values().iter().map(|&v| f64::from(v)).collect();
    let labels = ds.labels().labels();
    let objective = SoftmaxObjective::new(&features, labels, c, d, cfg.l2_weight)?;

    let batch = cfg.batch_size.min(m);
    let steps_per_epoch = m.div_ceil(batch);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = stream_rng(cfg.seed, stream::TRAIN_SHUFFLE);
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    let mut epoch_losses = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            let samples = chunk.iter().map(|&i| (&features[i * d..(i + 1) * d], labels[i]));
            objective.accumulate(&weights, &bias, samples, &mut gw, &mut gb);
            let lr = cfg.learning_rate_at(step, total_steps);
            let inv = 1.0 / chunk.len() as f64;
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= lr * (g * inv + 2.0 * cfg.l2_weight * *w);
            }
            for (b, g) in bias.iter_mut().zip(&gb) {
                *b -= lr * g * inv;
            }
            step += 1;
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        if trace {
            let loss = objective.loss(&weights, &bias);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_losses.push(loss);
        }
    }

    let to_f32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
    let mut head = LinearHead::new(c, d, to_f32(weights), to_f32(bias)).map_err(|_| Error::Diverged { epoch: cfg.epochs })?;
    head.trained_on = Some(dataset_fingerprint(ds));
    Ok(TrainOutcome { head, epoch_losses })
}

/// Fraction of rows in `ds` whose predicted class matches the label.
pub fn accuracy(head: &LinearHead, ds: &Dataset) -> Result<f64> {
    if ds.dim() != head.dim {
        return Err(Error::DimensionMismatch { expected: head.dim, found: ds.dim() });
    }
    let hits = ds
        .embeddings()
        .rows()
        .zip(ds.labels().labels())
        .filter(|(x, &y)| head.predict(x) == y)
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bind_dataset, LabelKind, LabelSet};

    fn toy_separable() -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let t = i as f32 / 40.0;
            rows.push(vec![-1.5 - t, t - 0.5]);
            labels.push(0);
            rows.push(vec![1.5 + t, 0.5 - t]);
            labels.push(1);
        }
        bind_dataset(
            EmbeddingMatrix::from_rows(rows).unwrap(),
            LabelSet::from_labels(labels, 2, LabelKind::Noisy).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_head_is_uniform() {
        let head = LinearHead::zeros(4, 3).unwrap();
        let emb = EmbeddingMatrix::from_rows(vec![vec![1.0, -2.0, 3.0], vec![0.0, 0.0, 0.0]]).unwrap();
        for row in confidences(&head, &emb).unwrap().rows() {
            assert!(row.iter().all(|&p| p == 0.25));
        }
    }

    #[test]
    fn large_bias_saturates() {
        let head = LinearHead::new(3, 2, vec![0.0; 6], vec![20.0, 0.0, 0.0]).unwrap();
        let emb = EmbeddingMatrix::from_rows(vec![vec![5.0, -1.0]]).unwrap();
        let conf = confidences(&head, &emb).unwrap();
        assert!(f64::from(conf.row(0)[0]) >= 1.0 - 1e-8);
    }

    #[test]
    fn class_permutation_permutes_columns() {
        let head = LinearHead::new(3, 2, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6], vec![0.0, 0.1, -0.1]).unwrap();
        let order = [2, 0, 1];
        let permuted = head.permute_classes(&order).unwrap();
        let emb = EmbeddingMatrix::from_rows(vec![vec![1.0, 2.0], vec![-0.5, 0.25]]).unwrap();
        let (a, b) = (confidences(&head, &emb).unwrap(), confidences(&permuted, &emb).unwrap());
        for i in 0..2 {
            for (j, &c) in order.iter().enumerate() {
                assert_eq!(b.row(i)[j], a.row(i)[c]);
            }
        }
    }

    #[test]
    fn confidence_dim_mismatch() {
        let head = LinearHead::zeros(2, 3).unwrap();
        let emb = EmbeddingMatrix::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        assert!(matches!(confidences(&head, &emb).unwrap_err(), Error::DimensionMismatch { .. }));
    }

    #[test]
    fn lh01_round_trip_and_errors() {
        let head = LinearHead::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0], vec![0.5, -0.5]).unwrap();
        let bytes = head.to_bytes();
        assert_eq!(bytes.len(), 12 + 4 * 8);
        assert_eq!(LinearHead::from_bytes(&bytes).unwrap(), head);
        assert!(matches!(LinearHead::from_bytes(&bytes[..20]).unwrap_err(), Error::Truncated { .. }));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(LinearHead::from_bytes(&bad).unwrap_err(), Error::BadMagic { .. }));
    }

    #[test]
    fn separable_toy_is_learned() {
        let ds = toy_separable();
        let head = train_head(&ds, &TrainConfig { seed: 3, ..TrainConfig::default() }, None).unwrap();
        assert_eq!(accuracy(&head, &ds).unwrap(), 1.0);
        assert_eq!(head.trained_on(), Some(dataset_fingerprint(&ds).as_str()));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy_separable();
        let cfg = TrainConfig { epochs: 20, batch_size: 16, seed: 9, ..TrainConfig::default() };
        assert_eq!(train_head(&ds, &cfg, None).unwrap(), train_head(&ds, &cfg, None).unwrap());
    }

    #[test]
    fn diverging_run_errors() {
        let rows = (0..20).map(|i| vec![1e6 * (i as f32 + 1.0), -1e6]).collect();
        let labels = (0..20).map(|i| i % 2).collect();
        let ds = bind_dataset(
            EmbeddingMatrix::from_rows(rows).unwrap(),
            LabelSet::from_labels(labels, 2, LabelKind::Noisy).unwrap(),
        )
        .unwrap();
        let cfg = TrainConfig { epochs: 50, learning_rate: 1e30, l2_weight: 1.0, ..TrainConfig::default() };
        assert!(matches!(train_head(&ds, &cfg, None).unwrap_err(), Error::Diverged { .. }));
    }

    #[test]
    fn warm_start_shape_checked() {
        let ds = toy_separable();
        let wrong = LinearHead::zeros(3, 2).unwrap();
        assert!(train_head(&ds, &TrainConfig::fine_tuning(1), Some(&wrong)).is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0, 100), 0.1);
        assert!(cfg.learning_rate_at(100, 100).abs() < 1e-15);
        assert!((cfg.learning_rate_at(50, 100) - 0.05).abs() < 1e-15);
    }
}

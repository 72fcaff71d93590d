//! Desk-scale benchmark generator.
//!
//! Real embeddings are isotropic Gaussian clusters, one per class, with
//! means drawn uniformly on a sphere of radius `class_separation / 2`.
//! Anchors come from the same clusters shifted by a per-class offset of
//! length `anchor_shift`, which stands in for the gap between synthetic and
//! real feature distributions. Because the generating model is known, the
//! exact class posterior of every sample is available as an oracle.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{bind_dataset, AnchorSet, ConfidenceMatrix, Dataset, EmbeddingMatrix, LabelKind, LabelSet};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub anchors_per_class: usize,
    pub class_separation: f64,
    pub intra_std: f64,
    pub anchor_shift: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 32,
            samples_per_class: 500,
            anchors_per_class: 100,
            class_separation: 6.0,
            intra_std: 1.0,
            anchor_shift: 1.0,
            seed: 7,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 {
            return Err(Error::invalid("num_classes and dim must be positive"));
        }
        if self.samples_per_class == 0 || self.anchors_per_class == 0 {
            return Err(Error::invalid("samples_per_class and anchors_per_class must be positive"));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(Error::invalid("class_separation must be finite and non-negative"));
        }
        if !(self.intra_std.is_finite() && self.intra_std > 0.0) {
            return Err(Error::invalid("intra_std must be finite and positive"));
        }
        if !(self.anchor_shift.is_finite() && self.anchor_shift >= 0.0) {
            return Err(Error::invalid("anchor_shift must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Everything `generate_benchmark` produces.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub spec: SimSpec,
    /// Real embeddings with their ground-truth labels, class-major order.
    pub dataset: Dataset,
    pub anchors: AnchorSet,
    /// Exact posterior `P(c | x_i)` under the generating mixture.
    pub posteriors: ConfidenceMatrix,
    /// Class means used for the real samples.
    pub means: Vec<Vec<f64>>,
    /// Per-class anchor offsets, each of length `anchor_shift`.
    pub anchor_offsets: Vec<Vec<f64>>,
}

impl Benchmark {
    pub fn truth(&self) -> &LabelSet {
        self.dataset.labels()
    }

    /// Fresh samples from the same class clusters, for held-out evaluation.
    /// Independent of the training samples.
    pub fn heldout(&self, samples_per_class: usize) -> Result<Dataset> {
        let mut rng = stream_rng(self.spec.seed, stream::HELDOUT_SAMPLES);
        draw_dataset(&self.means, samples_per_class, self.spec.intra_std, &mut rng)
    }
}

fn unit_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn draw_cluster(mean: &[f64], count: usize, std: f64, rng: &mut impl Rng, out: &mut Vec<f32>) {
    for _ in 0..count {
        for &m in mean {
            let z: f64 = rng.sample(StandardNormal);
            out.push((m + std * z) as f32);
        }
    }
}

fn draw_dataset(means: &[Vec<f64>], per_class: usize, std: f64, rng: &mut impl Rng) -> Result<Dataset> {
    let c = means.len();
    let dim = means[0].len();
    let mut values = Vec::with_capacity(c * per_class * dim);
    for mean in means {
        draw_cluster(mean, per_class, std, rng, &mut values);
    }
    let m = c * per_class;
    let embeddings = EmbeddingMatrix::new(m, dim, values, (0..m as u32).collect())?;
    let labels = (0..c).flat_map(|k| std::iter::repeat_n(k, per_class)).collect();
    bind_dataset(embeddings, LabelSet::from_labels(labels, c, LabelKind::Truth)?)
}

/// Posterior `P(c | x)` for equal-prior isotropic Gaussians with shared `std`.
pub fn gaussian_posterior(means: &[Vec<f64>], std: f64, x: &[f32]) -> Vec<f64> {
    let inv = 1.0 / (2.0 * std * std);
    let logits: Vec<f64> = means
        .iter()
        .map(|mean| {
            let d2: f64 = mean.iter().zip(x).map(|(m, &v)| (f64::from(v) - m).powi(2)).sum();
            -d2 * inv
        })
        .collect();
    softmax(&logits)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Rounds a probability row to f32. The row sum drifts by at most a few
/// f32 ulps, well inside the confidence-row tolerance.
pub(crate) fn posterior_row_f32(row: &[f64]) -> Vec<f32> {
    row.iter().map(|&p| p as f32).collect()
}

pub fn generate_benchmark(spec: &SimSpec) -> Result<Benchmark> {
    spec.validate()?;
    let radius = spec.class_separation / 2.0;

    let mut rng = stream_rng(spec.seed, stream::CLASS_MEANS);
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| unit_direction(spec.dim, &mut rng).into_iter().map(|v| v * radius).collect())
        .collect();

    let mut rng = stream_rng(spec.seed, stream::ANCHOR_SHIFTS);
    let anchor_offsets: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| unit_direction(spec.dim, &mut rng).into_iter().map(|v| v * spec.anchor_shift).collect())
        .collect();

    let mut rng = stream_rng(spec.seed, stream::REAL_SAMPLES);
    let dataset = draw_dataset(&means, spec.samples_per_class, spec.intra_std, &mut rng)?;

    let mut rng = stream_rng(spec.seed, stream::ANCHOR_SAMPLES);
    let mut values = Vec::with_capacity(spec.num_classes * spec.anchors_per_class * spec.dim);
    for (mean, offset) in means.iter().zip(&anchor_offsets) {
        let shifted: Vec<f64> = mean.iter().zip(offset).map(|(m, d)| m + d).collect();
        draw_cluster(&shifted, spec.anchors_per_class, spec.intra_std, &mut rng, &mut values);
    }
    let n = spec.num_classes * spec.anchors_per_class;
    let anchor_emb = EmbeddingMatrix::new(n, spec.dim, values, (0..n as u32).collect())?;
    let anchor_classes = (0..spec.num_classes)
        .flat_map(|c| std::iter::repeat_n(c, spec.anchors_per_class))
        .collect();
    let anchors = AnchorSet::new(anchor_emb, anchor_classes, spec.num_classes)?;

    let m = dataset.len();
    let mut post = Vec::with_capacity(m * spec.num_classes);
    for x in dataset.embeddings().rows() {
        post.extend(posterior_row_f32(&gaussian_posterior(&means, spec.intra_std, x)));
    }
    let posteriors = ConfidenceMatrix::new(m, spec.num_classes, post, dataset.embeddings().ids().to_vec())?;

    Ok(Benchmark { spec: spec.clone(), dataset, anchors, posteriors, means, anchor_offsets })
}

//! Prototype-anchored label refinement.
//!
//! Each class gets a prototype, the plain mean of its anchor embeddings.
//! Every sample is then scored against every class with
//!
//! ```text
//! S_c = alpha * cos(x, p_c) + (1 - alpha) * conf_c
//! ```
//!
//! where `conf` is the classification head's softmax row. If the best
//! score reaches the threshold (`max S >= theta`) the label becomes the
//! best-scoring class, otherwise the original label is kept. Cosine
//! similarities are used as-is, in `[-1, 1]`. Ties go to the lowest class
//! index. Refinement is a single pass with no cross-sample state, so the
//! result does not depend on how many threads score the samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnchorSet, ConfidenceMatrix, Dataset, LabelKind, LabelSet};
use crate::error::{Error, Result};
use crate::eval::label_metrics;
use crate::head::{argmax, confidences, LinearHead};

/// Minimum Euclidean norm for prototypes and cosine inputs.
pub const NORM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    vectors: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl Prototypes {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vector(&self, class: usize) -> &[f64] {
        &self.vectors[class]
    }

    pub fn source_count(&self, class: usize) -> usize {
        self.counts[class]
    }
}

pub fn build_prototypes(anchors: &AnchorSet) -> Result<Prototypes> {
    let dim = anchors.dim();
    let mut vectors = Vec::with_capacity(anchors.num_classes());
    let mut counts = Vec::with_capacity(anchors.num_classes());
    for class in 0..anchors.num_classes() {
        let mut sum = vec![0.0f64; dim];
        let mut n = 0usize;
        for row in anchors.class_rows(class) {
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += f64::from(v);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyClass(class));
        }
        let mean: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
        let norm = l2_norm(&mean);
        if norm < NORM_EPSILON {
            return Err(Error::DegeneratePrototype { class, norm });
        }
        vectors.push(mean);
        counts.push(n);
    }
    Ok(Prototypes { vectors, counts })
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_sim(x: &[f64], p: &[f64]) -> Result<f64> {
    if x.len() != p.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: x.len() });
    }
    let (nx, np) = (l2_norm(x), l2_norm(p));
    if nx < NORM_EPSILON || np < NORM_EPSILON {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * np)).clamp(-1.0, 1.0))
}

pub fn blend_scores(sim: &[f64], conf: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if sim.len() != conf.len() {
        return Err(Error::DimensionMismatch { expected: sim.len(), found: conf.len() });
    }
    check_alpha(alpha)?;
    Ok(sim.iter().zip(conf).map(|(s, c)| alpha * s + (1.0 - alpha) * c).collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelConfig {
    pub alpha: f64,
    pub threshold: f64,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        Self { alpha: 0.5, threshold: 0.6 }
    }
}

impl RelabelConfig {
    pub fn new(alpha: f64, threshold: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if threshold.is_nan() {
            return Err(Error::invalid("threshold is NaN"));
        }
        Ok(Self { alpha, threshold })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Kept,
    Relabeled,
}

/// Full score breakdown for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: u32,
    pub similarity: Vec<f64>,
    pub confidence: Vec<f64>,
    pub score: Vec<f64>,
    pub top_score: f64,
    pub candidate: usize,
    pub original: usize,
    pub refined: usize,
    pub decision: Decision,
}

/// Similarity and confidence for every (sample, class) pair. Computed once
/// and reused across `(alpha, theta)` settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    num_classes: usize,
    ids: Vec<u32>,
    similarity: Vec<f64>,
    confidence: Vec<f64>,
}

impl ScoreTable {
    pub fn new(ds: &Dataset, protos: &Prototypes, conf: &ConfidenceMatrix, threads: usize) -> Result<Self> {
        let c = protos.len();
        if ds.num_classes() != c || conf.num_classes() != c {
            return Err(Error::DimensionMismatch { expected: ds.num_classes(), found: c.min(conf.num_classes()) });
        }
        if ds.dim() != protos.dim() {
            return Err(Error::DimensionMismatch { expected: protos.dim(), found: ds.dim() });
        }
        if conf.len() != ds.len() {
            return Err(Error::CardinalityMismatch { what: "confidence rows vs samples", left: conf.len(), right: ds.len() });
        }
        let score_row = |i: usize| -> Result<Vec<f64>> {
            let x: Vec<f64> = ds.embeddings().row(i).iter().map(|&v| f64::from(v)).collect();
            (0..c).map(|k| cosine_sim(&x, protos.vector(k))).collect()
        };
        let rows: Vec<Vec<f64>> = if threads <= 1 {
            (0..ds.len()).map(score_row).collect::<Result<_>>()?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| (0..ds.len()).into_par_iter().map(score_row).collect::<Result<_>>())?
        };
        Ok(Self {
            num_classes: c,
            ids: ds.embeddings().ids().to_vec(),
            similarity: rows.into_iter().flatten().collect(),
            confidence: conf.values().iter().map(|&p| f64::from(p)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn similarity(&self, i: usize) -> &[f64] {
        &self.similarity[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn confidence(&self, i: usize) -> &[f64] {
        &self.confidence[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Scores and decides sample `i` given its current label.
    pub fn score(&self, i: usize, original: usize, cfg: &RelabelConfig) -> ScoredSample {
        let (sim, conf) = (self.similarity(i), self.confidence(i));
        let score: Vec<f64> = sim.iter().zip(conf).map(|(s, c)| cfg.alpha * s + (1.0 - cfg.alpha) * c).collect();
        let candidate = argmax(&score);
        let top_score = score[candidate];
        let (refined, decision) = if top_score >= cfg.threshold {
            (candidate, Decision::Relabeled)
        } else {
            (original, Decision::Kept)
        };
        ScoredSample {
            id: self.ids[i],
            similarity: sim.to_vec(),
            confidence: conf.to_vec(),
            score,
            top_score,
            candidate,
            original,
            refined,
            decision,
        }
    }

    /// Refined labels only, without keeping per-sample breakdowns.
    pub fn refine(&self, labels: &LabelSet, cfg: &RelabelConfig) -> Result<LabelSet> {
        check_alpha(cfg.alpha)?;
        if labels.len() != self.len() {
            return Err(Error::CardinalityMismatch { what: "labels vs scored samples", left: labels.len(), right: self.len() });
        }
        let refined = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| self.score(i, l, cfg).refined)
            .collect();
        Ok(labels.with_labels(refined, LabelKind::Refined))
    }
}

/// Refines the labels of `ds` in one pass.
pub fn relabel(
    ds: &Dataset,
    protos: &Prototypes,
    head: &LinearHead,
    cfg: &RelabelConfig,
) -> Result<(LabelSet, Vec<ScoredSample>)> {
    relabel_parallel(ds, protos, head, cfg, 1)
}

/// [`relabel`] with sample scoring spread over `threads` workers. Output is
/// identical for every thread count.
pub fn relabel_parallel(
    ds: &Dataset,
    protos: &Prototypes,
    head: &LinearHead,
    cfg: &RelabelConfig,
    threads: usize,
) -> Result<(LabelSet, Vec<ScoredSample>)> {
    let conf = confidences(head, ds.embeddings())?;
    relabel_with_confidences(ds, protos, &conf, cfg, threads)
}

/// Same as [`relabel_parallel`] with the head's confidence rows supplied.
pub fn relabel_with_confidences(
    ds: &Dataset,
    protos: &Prototypes,
    conf: &ConfidenceMatrix,
    cfg: &RelabelConfig,
    threads: usize,
) -> Result<(LabelSet, Vec<ScoredSample>)> {
    check_alpha(cfg.alpha)?;
    let table = ScoreTable::new(ds, protos, conf, threads)?;
    let scored: Vec<ScoredSample> = ds
        .labels()
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| table.score(i, l, cfg))
        .collect();
    let refined = scored.iter().map(|s| s.refined).collect();
    Ok((ds.labels().with_labels(refined, LabelKind::Refined), scored))
}

/// One `(alpha, theta)` cell of a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub theta: f64,
    pub changed: usize,
    pub corrected: Option<usize>,
    pub corrupted: Option<usize>,
    pub label_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    /// Row-major over thetas, then alphas.
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, alpha: f64, theta: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.alpha == alpha && c.theta == theta)
    }
}

/// Runs refinement for every `(alpha, theta)` pair.
pub fn sweep(
    ds: &Dataset,
    protos: &Prototypes,
    head: &LinearHead,
    alphas: &[f64],
    thetas: &[f64],
    truth: Option<&LabelSet>,
) -> Result<SweepTable> {
    let conf = confidences(head, ds.embeddings())?;
    sweep_with_confidences(ds, protos, &conf, alphas, thetas, truth)
}

pub fn sweep_with_confidences(
    ds: &Dataset,
    protos: &Prototypes,
    conf: &ConfidenceMatrix,
    alphas: &[f64],
    thetas: &[f64],
    truth: Option<&LabelSet>,
) -> Result<SweepTable> {
    if alphas.is_empty() || thetas.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let table = ScoreTable::new(ds, protos, conf, 1)?;
    let noisy = ds.labels();
    let mut cells = Vec::with_capacity(alphas.len() * thetas.len());
    for &theta in thetas {
        for &alpha in alphas {
            let refined = table.refine(noisy, &RelabelConfig::new(alpha, theta)?)?;
            let changed = refined.count_differences(noisy);
            let (corrected, corrupted, label_accuracy) = match truth {
                Some(t) => {
                    let r = label_metrics(&refined, noisy, t)?;
                    (Some(r.corrected), Some(r.corrupted), Some(r.label_accuracy_after))
                }
                None => (None, None, None),
            };
            cells.push(SweepCell { alpha, theta, changed, corrected, corrupted, label_accuracy });
        }
    }
    Ok(SweepTable { alphas: alphas.to_vec(), thetas: thetas.to_vec(), cells })
}

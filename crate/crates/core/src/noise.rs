//! Label corruption models.
//!
//! Every injector keeps the label set's length, ids, and class count. Each
//! sample's random draws come from its own generator keyed by
//! `(seed, sample index)`, so output never depends on iteration order.
//!
//! PMD (polynomial margin diminishing) noise flips a sample to its
//! posterior runner-up with probability
//!
//! ```text
//! tau(m) = min(tau_max, scale * (1 - m)^k)
//! ```
//!
//! where `m` is the gap between the top two posterior entries. `scale` is
//! found by bisection so that the mean flip probability over the dataset
//! equals the target rate. A sample whose true label already *is* its
//! runner-up cannot be flipped toward it, so it is given probability zero
//! and excluded from the calibration mass; the mean of `tau` is then the
//! expected fraction of changed labels.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ConfidenceMatrix, LabelKind, LabelSet};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, sample_rng};

pub const DEFAULT_PMD_EXPONENT: u32 = 3;
pub const DEFAULT_TAU_MAX: f64 = 0.9;
/// Required agreement between calibrated mean flip probability and target.
pub const PMD_CALIBRATION_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Uniform,
    Asymmetric,
    Pmd,
    Hybrid,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "u" => Ok(NoiseKind::Uniform),
            "asymmetric" | "a" => Ok(NoiseKind::Asymmetric),
            "pmd" => Ok(NoiseKind::Pmd),
            "hybrid" => Ok(NoiseKind::Hybrid),
            other => Err(Error::invalid(format!("unknown noise kind {other:?}"))),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::Asymmetric => "asymmetric",
            NoiseKind::Pmd => "pmd",
            NoiseKind::Hybrid => "hybrid",
        };
        f.write_str(s)
    }
}

/// Class-to-class map used by asymmetric noise. Need not be a permutation,
/// but may not map any class to itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsymmetricMapping(Vec<usize>);

impl AsymmetricMapping {
    pub fn new(targets: Vec<usize>) -> Result<Self> {
        let c = targets.len();
        for (class, &t) in targets.iter().enumerate() {
            if t == class {
                return Err(Error::FixedPoint(class));
            }
            if t >= c {
                return Err(Error::LabelOutOfRange { row: class, label: t as u64, num_classes: c });
            }
        }
        Ok(Self(targets))
    }

    /// `c -> (c + 1) mod C`.
    pub fn cyclic(num_classes: usize) -> Result<Self> {
        Self::new((0..num_classes).map(|c| (c + 1) % num_classes).collect())
    }

    pub fn target(&self, class: usize) -> usize {
        self.0[class]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for AsymmetricMapping {
    type Err = Error;

    /// Comma-separated targets, entry `c` being the target of class `c`.
    fn from_str(s: &str) -> Result<Self> {
        let targets = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad mapping entry {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(targets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Hybrid only: rate of the i.i.d. stage.
    pub second_rate: f64,
    /// Hybrid only: `Uniform` or `Asymmetric`.
    pub second_kind: NoiseKind,
    /// Defaults to the cyclic map when absent.
    pub mapping: Option<AsymmetricMapping>,
    pub pmd_exponent: u32,
    pub pmd_tau_max: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64, seed: u64) -> Self {
        Self {
            kind,
            rate,
            second_rate: 0.0,
            second_kind: NoiseKind::Uniform,
            mapping: None,
            pmd_exponent: DEFAULT_PMD_EXPONENT,
            pmd_tau_max: DEFAULT_TAU_MAX,
            seed,
        }
    }

    pub fn hybrid(pmd_rate: f64, second_kind: NoiseKind, second_rate: f64, seed: u64) -> Self {
        Self { second_kind, second_rate, ..Self::new(NoiseKind::Hybrid, pmd_rate, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        check_rate(self.second_rate)?;
        if self.kind == NoiseKind::Hybrid && !matches!(self.second_kind, NoiseKind::Uniform | NoiseKind::Asymmetric) {
            return Err(Error::invalid("hybrid second stage must be uniform or asymmetric"));
        }
        if self.pmd_exponent == 0 {
            return Err(Error::invalid("pmd exponent must be positive"));
        }
        if !(self.pmd_tau_max > 0.0 && self.pmd_tau_max <= 1.0) {
            return Err(Error::invalid("tau_max must lie in (0, 1]"));
        }
        Ok(())
    }

    fn mapping_for(&self, num_classes: usize) -> Result<AsymmetricMapping> {
        match &self.mapping {
            Some(m) if m.len() != num_classes => Err(Error::CardinalityMismatch {
                what: "mapping entries vs classes",
                left: m.len(),
                right: num_classes,
            }),
            Some(m) => Ok(m.clone()),
            None => AsymmetricMapping::cyclic(num_classes),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::invalid(format!("rate {rate} outside [0, 1]")))
    }
}

/// Each sample is selected with probability `rate`; selected samples get a
/// label drawn uniformly from the other `C - 1` classes.
pub fn inject_uniform(truth: &LabelSet, rate: f64, seed: u64) -> Result<LabelSet> {
    check_rate(rate)?;
    let c = truth.num_classes();
    if c < 2 {
        return Err(Error::invalid("uniform noise needs at least two classes"));
    }
    let labels = truth
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = sample_rng(seed, i);
            if rng.random::<f64>() < rate {
                let j = rng.random_range(0..c - 1);
                if j >= l {
                    j + 1
                } else {
                    j
                }
            } else {
                l
            }
        })
        .collect();
    Ok(truth.with_labels(labels, LabelKind::Noisy))
}

/// Each sample is selected with probability `rate` and moved to
/// `mapping.target(label)`.
pub fn inject_asymmetric(truth: &LabelSet, rate: f64, mapping: &AsymmetricMapping, seed: u64) -> Result<LabelSet> {
    check_rate(rate)?;
    if mapping.len() != truth.num_classes() {
        return Err(Error::CardinalityMismatch {
            what: "mapping entries vs classes",
            left: mapping.len(),
            right: truth.num_classes(),
        });
    }
    let labels = truth
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = sample_rng(seed, i);
            if rng.random::<f64>() < rate {
                mapping.target(l)
            } else {
                l
            }
        })
        .collect();
    Ok(truth.with_labels(labels, LabelKind::Noisy))
}

/// Flip probability for a sample with posterior margin `margin`.
pub fn pmd_flip_probability(margin: f64, scale: f64, k: u32, tau_max: f64) -> f64 {
    let gap = (1.0 - margin).clamp(0.0, 1.0);
    pmd_tau(gap.powi(k as i32), scale, tau_max)
}

fn pmd_tau(base: f64, scale: f64, tau_max: f64) -> f64 {
    if base <= 0.0 {
        return 0.0;
    }
    (scale * base).min(tau_max)
}

/// Top class, runner-up class, and `1 - margin` for one posterior row.
/// Ties resolve to the lower class index. The gap is summed from the mass
/// outside the top class rather than taken as `1 - p_top`.
pub fn margin_row(row: &[f32]) -> (usize, usize, f64) {
    let mut top = 0;
    for (c, &p) in row.iter().enumerate() {
        if p > row[top] {
            top = c;
        }
    }
    let mut second = usize::MAX;
    for (c, &p) in row.iter().enumerate() {
        if c != top && (second == usize::MAX || p > row[second]) {
            second = c;
        }
    }
    if second == usize::MAX {
        return (top, top, 0.0);
    }
    let outside: f64 = row.iter().enumerate().filter(|&(c, _)| c != top).map(|(_, &p)| f64::from(p)).sum();
    let gap = (outside + f64::from(row[second])).clamp(0.0, 1.0);
    (top, second, gap)
}

/// Result of calibrating the PMD scale for one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PmdCalibration {
    pub scale: f64,
    /// Per-sample flip probability.
    pub flip_probability: Vec<f64>,
    /// Per-sample runner-up class.
    pub runner_up: Vec<usize>,
    pub mean_probability: f64,
}

pub fn calibrate_pmd(
    truth: &LabelSet,
    posteriors: &ConfidenceMatrix,
    target_rate: f64,
    k: u32,
    tau_max: f64,
) -> Result<PmdCalibration> {
    check_rate(target_rate)?;
    if k == 0 {
        return Err(Error::invalid("pmd exponent must be positive"));
    }
    if !(tau_max > 0.0 && tau_max <= 1.0) {
        return Err(Error::invalid("tau_max must lie in (0, 1]"));
    }
    if posteriors.len() != truth.len() {
        return Err(Error::CardinalityMismatch {
            what: "posterior rows vs labels",
            left: posteriors.len(),
            right: truth.len(),
        });
    }
    if posteriors.num_classes() != truth.num_classes() {
        return Err(Error::DimensionMismatch { expected: truth.num_classes(), found: posteriors.num_classes() });
    }
    if truth.num_classes() < 2 {
        return Err(Error::invalid("pmd noise needs at least two classes"));
    }

    let m = truth.len() as f64;
    let mut runner_up = Vec::with_capacity(truth.len());
    let mut base = Vec::with_capacity(truth.len());
    for (row, &label) in posteriors.rows().zip(truth.labels()) {
        let (_, second, gap) = margin_row(row);
        runner_up.push(second);
        base.push(if label == second { 0.0 } else { gap.powi(k as i32) });
    }

    let mean_at = |scale: f64| base.iter().map(|&b| pmd_tau(b, scale, tau_max)).sum::<f64>() / m;
    let eligible = base.iter().filter(|&&b| b > 0.0).count() as f64;
    let achievable = tau_max * eligible / m;

    let scale = if target_rate == 0.0 {
        0.0
    } else if achievable < target_rate {
        return Err(Error::TargetUnreachable { target: target_rate, achievable });
    } else {
        // bisection on log2(scale); the mean is non-decreasing in scale
        let (mut lo, mut hi) = (-1074.0f64, 1023.0f64);
        if mean_at(hi.exp2()) < target_rate {
            f64::INFINITY
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mean_at(mid.exp2()) < target_rate {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            hi.exp2()
        }
    };

    let flip_probability: Vec<f64> = base.iter().map(|&b| pmd_tau(b, scale, tau_max)).collect();
    let mean_probability = flip_probability.iter().sum::<f64>() / m;
    if (mean_probability - target_rate).abs() > PMD_CALIBRATION_TOLERANCE {
        return Err(Error::TargetUnreachable { target: target_rate, achievable: mean_probability });
    }
    Ok(PmdCalibration { scale, flip_probability, runner_up, mean_probability })
}

/// Feature-dependent noise: flips toward the posterior runner-up, more
/// often when the top-two margin is small.
pub fn inject_pmd(
    truth: &LabelSet,
    posteriors: &ConfidenceMatrix,
    target_rate: f64,
    k: u32,
    tau_max: f64,
    seed: u64,
) -> Result<LabelSet> {
    let cal = calibrate_pmd(truth, posteriors, target_rate, k, tau_max)?;
    Ok(apply_pmd(truth, &cal, seed))
}

fn apply_pmd(truth: &LabelSet, cal: &PmdCalibration, seed: u64) -> LabelSet {
    let labels = truth
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = sample_rng(seed, i);
            if rng.random::<f64>() < cal.flip_probability[i] {
                cal.runner_up[i]
            } else {
                l
            }
        })
        .collect();
    truth.with_labels(labels, LabelKind::Noisy)
}

/// PMD at `spec.rate`, then the i.i.d. stage at `spec.second_rate` applied
/// to the PMD output.
pub fn inject_hybrid(truth: &LabelSet, posteriors: &ConfidenceMatrix, spec: &NoiseSpec) -> Result<LabelSet> {
    spec.validate()?;
    if spec.kind != NoiseKind::Hybrid {
        return Err(Error::invalid("inject_hybrid requires kind = hybrid"));
    }
    let stage1 = inject_pmd(truth, posteriors, spec.rate, spec.pmd_exponent, spec.pmd_tau_max, spec.seed)?;
    let seed2 = derive_seed(spec.seed, 1);
    match spec.second_kind {
        NoiseKind::Uniform => inject_uniform(&stage1, spec.second_rate, seed2),
        NoiseKind::Asymmetric => {
            inject_asymmetric(&stage1, spec.second_rate, &spec.mapping_for(truth.num_classes())?, seed2)
        }
        _ => unreachable!("validated above"),
    }
}

/// Dispatches on `spec.kind`. PMD and hybrid noise need posteriors.
pub fn inject(truth: &LabelSet, posteriors: Option<&ConfidenceMatrix>, spec: &NoiseSpec) -> Result<LabelSet> {
    spec.validate()?;
    let need_posteriors = || posteriors.ok_or_else(|| Error::invalid(format!("{} noise needs posteriors", spec.kind)));
    match spec.kind {
        NoiseKind::Uniform => inject_uniform(truth, spec.rate, spec.seed),
        NoiseKind::Asymmetric => {
            inject_asymmetric(truth, spec.rate, &spec.mapping_for(truth.num_classes())?, spec.seed)
        }
        NoiseKind::Pmd => {
            inject_pmd(truth, need_posteriors()?, spec.rate, spec.pmd_exponent, spec.pmd_tau_max, spec.seed)
        }
        NoiseKind::Hybrid => inject_hybrid(truth, need_posteriors()?, spec),
    }
}

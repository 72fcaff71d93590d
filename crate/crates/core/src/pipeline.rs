//! End-to-end runs on named simulator presets:
//! simulate, corrupt, train the head, refine, then evaluate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::eval::{downstream_eval, label_metrics, RelabelReport};
use crate::head::{accuracy, confidences, train_head, LinearHead, TrainConfig};
use crate::noise::{inject, NoiseKind, NoiseSpec};
use crate::relabel::{build_prototypes, relabel_with_confidences, sweep_with_confidences, Prototypes, RelabelConfig, ScoredSample, SweepTable};
use crate::rng::derive_seed;
use crate::sim::{generate_benchmark, Benchmark, SimSpec};

pub const SWEEP_ALPHAS: [f64; 5] = [1.0, 0.7, 0.5, 0.3, 0.0];
pub const SWEEP_THETAS: [f64; 2] = [0.0, 0.6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 10 classes, D = 32, 500 samples and 100 anchors per class,
    /// separation 6, unit spread, anchor shift 1, 70% PMD noise.
    Standard,
    /// `Standard` with anchor shift 3 and 35% PMD noise.
    DomainGap,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Preset::Standard),
            "domain-gap" => Ok(Preset::DomainGap),
            other => Err(Error::invalid(format!("unknown preset {other:?} (expected standard or domain-gap)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Standard => "standard",
            Preset::DomainGap => "domain-gap",
        })
    }
}

/// Every knob of an end-to-end run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub sim: SimSpec,
    pub noise: NoiseSpec,
    pub train: TrainConfig,
    pub relabel: RelabelConfig,
    pub heldout_per_class: usize,
    pub threads: usize,
}

impl PipelineSettings {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let (anchor_shift, rate) = match preset {
            Preset::Standard => (1.0, 0.7),
            Preset::DomainGap => (3.0, 0.35),
        };
        let sim = SimSpec { anchor_shift, seed, ..SimSpec::default() };
        Self {
            heldout_per_class: sim.samples_per_class,
            sim,
            noise: NoiseSpec::new(NoiseKind::Pmd, rate, derive_seed(seed, 0x4e4f)),
            train: TrainConfig { seed: derive_seed(seed, 0x4844), ..TrainConfig::default() },
            relabel: RelabelConfig::default(),
            threads: 1,
        }
    }
}

/// Serializable summary of a run. Contains no timings, so two runs with the
/// same settings produce byte-identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub settings: PipelineSettings,
    pub realized_noise_rate: f64,
    pub head_train_accuracy: f64,
    pub relabel: RelabelReport,
    /// Held-out accuracy of the head trained on noisy labels.
    pub downstream_noisy: f64,
    /// Held-out accuracy after fine-tuning that head on refined labels.
    pub downstream_refined: f64,
    /// Held-out accuracy of a head trained from scratch on refined labels.
    pub downstream_refined_scratch: f64,
    pub sweep: SweepTable,
}

/// Intermediate artifacts of a run, for callers that want more than the report.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub benchmark: Benchmark,
    pub heldout: Dataset,
    pub noisy: LabelSet,
    pub head: LinearHead,
    pub prototypes: Prototypes,
    pub refined: LabelSet,
    pub scored: Vec<ScoredSample>,
    pub report: PipelineReport,
}

pub fn run_pipeline(settings: &PipelineSettings) -> Result<PipelineRun> {
    let benchmark = generate_benchmark(&settings.sim)?;
    let truth = benchmark.truth().clone();
    let noisy = inject(&truth, Some(&benchmark.posteriors), &settings.noise)?;
    let noisy_ds = benchmark.dataset.with_labels(noisy.clone())?;

    let head = train_head(&noisy_ds, &settings.train, None)?;
    let head_train_accuracy = accuracy(&head, &noisy_ds)?;
    let prototypes = build_prototypes(&benchmark.anchors)?;
    let conf = confidences(&head, noisy_ds.embeddings())?;
    let (refined, scored) = relabel_with_confidences(&noisy_ds, &prototypes, &conf, &settings.relabel, settings.threads)?;
    let relabel = label_metrics(&refined, &noisy, &truth)?;

    let heldout = benchmark.heldout(settings.heldout_per_class)?;
    let refined_ds = benchmark.dataset.with_labels(refined.clone())?;
    let downstream_noisy = accuracy(&head, &heldout)?;
    let downstream_refined =
        downstream_eval(&refined_ds, &heldout, &TrainConfig::fine_tuning(settings.train.seed), Some(&head))?;
    let downstream_refined_scratch = downstream_eval(&refined_ds, &heldout, &settings.train, None)?;

    let sweep = sweep_with_confidences(&noisy_ds, &prototypes, &conf, &SWEEP_ALPHAS, &SWEEP_THETAS, Some(&truth))?;

    let report = PipelineReport {
        settings: settings.clone(),
        realized_noise_rate: noisy.count_differences(&truth) as f64 / truth.len() as f64,
        head_train_accuracy,
        relabel,
        downstream_noisy,
        downstream_refined,
        downstream_refined_scratch,
        sweep,
    };
    Ok(PipelineRun { benchmark, heldout, noisy, head, prototypes, refined, scored, report })
}

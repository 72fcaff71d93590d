//! Noisy-label refinement against anchor prototypes.
//!
//! Each sample gets a per-class score that blends cosine similarity to the
//! class prototype (mean of that class's anchor embeddings) with a linear
//! head's softmax confidence:
//!
//! ```text
//! S_c = alpha * cos(x, p_c) + (1 - alpha) * conf_c
//! ```
//!
//! A label moves to `argmax_c S_c` when that score reaches `theta` and is
//! kept otherwise. The crate also ships a Gaussian benchmark simulator,
//! three noise models, a softmax-regression head, and the binary and CSV
//! file formats the `anchor-relabel` binary reads and writes.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod head;
pub mod io;
pub mod noise;
pub mod pipeline;
pub mod relabel;
pub mod rng;
pub mod sim;

pub use data::{bind_dataset, AnchorSet, ConfidenceMatrix, Dataset, EmbeddingMatrix, LabelKind, LabelSet};
pub use error::{Error, Result};
pub use eval::{downstream_eval, label_metrics, RelabelReport, ReportFormat};
pub use head::{confidences, train_head, LinearHead, TrainConfig};
pub use noise::{inject, NoiseKind, NoiseSpec};
pub use pipeline::{run_pipeline, PipelineReport, PipelineSettings, Preset};
pub use relabel::{build_prototypes, relabel, sweep, Prototypes, RelabelConfig, ScoredSample, SweepTable};
pub use sim::{generate_benchmark, Benchmark, SimSpec};

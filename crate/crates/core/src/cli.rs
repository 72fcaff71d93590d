//! Command-line front end.
//!
//! `simgen -> inject -> train -> relabel -> sweep -> eval`, plus `pipeline`
//! for a one-shot run on a named preset. Every subcommand accepts
//! `--config FILE`; flags on the command line win over file values.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::{bind_dataset, LabelKind};
use crate::error::{Error, Result};
use crate::eval::{downstream_eval, emit_report, label_metrics, render_report, RelabelReport, ReportFormat};
use crate::head::{confidences, train_head, LinearHead, TrainConfig};
use crate::io::{
    read_anchors, read_confidences, read_embeddings, read_labels, write_anchors, write_confidences, write_embeddings,
    write_labels, write_file,
};
use crate::noise::{inject, AsymmetricMapping, NoiseKind, NoiseSpec};
use crate::pipeline::{run_pipeline, PipelineSettings, Preset};
use crate::relabel::{build_prototypes, relabel_with_confidences, sweep_with_confidences, RelabelConfig};
use crate::sim::{generate_benchmark, SimSpec};

#[derive(Debug, Parser)]
#[command(name = "anchor-relabel", version, about = "Refine noisy labels against class anchor prototypes")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Gaussian benchmark: real embeddings, anchors, truth, posteriors.
    Simgen(SimgenArgs),
    /// Corrupt a label file.
    Inject(InjectArgs),
    /// Train a linear softmax head.
    Train(TrainArgs),
    /// Refine labels against anchor prototypes.
    Relabel(RelabelArgs),
    /// Refine over an (alpha, theta) grid.
    Sweep(SweepArgs),
    /// Label-quality metrics and/or downstream accuracy.
    Eval(EvalArgs),
    /// Run the full chain on a named preset.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SimgenArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    #[arg(long, default_value_t = 100)]
    anchors: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    intra_std: f64,
    #[arg(long, default_value_t = 1.0)]
    anchor_shift: f64,
    /// Also write held-out samples (`heldout.emb`, `heldout_truth.csv`).
    #[arg(long, default_value_t = 0)]
    heldout_per_class: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InjectArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    kind: NoiseKind,
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value = "uniform")]
    second_kind: NoiseKind,
    #[arg(long, default_value_t = 0.0)]
    second_rate: f64,
    /// Comma-separated asymmetric targets; defaults to c -> (c + 1) mod C.
    #[arg(long)]
    mapping: Option<AsymmetricMapping>,
    #[arg(long, default_value_t = crate::noise::DEFAULT_PMD_EXPONENT)]
    k: u32,
    #[arg(long, default_value_t = crate::noise::DEFAULT_TAU_MAX)]
    tau_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CNF1 posteriors, required for pmd and hybrid noise.
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    classes: usize,
    /// Defaults to 200, or 50 with --fine-tune.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Defaults to 0.1, or 0.001 with --fine-tune.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    warm_start: Option<PathBuf>,
    #[arg(long)]
    fine_tune: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoringInputs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    classes: usize,
    /// Anchor EMB1 file.
    #[arg(long)]
    anchors: PathBuf,
    /// `id,class` sidecar for the anchor file.
    #[arg(long)]
    anchor_classes: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RelabelArgs {
    #[command(flatten)]
    inputs: ScoringInputs,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.6)]
    theta: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out_labels: PathBuf,
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Per-sample score breakdown as CSV.
    #[arg(long)]
    out_scores: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: ScoringInputs,
    #[arg(long, default_value = "1,0.7,0.5,0.3")]
    alpha_grid: String,
    #[arg(long, default_value = "0,0.6")]
    theta_grid: String,
    #[arg(long)]
    out: PathBuf,
    /// csv or json; defaults to json for `.json` paths and csv otherwise.
    #[arg(long)]
    format: Option<ReportFormat>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    refined: Option<PathBuf>,
    #[arg(long)]
    noisy: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Training embeddings for downstream evaluation.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    heldout: Option<PathBuf>,
    #[arg(long)]
    heldout_truth: Option<PathBuf>,
    #[arg(long)]
    warm_start: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long, default_value = "standard")]
    preset: Preset,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Directory for `report.json` and `sweep.csv`; prints the report if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Aggregate output of `relabel`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelSummary {
    pub alpha: f64,
    pub theta: f64,
    pub total: usize,
    pub changed: usize,
    pub metrics: Option<RelabelReport>,
}

impl crate::eval::Report for RelabelSummary {
    fn csv_header(&self) -> Vec<String> {
        ["alpha", "theta", "total", "changed"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![self.alpha.to_string(), self.theta.to_string(), self.total.to_string(), self.changed.to_string()]]
    }
}

/// Output of `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub labels: Option<RelabelReport>,
    pub downstream_accuracy: Option<f64>,
}

impl crate::eval::Report for EvalOutput {
    fn csv_header(&self) -> Vec<String> {
        ["label_accuracy_before", "label_accuracy_after", "downstream_accuracy"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let l = self.labels.as_ref();
        vec![vec![
            l.map(|r| r.label_accuracy_before.to_string()).unwrap_or_default(),
            l.map(|r| r.label_accuracy_after.to_string()).unwrap_or_default(),
            self.downstream_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ]]
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// runtime error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match apply_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            eprintln!("{}", Cli::command().render_usage());
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            1
        }
    }
}

/// Splices `--config` file entries in as flags, ahead of the user's own
/// flags so that later (command-line) occurrences win.
fn apply_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .ok_or_else(|| Error::Config("--config needs a path".into()))?;
    let config = PipelineConfig::load(Path::new(path))?;
    let sub_name = argv
        .get(1)
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config("--config must follow a subcommand".into()))?;
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(sub_name)
        .ok_or_else(|| Error::Config(format!("unknown subcommand {sub_name:?}")))?;
    let known: Vec<(String, bool)> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(|l| (l.to_string(), a.get_action().takes_values())))
        .filter(|(l, _)| l != "config")
        .collect();
    config.check_keys(known.iter().map(|(k, _)| k.as_str()))?;

    let mut spliced: Vec<OsString> = argv[..2].to_vec();
    for (key, value) in config.entries() {
        let takes_value = known.iter().find(|(k, _)| k == key).map(|(_, t)| *t).unwrap_or(true);
        if takes_value {
            spliced.push(format!("--{key}").into());
            spliced.push(value.into());
        } else {
            match value.as_str() {
                "true" => spliced.push(format!("--{key}").into()),
                "false" => {}
                other => return Err(Error::Config(format!("{key}: expected true or false, got {other:?}"))),
            }
        }
    }
    spliced.extend(argv[2..pos].iter().cloned());
    spliced.extend(argv[pos + 2..].iter().cloned());
    Ok(spliced)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simgen(a) => simgen(a),
        Command::Inject(a) => inject_cmd(a),
        Command::Train(a) => train(a),
        Command::Relabel(a) => relabel_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

fn simgen(a: SimgenArgs) -> Result<()> {
    let spec = SimSpec {
        num_classes: a.classes,
        dim: a.dim,
        samples_per_class: a.per_class,
        anchors_per_class: a.anchors,
        class_separation: a.separation,
        intra_std: a.intra_std,
        anchor_shift: a.anchor_shift,
        seed: a.seed,
    };
    let bench = generate_benchmark(&spec)?;
    create_dir(&a.out)?;
    write_embeddings(bench.dataset.embeddings(), a.out.join("real.emb"))?;
    write_labels(bench.truth(), a.out.join("truth.csv"))?;
    write_anchors(&bench.anchors, a.out.join("anchors.emb"), a.out.join("anchors.csv"))?;
    write_confidences(&bench.posteriors, a.out.join("posteriors.cnf"))?;
    if a.heldout_per_class > 0 {
        let held = bench.heldout(a.heldout_per_class)?;
        write_embeddings(held.embeddings(), a.out.join("heldout.emb"))?;
        write_labels(held.labels(), a.out.join("heldout_truth.csv"))?;
    }
    eprintln!("simgen: {} samples, {} anchors -> {}", bench.dataset.len(), bench.anchors.embeddings().len(), a.out.display());
    Ok(())
}

fn inject_cmd(a: InjectArgs) -> Result<()> {
    let truth = read_labels(&a.truth, a.classes, LabelKind::Truth)?;
    let posteriors = a.posteriors.as_ref().map(read_confidences).transpose()?;
    let spec = NoiseSpec {
        kind: a.kind,
        rate: a.rate,
        second_rate: a.second_rate,
        second_kind: a.second_kind,
        mapping: a.mapping,
        pmd_exponent: a.k,
        pmd_tau_max: a.tau_max,
        seed: a.seed,
    };
    let noisy = inject(&truth, posteriors.as_ref(), &spec)?;
    write_labels(&noisy, &a.out)?;
    eprintln!("inject: {} of {} labels changed", noisy.count_differences(&truth), truth.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let emb = read_embeddings(&a.embeddings)?;
    let labels = read_labels(&a.labels, a.classes, LabelKind::Noisy)?;
    let ds = bind_dataset(emb, labels)?;
    let base = if a.fine_tune { TrainConfig::fine_tuning(a.seed) } else { TrainConfig { seed: a.seed, ..TrainConfig::default() } };
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(base.epochs),
        learning_rate: a.lr.unwrap_or(base.learning_rate),
        batch_size: a.batch_size,
        l2_weight: a.l2,
        ..base
    };
    let warm = a.warm_start.as_ref().map(LinearHead::read).transpose()?;
    let head = train_head(&ds, &cfg, warm.as_ref())?;
    head.write(&a.out)?;
    eprintln!("train: {} epochs on {} samples -> {}", cfg.epochs, ds.len(), a.out.display());
    Ok(())
}

struct LoadedInputs {
    dataset: crate::data::Dataset,
    prototypes: crate::relabel::Prototypes,
    confidences: crate::data::ConfidenceMatrix,
    truth: Option<crate::data::LabelSet>,
}

fn load_inputs(i: &ScoringInputs) -> Result<LoadedInputs> {
    let emb = read_embeddings(&i.embeddings)?;
    let labels = read_labels(&i.labels, i.classes, LabelKind::Noisy)?;
    let dataset = bind_dataset(emb, labels)?;
    let anchors = read_anchors(&i.anchors, &i.anchor_classes, i.classes)?;
    let head = LinearHead::read(&i.head)?;
    if head.num_classes() != i.classes {
        return Err(Error::DimensionMismatch { expected: i.classes, found: head.num_classes() });
    }
    let confidences = confidences(&head, dataset.embeddings())?;
    let truth = i.truth.as_ref().map(|p| read_labels(p, i.classes, LabelKind::Truth)).transpose()?;
    Ok(LoadedInputs { dataset, prototypes: build_prototypes(&anchors)?, confidences, truth })
}

fn relabel_cmd(a: RelabelArgs) -> Result<()> {
    let inputs = load_inputs(&a.inputs)?;
    let cfg = RelabelConfig::new(a.alpha, a.theta)?;
    let (refined, scored) =
        relabel_with_confidences(&inputs.dataset, &inputs.prototypes, &inputs.confidences, &cfg, a.threads)?;
    write_labels(&refined, &a.out_labels)?;
    let noisy = inputs.dataset.labels();
    let metrics = inputs.truth.as_ref().map(|t| label_metrics(&refined, noisy, t)).transpose()?;
    let summary = RelabelSummary {
        alpha: cfg.alpha,
        theta: cfg.threshold,
        total: refined.len(),
        changed: refined.count_differences(noisy),
        metrics,
    };
    if let Some(path) = &a.out_report {
        emit_report(&summary, path, ReportFormat::Json)?;
    }
    if let Some(path) = &a.out_scores {
        emit_report(scored.as_slice(), path, ReportFormat::Csv)?;
    }
    eprintln!("relabel: {} of {} labels changed", summary.changed, summary.total);
    Ok(())
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad grid value {s:?}"))))
        .collect()
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let inputs = load_inputs(&a.inputs)?;
    let alphas = parse_grid(&a.alpha_grid)?;
    let thetas = parse_grid(&a.theta_grid)?;
    let table = sweep_with_confidences(
        &inputs.dataset,
        &inputs.prototypes,
        &inputs.confidences,
        &alphas,
        &thetas,
        inputs.truth.as_ref(),
    )?;
    let format = a.format.unwrap_or_else(|| {
        if a.out.extension().is_some_and(|e| e == "json") {
            ReportFormat::Json
        } else {
            ReportFormat::Csv
        }
    });
    emit_report(&table, &a.out, format)?;
    eprintln!("sweep: {} cells -> {}", table.cells.len(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let labels = match (&a.refined, &a.noisy, &a.truth) {
        (Some(r), Some(n), Some(t)) => {
            let refined = read_labels(r, a.classes, LabelKind::Refined)?;
            let noisy = read_labels(n, a.classes, LabelKind::Noisy)?;
            let truth = read_labels(t, a.classes, LabelKind::Truth)?;
            Some(label_metrics(&refined, &noisy, &truth)?)
        }
        (None, None, None) => None,
        _ => return Err(Error::invalid("label metrics need --refined, --noisy and --truth together")),
    };
    let downstream_accuracy = match (&a.embeddings, &a.train_labels, &a.heldout, &a.heldout_truth) {
        (Some(e), Some(l), Some(h), Some(ht)) => {
            let train = bind_dataset(read_embeddings(e)?, read_labels(l, a.classes, LabelKind::Refined)?)?;
            let held = bind_dataset(read_embeddings(h)?, read_labels(ht, a.classes, LabelKind::Truth)?)?;
            let warm = a.warm_start.as_ref().map(LinearHead::read).transpose()?;
            let cfg = TrainConfig { seed: a.seed, ..TrainConfig::default() };
            Some(downstream_eval(&train, &held, &cfg, warm.as_ref())?)
        }
        (None, None, None, None) => None,
        _ => {
            return Err(Error::invalid(
                "downstream evaluation needs --embeddings, --train-labels, --heldout and --heldout-truth together",
            ))
        }
    };
    if labels.is_none() && downstream_accuracy.is_none() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let out = EvalOutput { labels, downstream_accuracy };
    match &a.out {
        Some(path) => emit_report(&out, path, ReportFormat::Json),
        None => {
            print!("{}", render_report(&out, ReportFormat::Json)?);
            Ok(())
        }
    }
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut settings = PipelineSettings::preset(a.preset, a.seed);
    settings.threads = a.threads;
    let run = run_pipeline(&settings)?;
    let report = &run.report;
    let json = render_report_json(report)?;
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("report.json"), json.as_bytes())?;
            emit_report(&report.sweep, dir.join("sweep.csv"), ReportFormat::Csv)?;
        }
        None => print!("{json}"),
    }
    eprintln!(
        "pipeline[{}]: label accuracy {:.4} -> {:.4}, downstream {:.4} -> {:.4}",
        a.preset,
        report.relabel.label_accuracy_before,
        report.relabel.label_accuracy_after,
        report.downstream_noisy,
        report.downstream_refined
    );
    Ok(())
}

fn render_report_json(report: &crate::pipeline::PipelineReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

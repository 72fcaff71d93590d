use std::fs;
use std::path::Path;
use std::process::Command;

use anchor_relabel::cli::{run, EvalOutput, RelabelSummary};
use anchor_relabel::data::LabelKind;
use anchor_relabel::io::{read_anchors, read_confidences, read_embeddings, read_labels};

const BIN: &str = env!("CARGO_BIN_EXE_anchor-relabel");

fn ok(args: &[&str]) {
    let mut argv = vec!["anchor-relabel"];
    argv.extend_from_slice(args);
    assert_eq!(run(argv), 0, "{args:?}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// simgen + inject + train into `dir`; returns nothing, files are named by role.
fn prepare(dir: &Path) {
    ok(&[
        "simgen", "--classes", "4", "--dim", "8", "--per-class", "50", "--anchors", "10", "--seed", "3",
        "--heldout-per-class", "20", "--out", p(dir),
    ]);
    ok(&[
        "inject", "--truth", p(&dir.join("truth.csv")), "--classes", "4", "--kind", "pmd", "--rate", "0.35",
        "--posteriors", p(&dir.join("posteriors.cnf")), "--seed", "1", "--out", p(&dir.join("noisy.csv")),
    ]);
    ok(&[
        "train", "--embeddings", p(&dir.join("real.emb")), "--labels", p(&dir.join("noisy.csv")), "--classes", "4",
        "--epochs", "30", "--out", p(&dir.join("head.lh")),
    ]);
}

fn scoring_args(dir: &Path) -> Vec<String> {
    [
        ("--embeddings", "real.emb"),
        ("--labels", "noisy.csv"),
        ("--anchors", "anchors.emb"),
        ("--anchor-classes", "anchors.csv"),
        ("--head", "head.lh"),
        ("--truth", "truth.csv"),
    ]
    .iter()
    .flat_map(|(flag, file)| [flag.to_string(), p(&dir.join(file)).to_string()])
    .chain(["--classes".into(), "4".into()])
    .collect()
}

#[test]
fn simgen_writes_readable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    ok(&["simgen", "--classes", "10", "--dim", "32", "--per-class", "500", "--anchors", "100", "--seed", "7", "--out", p(&out)]);
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["anchors.csv", "anchors.emb", "posteriors.cnf", "real.emb", "truth.csv"]);

    let real = read_embeddings(out.join("real.emb")).unwrap();
    assert_eq!((real.len(), real.dim()), (5000, 32));
    assert_eq!(read_labels(out.join("truth.csv"), 10, LabelKind::Truth).unwrap().len(), 5000);
    let anchors = read_anchors(out.join("anchors.emb"), out.join("anchors.csv"), 10).unwrap();
    assert!((0..10).all(|c| anchors.class_count(c) == 100));
    assert_eq!(read_confidences(out.join("posteriors.cnf")).unwrap().num_classes(), 10);
}

#[test]
fn relabel_sweep_and_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);

    let mut args: Vec<String> = vec!["anchor-relabel".into(), "relabel".into()];
    args.extend(scoring_args(d));
    for (flag, file) in [("--out-labels", "refined.csv"), ("--out-report", "report.json"), ("--out-scores", "scores.csv")] {
        args.extend([flag.to_string(), p(&d.join(file)).to_string()]);
    }
    args.extend(["--theta".into(), "0.3".into()]);
    assert_eq!(run(args.clone()), 0);

    let summary: RelabelSummary = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(summary.total, 200);
    assert_eq!((summary.alpha, summary.theta), (0.5, 0.3));
    let metrics = summary.metrics.expect("truth given");
    assert_eq!(metrics.changed, summary.changed);
    let scores = fs::read_to_string(d.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 201);
    assert!(scores.starts_with("id,original,candidate,top_score,refined,decision"));

    // same inputs, more threads: identical outputs
    let first = fs::read(d.join("refined.csv")).unwrap();
    args.extend(["--threads".into(), "4".into()]);
    assert_eq!(run(args), 0);
    assert_eq!(fs::read(d.join("refined.csv")).unwrap(), first);

    let mut sweep: Vec<String> = vec!["anchor-relabel".into(), "sweep".into()];
    sweep.extend(scoring_args(d));
    sweep.extend(["--out".into(), p(&d.join("sweep.csv")).into()]);
    assert_eq!(run(sweep), 0);
    let table = fs::read_to_string(d.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 8);
    assert!(table.starts_with("alpha,theta,changed,corrected,corrupted,label_accuracy"));

    ok(&[
        "eval", "--classes", "4", "--refined", p(&d.join("refined.csv")), "--noisy", p(&d.join("noisy.csv")),
        "--truth", p(&d.join("truth.csv")), "--embeddings", p(&d.join("real.emb")), "--train-labels",
        p(&d.join("refined.csv")), "--heldout", p(&d.join("heldout.emb")), "--heldout-truth",
        p(&d.join("heldout_truth.csv")), "--warm-start", p(&d.join("head.lh")), "--out", p(&d.join("eval.json")),
    ]);
    let eval: EvalOutput = serde_json::from_str(&fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    let labels = eval.labels.unwrap();
    assert_eq!(labels.label_accuracy_after, metrics.label_accuracy_after);
    let acc = eval.downstream_accuracy.unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn theta_above_one_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let mut args: Vec<String> = vec!["anchor-relabel".into(), "relabel".into()];
    args.extend(scoring_args(d));
    args.extend(["--theta", "1.5", "--out-labels"].map(String::from));
    args.push(p(&d.join("refined.csv")).into());
    args.push("--out-report".into());
    args.push(p(&d.join("report.json")).into());
    assert_eq!(run(args), 0);
    let summary: RelabelSummary = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(summary.changed, 0);
    assert_eq!(fs::read_to_string(d.join("refined.csv")).unwrap(), fs::read_to_string(d.join("noisy.csv")).unwrap());
}

#[test]
fn pipeline_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["pipeline", "--preset", "standard", "--seed", "7", "--out", p(&a)]);
    ok(&["pipeline", "--preset", "standard", "--seed", "7", "--threads", "4", "--out", p(&b)]);
    let report = fs::read(a.join("report.json")).unwrap();
    // threads is recorded in the settings; everything else must match
    let strip = |bytes: &[u8]| String::from_utf8_lossy(bytes).replace("\"threads\": 4", "\"threads\": 1");
    assert_eq!(strip(&report), strip(&fs::read(b.join("report.json")).unwrap()));
    ok(&["pipeline", "--preset", "standard", "--seed", "7", "--out", p(&b)]);
    assert_eq!(report, fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(b.join("sweep.csv")).unwrap());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.conf");
    fs::write(&cfg, "# small benchmark\nclasses = 3\ndim = 4\nper-class = 10\nanchors = 2\nseed = 1\n").unwrap();
    let out = dir.path().join("bench");
    ok(&["simgen", "--config", p(&cfg), "--per-class", "12", "--out", p(&out)]);
    let real = read_embeddings(out.join("real.emb")).unwrap();
    assert_eq!((real.len(), real.dim()), (36, 4));

    fs::write(&cfg, "clases = 3\n").unwrap();
    let status = Command::new(BIN).args(["simgen", "--config", p(&cfg), "--out", p(&out)]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("unknown key \"clases\""));
}

#[test]
fn usage_errors_exit_two() {
    for args in [&["simgen", "--bogus", "1"][..], &["frobnicate"], &[]] {
        let out = Command::new(BIN).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = Command::new(BIN)
        .args(["inject", "--truth", p(&missing), "--classes", "3", "--kind", "uniform", "--rate", "0.1", "--out", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.emb");
    fs::write(&bad, b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0").unwrap();
    let labels = dir.path().join("l.csv");
    fs::write(&labels, "id,label\n0,0\n").unwrap();
    let out = Command::new(BIN)
        .args(["train", "--embeddings", p(&bad), "--labels", p(&labels), "--classes", "2", "--out", p(&dir.path().join("h.lh"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

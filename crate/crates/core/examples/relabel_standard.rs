//! Refine noisy labels against anchor prototypes and count what changed.
//!
//! cargo run --example relabel_standard

use anchor_relabel::eval::label_metrics;
use anchor_relabel::head::{train_head, TrainConfig};
use anchor_relabel::noise::{inject, NoiseKind, NoiseSpec};
use anchor_relabel::relabel::{build_prototypes, relabel, Decision, RelabelConfig};
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use anchor_relabel::Result;

pub fn run() -> Result<()> {
    let bench = generate_benchmark(&SimSpec { samples_per_class: 200, ..SimSpec::default() })?;
    let truth = bench.truth();
    let noisy = inject(truth, Some(&bench.posteriors), &NoiseSpec::new(NoiseKind::Pmd, 0.35, 5))?;
    let ds = bench.dataset.with_labels(noisy.clone())?;
    let head = train_head(&ds, &TrainConfig { epochs: 50, ..TrainConfig::default() }, None)?;
    let protos = build_prototypes(&bench.anchors)?;

    for cfg in [RelabelConfig::default(), RelabelConfig::new(0.3, 0.5)?] {
        let (refined, scored) = relabel(&ds, &protos, &head, &cfg)?;
        let report = label_metrics(&refined, &noisy, truth)?;
        let fired = scored.iter().filter(|s| s.decision == Decision::Relabeled).count();
        println!(
            "alpha {:.1} theta {:.1}: {fired} above threshold, {} changed ({} corrected, {} corrupted), acc {:.4} -> {:.4}",
            cfg.alpha,
            cfg.threshold,
            report.changed,
            report.corrected,
            report.corrupted,
            report.label_accuracy_before,
            report.label_accuracy_after
        );
    }

    let (_, scored) = relabel(&ds, &protos, &head, &RelabelConfig::default())?;
    let s = &scored[0];
    println!("sample {}: sim {:.3?}", s.id, &s.similarity[..3]);
    println!("          conf {:.3?}", &s.confidence[..3]);
    println!("          best class {} score {:.3}, {:?}", s.candidate, s.top_score, s.decision);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

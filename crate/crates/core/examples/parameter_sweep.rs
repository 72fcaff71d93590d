//! Sweep alpha and theta on a domain-gap benchmark and print the table as CSV.
//!
//! cargo run --example parameter_sweep

use anchor_relabel::eval::{render_report, ReportFormat};
use anchor_relabel::head::{train_head, TrainConfig};
use anchor_relabel::noise::{inject, NoiseKind, NoiseSpec};
use anchor_relabel::relabel::{build_prototypes, sweep};
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use anchor_relabel::Result;

pub fn run() -> Result<()> {
    let spec = SimSpec { samples_per_class: 200, anchor_shift: 3.0, ..SimSpec::default() };
    let bench = generate_benchmark(&spec)?;
    let truth = bench.truth();
    let noisy = inject(truth, Some(&bench.posteriors), &NoiseSpec::new(NoiseKind::Pmd, 0.35, 2))?;
    let ds = bench.dataset.with_labels(noisy)?;
    let head = train_head(&ds, &TrainConfig { epochs: 50, ..TrainConfig::default() }, None)?;
    let protos = build_prototypes(&bench.anchors)?;

    let table = sweep(&ds, &protos, &head, &[1.0, 0.7, 0.5, 0.3, 0.0], &[0.0, 0.6], Some(truth))?;
    print!("{}", render_report(&table, ReportFormat::Csv)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

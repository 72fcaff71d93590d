//! Train the softmax head on noisy labels, then fine-tune it.
//!
//! cargo run --example train_head

use anchor_relabel::head::{accuracy, train_head_traced, TrainConfig};
use anchor_relabel::noise::{inject, NoiseKind, NoiseSpec};
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use anchor_relabel::Result;

pub fn run() -> Result<()> {
    let bench = generate_benchmark(&SimSpec { samples_per_class: 200, ..SimSpec::default() })?;
    let heldout = bench.heldout(100)?;
    let noisy = inject(bench.truth(), Some(&bench.posteriors), &NoiseSpec::new(NoiseKind::Pmd, 0.35, 3))?;
    let train = bench.dataset.with_labels(noisy)?;

    let cfg = TrainConfig { epochs: 40, seed: 1, ..TrainConfig::default() };
    let outcome = train_head_traced(&train, &cfg, None)?;
    let losses = &outcome.epoch_losses;
    println!("loss {:.4} -> {:.4} over {} epochs", losses[0], losses[losses.len() - 1], losses.len());
    println!("train acc (noisy labels) {:.4}", accuracy(&outcome.head, &train)?);
    println!("heldout acc              {:.4}", accuracy(&outcome.head, &heldout)?);

    let tuned = train_head_traced(&bench.dataset, &TrainConfig::fine_tuning(1), Some(&outcome.head))?;
    println!("after fine-tune on truth {:.4}", accuracy(&tuned.head, &heldout)?);
    println!("fingerprint {}", tuned.head.trained_on().unwrap_or("-"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

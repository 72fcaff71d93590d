//! Full run on a named preset: simulate, corrupt, train, refine, fine-tune.
//!
//! cargo run --release --example end_to_end -- [standard|domain-gap] [seed]

use anchor_relabel::pipeline::{run_pipeline, PipelineSettings, Preset};
use anchor_relabel::Result;

pub fn run_preset(preset: Preset, seed: u64) -> Result<()> {
    let run = run_pipeline(&PipelineSettings::preset(preset, seed))?;
    let r = &run.report;
    println!("preset {preset}, seed {seed}");
    println!("  noise rate           {:.4}", r.realized_noise_rate);
    println!("  label accuracy       {:.4} -> {:.4}", r.relabel.label_accuracy_before, r.relabel.label_accuracy_after);
    println!("  changed              {} ({} corrected, {} corrupted)", r.relabel.changed, r.relabel.corrected, r.relabel.corrupted);
    println!("  heldout, noisy head  {:.4}", r.downstream_noisy);
    println!("  heldout, fine-tuned  {:.4}", r.downstream_refined);
    println!("  heldout, retrained   {:.4}", r.downstream_refined_scratch);
    for cell in &r.sweep.cells {
        println!(
            "  alpha {:.1} theta {:.1}: changed {:>4}, acc {:.4}",
            cell.alpha,
            cell.theta,
            cell.changed,
            cell.label_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn run() -> Result<()> {
    run_preset(Preset::Standard, 7)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().map(|s| s.parse()).transpose()?.unwrap_or(Preset::Standard);
    let seed = args.next().map(|s| s.parse::<u64>()).transpose().map_err(|e| anchor_relabel::Error::Config(e.to_string()))?.unwrap_or(7);
    run_preset(preset, seed)
}

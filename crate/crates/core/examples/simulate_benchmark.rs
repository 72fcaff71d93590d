//! Generate a Gaussian benchmark and inspect its geometry.
//!
//! cargo run --example simulate_benchmark

use anchor_relabel::relabel::build_prototypes;
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use anchor_relabel::Result;

pub fn run() -> Result<()> {
    let spec = SimSpec { samples_per_class: 200, ..SimSpec::default() };
    let bench = generate_benchmark(&spec)?;
    println!(
        "{} real samples, {} anchors, C = {}, D = {}",
        bench.dataset.len(),
        bench.anchors.embeddings().len(),
        spec.num_classes,
        spec.dim
    );

    // the anchor offset models the gap between generated and real data
    let protos = build_prototypes(&bench.anchors)?;
    for (c, mean) in bench.means.iter().enumerate().take(3) {
        let gap: f64 = protos.vector(c).iter().zip(mean).map(|(p, m)| (p - m).powi(2)).sum::<f64>().sqrt();
        println!("class {c}: |prototype - class mean| = {gap:.3}");
    }

    let mean_top: f64 =
        bench.posteriors.rows().map(|r| r.iter().cloned().fold(0.0f32, f32::max) as f64).sum::<f64>() / bench.dataset.len() as f64;
    println!("mean top posterior: {mean_top:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

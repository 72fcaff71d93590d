//! Corrupt ground truth with each noise model and report realized rates.
//!
//! cargo run --example inject_noise

use anchor_relabel::noise::{calibrate_pmd, inject, NoiseKind, NoiseSpec};
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use anchor_relabel::Result;

pub fn run() -> Result<()> {
    let bench = generate_benchmark(&SimSpec { samples_per_class: 1000, ..SimSpec::default() })?;
    let truth = bench.truth();

    let specs = [
        NoiseSpec::new(NoiseKind::Uniform, 0.3, 1),
        NoiseSpec::new(NoiseKind::Asymmetric, 0.4, 1),
        NoiseSpec::new(NoiseKind::Pmd, 0.35, 1),
        NoiseSpec::hybrid(0.35, NoiseKind::Uniform, 0.3, 1),
    ];
    for spec in &specs {
        let noisy = inject(truth, Some(&bench.posteriors), spec)?;
        let rate = noisy.count_differences(truth) as f64 / truth.len() as f64;
        println!("{:<10} target {:.2} (+{:.2}) realized {rate:.4}", spec.kind.to_string(), spec.rate, spec.second_rate);
    }

    let cal = calibrate_pmd(truth, &bench.posteriors, 0.7, 3, 0.9)?;
    println!("pmd(0.7): scale {:.4e}, mean flip probability {:.5}", cal.scale, cal.mean_probability);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

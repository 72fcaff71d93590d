//! Write and read back every on-disk format: EMB1, CNF1, LH01, labels and
//! anchor sidecar CSVs.
//!
//! cargo run --example file_formats

use anchor_relabel::data::LabelKind;
use anchor_relabel::head::{train_head, LinearHead, TrainConfig};
use anchor_relabel::io::{
    read_anchors, read_confidences, read_embeddings, read_labels, write_anchors, write_confidences, write_embeddings,
    write_labels,
};
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use anchor_relabel::Result;

pub fn run() -> Result<()> {
    let dir = std::env::temp_dir().join(format!("anchor-relabel-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let spec = SimSpec { num_classes: 3, dim: 4, samples_per_class: 5, anchors_per_class: 2, ..SimSpec::default() };
    let bench = generate_benchmark(&spec)?;
    let head = train_head(&bench.dataset, &TrainConfig { epochs: 5, ..TrainConfig::default() }, None)?;

    write_embeddings(bench.dataset.embeddings(), dir.join("real.emb"))?;
    write_labels(bench.truth(), dir.join("truth.csv"))?;
    write_anchors(&bench.anchors, dir.join("anchors.emb"), dir.join("anchors.csv"))?;
    write_confidences(&bench.posteriors, dir.join("posteriors.cnf"))?;
    head.write(dir.join("head.lh"))?;

    assert_eq!(&read_embeddings(dir.join("real.emb"))?, bench.dataset.embeddings());
    assert_eq!(&read_labels(dir.join("truth.csv"), 3, LabelKind::Truth)?, bench.truth());
    assert_eq!(read_anchors(dir.join("anchors.emb"), dir.join("anchors.csv"), 3)?, bench.anchors);
    assert_eq!(read_confidences(dir.join("posteriors.cnf"))?, bench.posteriors);
    assert_eq!(LinearHead::read(dir.join("head.lh"))?.to_bytes(), head.to_bytes());

    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        println!("{:<16} {:>5} bytes", entry.file_name().to_string_lossy(), entry.metadata()?.len());
    }
    print!("{}", std::fs::read_to_string(dir.join("anchors.csv"))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

mod common;

use anchor_relabel::data::{bind_dataset, EmbeddingMatrix, LabelKind, LabelSet};
use anchor_relabel::head::{accuracy, confidences, train_head, train_head_traced, LinearHead, SoftmaxObjective, TrainConfig};
use anchor_relabel::sim::{generate_benchmark, SimSpec};
use proptest::prelude::*;

#[test]
fn gradient_matches_finite_differences_on_small_instance() {
    // 5 samples, C = 3, D = 4
    let features: Vec<f64> = (0..20).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let labels = [0, 2, 1, 1, 0];
    let w: Vec<f64> = (0..12).map(|i| ((i * 5 % 7) as f64 - 3.0) / 4.0).collect();
    let b = [0.1, -0.2, 0.05];
    let obj = SoftmaxObjective::new(&features, &labels, 3, 4, 1e-4).unwrap();
    let (gw, gb) = obj.gradient(&w, &b);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for j in 0..w.len() {
        let (mut p, mut m) = (w.clone(), w.clone());
        p[j] += h;
        m[j] -= h;
        let fd = (obj.loss(&p, &b) - obj.loss(&m, &b)) / (2.0 * h);
        worst = worst.max((gw[j] - fd).abs() / gw[j].abs().max(fd.abs()).max(1e-8));
    }
    for j in 0..b.len() {
        let (mut p, mut m) = (b.to_vec(), b.to_vec());
        p[j] += h;
        m[j] -= h;
        let fd = (obj.loss(&w, &p) - obj.loss(&w, &m)) / (2.0 * h);
        worst = worst.max((gb[j] - fd).abs() / gb[j].abs().max(fd.abs()).max(1e-8));
    }
    assert!(worst <= 1e-4, "{worst:e}");
}

#[test]
fn random_gradient_checks() {
    let mut rng = common::rng(99);
    for _ in 0..50 {
        let worst = common::gradient_check(&mut rng);
        assert!(worst <= 1e-4, "{worst:e}");
    }
}

#[test]
fn full_batch_loss_is_non_increasing() {
    let spec = SimSpec {
        num_classes: 3,
        dim: 4,
        samples_per_class: 50,
        anchors_per_class: 5,
        class_separation: 3.0,
        ..SimSpec::default()
    };
    let bench = generate_benchmark(&spec).unwrap();
    let cfg = TrainConfig { epochs: 100, batch_size: bench.dataset.len(), ..TrainConfig::default() };
    let trace = train_head_traced(&bench.dataset, &cfg, None).unwrap();
    assert_eq!(trace.epoch_losses.len(), 100);
    for pair in trace.epoch_losses.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-6, "{} -> {}", pair[0], pair[1]);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let bench = generate_benchmark(&SimSpec { samples_per_class: 40, ..SimSpec::default() }).unwrap();
    let cfg = TrainConfig { epochs: 20, seed: 5, ..TrainConfig::default() };
    let a = train_head(&bench.dataset, &cfg, None).unwrap();
    let b = train_head(&bench.dataset, &cfg, None).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(a.trained_on(), b.trained_on());
    let other = train_head(&bench.dataset, &TrainConfig { seed: 6, ..cfg }, None).unwrap();
    assert_ne!(a.to_bytes(), other.to_bytes());
}

#[test]
fn fine_tune_keeps_warm_start_close() {
    let bench = generate_benchmark(&SimSpec { samples_per_class: 40, ..SimSpec::default() }).unwrap();
    let base = train_head(&bench.dataset, &TrainConfig { epochs: 30, ..TrainConfig::default() }, None).unwrap();
    let tuned = train_head(&bench.dataset, &TrainConfig::fine_tuning(1), Some(&base)).unwrap();
    let drift = base.weights().iter().zip(tuned.weights()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(drift < 0.1, "{drift}");
    assert!(accuracy(&tuned, &bench.dataset).unwrap() >= accuracy(&base, &bench.dataset).unwrap() - 0.01);

    let wrong_shape = LinearHead::zeros(3, 32).unwrap();
    assert!(train_head(&bench.dataset, &TrainConfig::fine_tuning(1), Some(&wrong_shape)).is_err());
}

#[test]
fn confidence_rows_sum_to_one() {
    let bench = generate_benchmark(&SimSpec { samples_per_class: 30, ..SimSpec::default() }).unwrap();
    let head = train_head(&bench.dataset, &TrainConfig { epochs: 10, ..TrainConfig::default() }, None).unwrap();
    let conf = confidences(&head, bench.dataset.embeddings()).unwrap();
    for row in conf.rows() {
        let s: f64 = row.iter().map(|&p| f64::from(p)).sum();
        assert!((s - 1.0).abs() <= 1e-6, "{s}");
    }
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        w in prop::collection::vec(-3.0f32..3.0, 6),
        b in prop::collection::vec(-3.0f32..3.0, 3),
        x in prop::collection::vec(-3.0f32..3.0, 2),
        shift in -50.0f32..50.0,
    ) {
        let head = LinearHead::new(3, 2, w.clone(), b.clone()).unwrap();
        let shifted = LinearHead::new(3, 2, w, b.iter().map(|v| v + shift).collect()).unwrap();
        let emb = EmbeddingMatrix::new(1, 2, x, vec![0]).unwrap();
        let p = confidences(&head, &emb).unwrap();
        let q = confidences(&shifted, &emb).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            // shift is applied in f32 before the f64 logits
            prop_assert!((a - b).abs() <= 1e-5, "{} vs {}", a, b);
        }
    }

    #[test]
    fn predictions_match_confidence_argmax(
        w in prop::collection::vec(-3.0f32..3.0, 8),
        b in prop::collection::vec(-3.0f32..3.0, 4),
        x in prop::collection::vec(-3.0f32..3.0, 2),
    ) {
        let head = LinearHead::new(4, 2, w, b).unwrap();
        let emb = EmbeddingMatrix::new(1, 2, x.clone(), vec![0]).unwrap();
        let conf = confidences(&head, &emb).unwrap();
        let row = conf.row(0);
        let best = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assert_eq!(row[head.predict(&x)], best);
    }
}

#[test]
fn downstream_accuracy_is_one_for_perfect_head() {
    // class is the sign of the single feature
    let values: Vec<f32> = vec![-3.0, -2.0, 2.0, 3.0];
    let emb = EmbeddingMatrix::new(4, 1, values, vec![0, 1, 2, 3]).unwrap();
    let labels = LabelSet::from_labels(vec![0, 0, 1, 1], 2, LabelKind::Truth).unwrap();
    let ds = bind_dataset(emb, labels).unwrap();
    let head = LinearHead::new(2, 1, vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
    assert_eq!(accuracy(&head, &ds).unwrap(), 1.0);
}

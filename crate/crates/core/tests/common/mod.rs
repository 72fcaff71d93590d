//! Shared test fixtures: random small instances, a brute-force reference
//! for the relabel rule, and a finite-difference gradient check.
#![allow(dead_code, clippy::needless_range_loop, clippy::manual_clamp)]

use anchor_relabel::data::{bind_dataset, AnchorSet, ConfidenceMatrix, Dataset, EmbeddingMatrix, LabelKind, LabelSet};
use anchor_relabel::head::SoftmaxObjective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub dataset: Dataset,
    pub anchors: AnchorSet,
    pub conf: ConfidenceMatrix,
}

fn normal_f32(rng: &mut ChaCha8Rng) -> f32 {
    let v: f64 = StandardNormal.sample(rng);
    v as f32
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// C in [2, max_c], D in [1, max_d], M in [1, max_m], 1 to 4 anchors per class.
pub fn random_instance(rng: &mut ChaCha8Rng, max_c: usize, max_d: usize, max_m: usize) -> Instance {
    let c = rng.random_range(2..=max_c);
    let d = rng.random_range(1..=max_d);
    let m = rng.random_range(1..=max_m);
    let values: Vec<f32> = (0..m * d).map(|_| normal_f32(rng)).collect();
    let emb = EmbeddingMatrix::new(m, d, values, (0..m as u32).collect()).unwrap();
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
    let dataset = bind_dataset(emb, LabelSet::from_labels(labels, c, LabelKind::Noisy).unwrap()).unwrap();

    let mut classes = Vec::new();
    let mut anchor_values = Vec::new();
    for class in 0..c {
        for _ in 0..rng.random_range(1..=4) {
            classes.push(class);
            anchor_values.extend((0..d).map(|_| normal_f32(rng) + 0.5));
        }
    }
    let n = classes.len();
    let anchors = AnchorSet::new(
        EmbeddingMatrix::new(n, d, anchor_values, (0..n as u32).collect()).unwrap(),
        classes,
        c,
    )
    .unwrap();

    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let logits: Vec<f64> = (0..c).map(|_| 2.0 * normal_f32(rng) as f64).collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect();
    let conf = ConfidenceMatrix::from_rows(&rows).unwrap();
    Instance { dataset, anchors, conf }
}

/// Direct loop over samples and classes, written from the rule itself.
pub fn brute_force_relabel(inst: &Instance, alpha: f64, theta: f64) -> Vec<usize> {
    let c = inst.anchors.num_classes();
    let d = inst.anchors.dim();
    let anchor_emb = inst.anchors.embeddings();

    let mut protos = vec![vec![0.0f64; d]; c];
    for k in 0..c {
        let mut count = 0.0;
        for a in 0..anchor_emb.len() {
            if inst.anchors.classes()[a] == k {
                for j in 0..d {
                    protos[k][j] += anchor_emb.row(a)[j] as f64;
                }
                count += 1.0;
            }
        }
        for j in 0..d {
            protos[k][j] /= count;
        }
    }

    let mut out = Vec::new();
    for i in 0..inst.dataset.len() {
        let x = inst.dataset.embeddings().row(i);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..c {
            let mut dot = 0.0;
            let mut xx = 0.0;
            let mut pp = 0.0;
            for j in 0..d {
                let xv = x[j] as f64;
                dot += xv * protos[k][j];
                xx += xv * xv;
                pp += protos[k][j] * protos[k][j];
            }
            let mut sim = dot / (xx.sqrt() * pp.sqrt());
            if sim > 1.0 {
                sim = 1.0;
            }
            if sim < -1.0 {
                sim = -1.0;
            }
            let s = alpha * sim + (1.0 - alpha) * inst.conf.row(i)[k] as f64;
            if s > best_score {
                best_score = s;
                best = k;
            }
        }
        if best_score >= theta {
            out.push(best);
        } else {
            out.push(inst.dataset.labels().labels()[i]);
        }
    }
    out
}

/// Random small objective; returns the largest elementwise relative error
/// between the analytic gradient and central differences (step 1e-4).
pub fn gradient_check(rng: &mut ChaCha8Rng) -> f64 {
    let c = rng.random_range(2..=5);
    let d = rng.random_range(1..=8);
    let m = rng.random_range(1..=20);
    let l2 = rng.random_range(0.0..0.1);
    let mut gauss = || -> f64 { StandardNormal.sample(rng) };
    let features: Vec<f64> = (0..m * d).map(|_| gauss()).collect();
    let w: Vec<f64> = (0..c * d).map(|_| gauss()).collect();
    let b: Vec<f64> = (0..c).map(|_| gauss()).collect();
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
    let obj = SoftmaxObjective::new(&features, &labels, c, d, l2).unwrap();
    let (gw, gb) = obj.gradient(&w, &b);

    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, numeric: f64| {
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    };
    for j in 0..w.len() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[j] += h;
        wm[j] -= h;
        check(gw[j], (obj.loss(&wp, &b) - obj.loss(&wm, &b)) / (2.0 * h));
    }
    for j in 0..b.len() {
        let (mut bp, mut bm) = (b.clone(), b.clone());
        bp[j] += h;
        bm[j] -= h;
        check(gb[j], (obj.loss(&w, &bp) - obj.loss(&w, &bm)) / (2.0 * h));
    }
    worst
}

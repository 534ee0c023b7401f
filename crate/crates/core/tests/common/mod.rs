//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ddme_core::corpus::{ClickDataset, LabelSpace, QueryRecord};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn label_space(k: usize) -> LabelSpace {
    LabelSpace::new((0..k).map(|j| format!("c{j}")).collect()).unwrap()
}

pub fn dataset(k: usize, rows: &[(&str, &[(usize, u64)])]) -> ClickDataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (text, pv))| QueryRecord::new(i as u64, *text, pv.iter().copied().collect::<BTreeMap<_, _>>()))
        .collect();
    ClickDataset::new(label_space(k), records).unwrap()
}

/// One random metric instance: ranked prediction lists and truth sets.
#[derive(Debug)]
pub struct MetricInstance {
    pub predictions: Vec<Vec<usize>>,
    pub truth: Vec<BTreeSet<usize>>,
}

pub fn metric_instance(rng: &mut impl Rng) -> MetricInstance {
    let n = rng.gen_range(1..=50);
    let k = rng.gen_range(1..=20);
    let mut predictions = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let mut labels: Vec<usize> = (0..k).collect();
        labels.shuffle(rng);
        labels.truncate(rng.gen_range(0..=k.min(8)));
        predictions.push(labels);
        truth.push((0..k).filter(|_| rng.gen_bool(0.3)).collect());
    }
    MetricInstance { predictions, truth }
}

fn oracle_hits(ranked: &[usize], truth: &BTreeSet<usize>) -> (usize, usize) {
    let mut shown = 0;
    let mut hits = 0;
    for (pos, label) in ranked.iter().enumerate() {
        if pos >= 5 {
            break;
        }
        shown += 1;
        for t in truth {
            if t == label {
                hits += 1;
            }
        }
    }
    (hits, shown)
}

/// Brute-force P@5: `(1/n) Σ |Ŷ ∩ Y| / min(5, |Ŷ|)`, with 0/0 taken as 0.
pub fn oracle_precision(inst: &MetricInstance) -> f64 {
    let mut total = 0.0;
    for (p, t) in inst.predictions.iter().zip(&inst.truth) {
        let (hits, shown) = oracle_hits(p, t);
        if shown != 0 {
            total += hits as f64 / shown as f64;
        }
    }
    total / inst.predictions.len() as f64
}

/// Brute-force R@5 over queries with non-empty truth; None when there are
/// none.
pub fn oracle_recall(inst: &MetricInstance) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for (p, t) in inst.predictions.iter().zip(&inst.truth) {
        if t.is_empty() {
            continue;
        }
        let (hits, _) = oracle_hits(p, t);
        total += hits as f64 / std::cmp::min(5, t.len()) as f64;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Central finite-difference check of `grad` against `loss` at `probes`
/// coordinates. Returns the worst relative error.
pub fn finite_difference_check(
    params: &mut [f64],
    probes: &[usize],
    grad: &[f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for &i in probes {
        let orig = params[i];
        params[i] = orig + step;
        let up = loss(params);
        params[i] = orig - step;
        let down = loss(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_PROBES: usize = 20;

fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Picks `count` coordinates, preferring ones the loss depends on.
fn pick_probes(rng: &mut impl Rng, grad: &[f64], count: usize) -> Vec<usize> {
    let mut live: Vec<usize> = (0..grad.len()).filter(|&i| grad[i].abs() > 1e-3).collect();
    live.shuffle(rng);
    let mut probes: Vec<usize> = live.into_iter().take(count).collect();
    while probes.len() < count {
        probes.push(rng.gen_range(0..grad.len()));
    }
    probes
}

/// Worst relative error of the student's one-vs-all gradient at `probes`
/// coordinates of one random example (embedding and output parameters).
pub fn student_gradient_error(rng: &mut impl Rng, probes: usize) -> f64 {
    use ddme_core::student::kernel::{example_grad, example_loss, Target};
    let (buckets, dim, k) = (12, 5, 6);
    let bag: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..buckets)).collect();
    let targets: Vec<Target> = (0..k)
        .map(|label| Target {
            label,
            positive: rng.gen_bool(0.4),
            weight: rng.gen_range(0.2..2.0),
        })
        .collect();
    let mut params = random_vec(rng, (buckets + k) * dim, 0.8);
    let split = buckets * dim;
    let g = example_grad(&params[..split], &params[split..], dim, &bag, &targets);
    let mut grad = vec![0.0; params.len()];
    for &r in &bag {
        for c in 0..dim {
            grad[r * dim + c] += g.grad_hidden[c] / bag.len() as f64;
        }
    }
    for (t, &d) in targets.iter().zip(&g.dlogit) {
        for c in 0..dim {
            grad[split + t.label * dim + c] += d * g.hidden[c];
        }
    }
    let probes = pick_probes(rng, &grad, probes);
    finite_difference_check(&mut params, &probes, &grad, FD_STEP, |p| {
        example_loss(&p[..split], &p[split..], dim, &bag, &targets)
    })
}

fn unflatten(shape: &ddme_core::experts::ExpertParams<f64>, flat: &[f64]) -> ddme_core::experts::ExpertParams<f64> {
    let mut p = shape.clone();
    let mut at = 0;
    for v in [&mut p.embedding, &mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
        let n = v.len();
        v.copy_from_slice(&flat[at..at + n]);
        at += n;
    }
    p
}

/// Worst relative error of one expert loss mode's gradient on one random
/// record with non-uniform PV, over all parameter blocks.
pub fn expert_gradient_error(mode: ddme_core::experts::ExpertLossMode, rng: &mut impl Rng, probes: usize) -> f64 {
    use ddme_core::experts::loss::{accumulate_record, record_loss, ExpertGrads};
    use ddme_core::experts::ExpertParams;
    let (buckets, de, h, k) = (10, 4, 5, 6);
    let mut shape = ExpertParams::<f64>::zeros(buckets, de, h, k);
    let bag: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..buckets)).collect();
    let mut labels: Vec<usize> = (0..k).collect();
    labels.shuffle(rng);
    let pv: Vec<(usize, f64)> = labels[..rng.gen_range(1..=3)]
        .iter()
        .map(|&j| (j, f64::from(rng.gen_range(1u32..50))))
        .collect();
    let weights = mode.term_weights(&pv, k).unwrap();
    let mut flat = random_vec(rng, buckets * de + h * de + h + k * h + k, 0.8);
    shape = unflatten(&shape, &flat);
    let mut grads = ExpertGrads::zeros(&shape);
    accumulate_record(&shape, &bag, &weights, 1.0, &mut grads);
    let mut grad = grads.dense_embedding(&shape);
    for v in [&grads.w1, &grads.b1, &grads.w2, &grads.b2] {
        grad.extend_from_slice(v);
    }
    let probes = pick_probes(rng, &grad, probes);
    finite_difference_check(&mut flat, &probes, &grad, FD_STEP, |f| {
        record_loss(&unflatten(&shape, f), &bag, &weights)
    })
}

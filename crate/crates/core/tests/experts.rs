mod common;

use common::{dataset, label_space};
use ddme_core::corpus::{generate_synthetic, Band, BandCuts, SyntheticSpec};
use ddme_core::eval::{expert_band_report, EvalOptions};
use ddme_core::experts::loss::record_loss;
use ddme_core::experts::{
    compute_pv_weights, load_expert, parse_inference, read_expert, save_expert, train_expert, write_expert,
    write_inference, ExpertKind, ExpertLossMode, ExpertModel, ExpertParams, ExpertTrainConfig, NegativeScheme,
};
use ddme_core::featurizer::FeaturizerConfig;
use proptest::prelude::*;

fn small_cfg(epochs: usize) -> ExpertTrainConfig {
    ExpertTrainConfig {
        embed_dim: 16,
        hidden: 32,
        epochs,
        batch_size: 32,
        learning_rate: 0.02,
        featurizer: FeaturizerConfig::default().with_buckets(1 << 14),
        ..ExpertTrainConfig::default()
    }
}

fn smoke_corpus(n: usize, seed: u64) -> ddme_core::corpus::SyntheticCorpus {
    generate_synthetic(&SyntheticSpec {
        n_queries: n,
        k_categories: 20,
        vocab_size: 500,
        heldout_size: n / 10,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn logits(k: usize, b2: &[f64]) -> ExpertParams<f64> {
    let mut p = ExpertParams::<f64>::zeros(4, 2, 2, k);
    p.b2.copy_from_slice(b2);
    p
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn loss_examples() {
    let uniform = ExpertLossMode::new(ExpertKind::Uniform).term_weights(&[(0, 3.0)], 2).unwrap();
    let l = record_loss(&logits(2, &[0.0, 0.0]), &[1], &uniform);
    assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

    let literal = ExpertLossMode::literal(ExpertKind::Forward).term_weights(&[(0, 0.0), (2, 0.0)], 3).unwrap();
    assert_eq!(record_loss(&logits(3, &[0.3, -1.2, 2.0]), &[0], &literal), 0.0);

    // k = 2, pv (10, 0), y = (1, 0), ŷ = (0.9, 0.1): r = (0, 1) so the loss is -ln(0.9).
    let backward = ExpertLossMode::new(ExpertKind::Backward).term_weights(&[(0, 10.0)], 2).unwrap();
    let l = record_loss(&logits(2, &[logit(0.9), logit(0.1)]), &[], &backward);
    assert!((l - 0.105_360_515_657_826_3).abs() < 1e-9, "{l}");
    assert!((l - 0.1054).abs() < 5e-5);
}

#[test]
fn loss_modes_differ_on_non_uniform_pv() {
    let pv = [(0, 7.0), (2, 1.0)];
    let p = logits(4, &[0.4, -0.7, 1.1, -0.2]);
    let loss = |mode: ExpertLossMode| record_loss(&p, &[], &mode.term_weights(&pv, 4).unwrap());
    let f = loss(ExpertLossMode::new(ExpertKind::Forward));
    let u = loss(ExpertLossMode::new(ExpertKind::Uniform));
    let b = loss(ExpertLossMode::new(ExpertKind::Backward));
    assert!(f != u && u != b && f != b, "{f} {u} {b}");
}

#[test]
fn smoothed_scheme_weights_negatives_by_alpha_over_k() {
    let mode = ExpertLossMode {
        kind: ExpertKind::Forward,
        negative_scheme: NegativeScheme::Smoothed(2.0),
    };
    let tw = mode.term_weights(&[(1, 3.0), (3, 1.0)], 4).unwrap();
    assert_eq!(tw.pos, vec![0.0, 0.75, 0.0, 0.25]);
    assert_eq!(tw.neg, vec![0.5; 4]);
    assert_eq!(tw.target, vec![false, true, false, true]);
}

#[test]
fn zero_model_thresholds() {
    let m = ExpertModel::zeros(
        ExpertLossMode::new(ExpertKind::Uniform),
        FeaturizerConfig::default().with_buckets(64),
        label_space(7),
        4,
        4,
    );
    assert!(m.predict("anything", 0.999, 5).is_empty());
    let all = m.predict("anything", 0.4, 5);
    assert_eq!(all.iter().map(|p| p.label).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    assert!(all.iter().all(|p| p.score == 0.5));
    assert_eq!(m.predict("anything", 0.4, 10).len(), 7);
}

#[test]
fn uniform_expert_memorizes_a_singleton() {
    let ds = dataset(3, &[("apple", &[(1, 10)])]);
    let (m, _) = train_expert(&ds, ExpertLossMode::new(ExpertKind::Uniform), &small_cfg(30)).unwrap();
    assert_eq!(m.predict("apple", 0.0, 1)[0].label, 1);
}

#[test]
fn three_modes_learn_distinct_parameters_and_reduce_loss() {
    let corpus = smoke_corpus(1000, 21);
    let models: Vec<(ExpertModel, Vec<f64>)> = [ExpertKind::Forward, ExpertKind::Uniform, ExpertKind::Backward]
        .into_iter()
        .map(|kind| {
            let (m, stats) = train_expert(&corpus.observed, ExpertLossMode::new(kind), &small_cfg(4)).unwrap();
            (m, stats.epoch_losses)
        })
        .collect();
    for (m, losses) in &models {
        assert!(m.params.all_finite());
        assert!(losses.last().unwrap() < &losses[0], "{:?}: {losses:?}", m.kind());
    }
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(models[i].0.param_distance_sq(&models[j].0) > 0.0);
        }
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let corpus = smoke_corpus(300, 22);
    let mode = ExpertLossMode::new(ExpertKind::Backward);
    let a = train_expert(&corpus.observed, mode, &small_cfg(2)).unwrap().0;
    let b = train_expert(&corpus.observed, mode, &small_cfg(2)).unwrap().0;
    assert_eq!(a, b);
    let c = train_expert(&corpus.observed, mode, &ExpertTrainConfig { seed: 1, ..small_cfg(2) }).unwrap().0;
    assert!(a.param_distance_sq(&c) > 0.0);
}

#[test]
fn trained_uniform_expert_recovers_the_top_label() {
    let corpus = smoke_corpus(1000, 23);
    let (m, _) = train_expert(&corpus.observed, ExpertLossMode::new(ExpertKind::Uniform), &small_cfg(10)).unwrap();
    let records = corpus.observed.records();
    let hits = records
        .iter()
        .filter(|r| {
            let top = r.top_label().unwrap();
            m.predict(&r.text, 0.0, 5).iter().any(|p| p.label == top)
        })
        .count();
    let frac = hits as f64 / records.len() as f64;
    assert!(frac >= 0.95, "top label predicted for {frac:.3} of queries");
}

/// Measured on this seeded corpus: the backward expert gives zero positive
/// weight to a record's only label, so on single-label tail queries it
/// recalls less than the forward expert. The opposite ordering is sometimes
/// expected of it; this test pins down what the implementation does.
#[test]
fn backward_vs_forward_on_the_low_band() {
    let corpus = generate_synthetic(&SyntheticSpec {
        n_queries: 4000,
        k_categories: 40,
        vocab_size: 1500,
        heldout_size: 500,
        seed: 24,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let opts = EvalOptions::default();
    let low = |kind| {
        let (m, _) = train_expert(&corpus.observed, ExpertLossMode::new(kind), &small_cfg(6)).unwrap();
        expert_band_report(&m, &corpus.full, &BandCuts::default(), &opts).unwrap().band(Band::Low).unwrap().r_at_5
    };
    let (fwd, bwd) = (low(ExpertKind::Forward), low(ExpertKind::Backward));
    eprintln!("low-band R@5 forward {fwd:.4} backward {bwd:.4}");
    assert!(fwd > bwd, "forward {fwd:.4} backward {bwd:.4}");
}

#[test]
fn model_and_inference_files_round_trip() {
    let corpus = smoke_corpus(200, 25);
    let (m, _) = train_expert(&corpus.observed, ExpertLossMode::new(ExpertKind::Forward), &small_cfg(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("expert.bin");
    save_expert(&m, &path).unwrap();
    assert_eq!(load_expert(&path).unwrap(), m);
    let mut bytes = Vec::new();
    write_expert(&m, &mut bytes).unwrap();
    assert_eq!(&bytes[..8], b"DDMEEXP1");
    bytes[0] = b'x';
    assert!(read_expert(bytes.as_slice()).is_err());

    let texts: Vec<&str> = corpus.observed.records().iter().map(|r| r.text.as_str()).collect();
    let preds: Vec<_> = texts.iter().map(|t| m.predict(t, 0.2, 3)).collect();
    let ls = corpus.observed.label_space();
    let file = write_inference(&texts, &preds, ls).unwrap();
    let lines = parse_inference(&file, ls).unwrap();
    assert_eq!(lines.len(), texts.len());
    for ((line, t), p) in lines.iter().zip(&texts).zip(&preds) {
        assert_eq!(&line.text, t);
        assert_eq!(line.predictions.len(), p.len());
        for (&(j, s), q) in line.predictions.iter().zip(p) {
            assert_eq!(j, q.label);
            assert!((s - f64::from(q.score)).abs() <= 5e-7);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weight_algebra(k in 2usize..30, row in proptest::collection::btree_map(0usize..30, 0u32..1000, 1..10)) {
        let pv: Vec<(usize, f64)> = row.into_iter().filter(|&(j, _)| j < k).map(|(j, v)| (j, f64::from(v))).collect();
        let w = compute_pv_weights(&pv, k).unwrap();
        let mass: f64 = pv.iter().map(|p| p.1).sum();
        prop_assert!(w.w.iter().chain(&w.r).all(|&x| x >= 0.0));
        if mass > 0.0 {
            prop_assert!((w.w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((w.r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        } else {
            prop_assert!(w.w.iter().all(|&x| x == 0.0));
            prop_assert!(w.r.iter().all(|&x| x == 1.0 / (k - 1) as f64));
        }
    }
}

mod common;

use common::dataset;
use ddme_core::corpus::{generate_synthetic, SyntheticSpec};
use ddme_core::featurizer::FeaturizerConfig;
use ddme_core::student::{
    read_model, save_model, load_model, train_student, write_model, NegativeMode, StudentTrainConfig, WeightMode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(epochs: usize) -> StudentTrainConfig {
    StudentTrainConfig {
        dim: 16,
        epochs,
        learning_rate: 0.5,
        featurizer: FeaturizerConfig::default().with_buckets(1 << 12),
        ..StudentTrainConfig::default()
    }
}

fn smoke_corpus(seed: u64) -> ddme_core::corpus::SyntheticCorpus {
    generate_synthetic(&SyntheticSpec {
        n_queries: 1000,
        k_categories: 20,
        vocab_size: 500,
        heldout_size: 100,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn memorizes_a_singleton() {
    let ds = dataset(3, &[("apple", &[(2, 10)])]);
    let (model, _) = train_student(&ds, &small_cfg(200)).unwrap();
    let top = model.predict_topk("apple", 1, 0.0);
    assert_eq!(top[0].label, 2);
    assert!(top[0].score > 0.9, "score {}", top[0].score);
}

#[test]
fn separable_pair_reaches_low_loss() {
    let ds = dataset(2, &[("red dress", &[(0, 0)]), ("blue jeans", &[(1, 0)])]);
    let cfg = small_cfg(300);
    let (_, stats) = train_student(&ds, &cfg).unwrap();
    let last = *stats.epoch_losses.last().unwrap();
    assert!(last < 0.05, "final loss {last}");
}

#[test]
fn weight_modes_agree_when_every_pv_is_zero() {
    let ds = dataset(4, &[("a b", &[(0, 0), (1, 0)]), ("c", &[(2, 0)]), ("d a", &[(3, 0)])]);
    let log = train_student(&ds, &small_cfg(5)).unwrap().0;
    let uni = train_student(
        &ds,
        &StudentTrainConfig {
            weight_mode: WeightMode::Uniform,
            ..small_cfg(5)
        },
    )
    .unwrap()
    .0;
    assert_eq!(log, uni);
}

#[test]
fn smoke_corpus_loss_drops_over_the_first_epochs() {
    let corpus = smoke_corpus(3);
    let cfg = StudentTrainConfig {
        learning_rate: 0.1,
        ..small_cfg(5)
    };
    let (model, stats) = train_student(&corpus.observed, &cfg).unwrap();
    let l = &stats.epoch_losses;
    assert!(l.iter().all(|v| v.is_finite()));
    assert!(l[1] <= l[0] && l[2] <= l[1], "{l:?}");
    assert!(model.is_finite());
}

#[test]
fn deterministic_mode_is_bit_reproducible() {
    let corpus = smoke_corpus(4);
    let cfg = StudentTrainConfig {
        negatives: NegativeMode::Sampled(5),
        ..small_cfg(2)
    };
    let a = train_student(&corpus.observed, &cfg).unwrap();
    let b = train_student(&corpus.observed, &cfg).unwrap();
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    write_model(&a.0, &mut ba).unwrap();
    write_model(&b.0, &mut bb).unwrap();
    assert_eq!(ba, bb);
    assert_eq!(a.1, b.1);
}

#[test]
fn parallel_training_stays_finite() {
    let corpus = smoke_corpus(5);
    let cfg = StudentTrainConfig {
        deterministic: false,
        threads: 2,
        ..small_cfg(2)
    };
    let (model, stats) = train_student(&corpus.observed, &cfg).unwrap();
    assert!(model.is_finite());
    assert!(stats.epoch_losses.iter().all(|v| v.is_finite()));
}

#[test]
fn round_trip_preserves_predictions() {
    let corpus = smoke_corpus(6);
    let (model, _) = train_student(&corpus.observed, &small_cfg(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("student.bin");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let text = if rng.gen_bool(0.5) {
            corpus.heldout_t30.records()[rng.gen_range(0..100)].text.clone()
        } else {
            (0..rng.gen_range(0..4)).map(|_| format!("w{}", rng.gen_range(0..50))).collect::<Vec<_>>().join(" ")
        };
        assert_eq!(model.predict_topk(&text, 5, 0.0), back.predict_topk(&text, 5, 0.0));
    }
    let mut bytes = Vec::new();
    write_model(&back, &mut bytes).unwrap();
    assert_eq!(bytes, std::fs::read(&path).unwrap());
    assert_eq!(read_model(bytes.as_slice()).unwrap(), model);
}

#[test]
fn empty_dataset_and_bad_config_are_rejected() {
    let ds = dataset(2, &[("a", &[(0, 1)])]);
    assert!(train_student(&ds, &StudentTrainConfig { epochs: 0, ..small_cfg(1) }).is_err());
    assert!(train_student(&ds, &StudentTrainConfig { learning_rate: 0.0, ..small_cfg(1) }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prediction_contract(text in "[a-z ]{0,20}", t1 in 0.0f32..1.0, t2 in 0.0f32..1.0, topk in 1usize..8) {
        let ds = dataset(3, &[("red dress", &[(0, 5)]), ("blue jeans", &[(1, 2), (2, 1)])]);
        let (model, _) = train_student(&ds, &small_cfg(3)).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let loose = model.predict_topk(&text, topk, lo);
        let strict = model.predict_topk(&text, topk, hi);
        prop_assert!(loose.len() <= topk.min(3));
        prop_assert!(strict.iter().all(|p| p.score >= hi));
        // Raising the threshold only removes categories.
        for p in &strict {
            prop_assert!(loose.contains(p));
        }
        for w in loose.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].label < w[1].label));
        }
        prop_assert!(model.predict_topk(&text, topk, 1.0).iter().all(|p| p.score == 1.0));
        prop_assert_eq!(model.predict_topk(&text, topk, lo), loose);
    }
}

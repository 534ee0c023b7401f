use ddme_core::featurizer::{bucket_of, feature_strings, featurize, FeaturizerConfig};
use ddme_core::hashing::hash64;
use proptest::prelude::*;

#[test]
fn fnv1a_reference_vectors() {
    assert_eq!(hash64(b""), 14695981039346656037);
    assert_eq!(hash64(b"a"), (0xcbf29ce484222325u64 ^ 0x61).wrapping_mul(0x100000001b3));
    // Published FNV-1a 64 test vectors.
    assert_eq!(hash64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(hash64(b"foobar"), 0x85944171f73967e8);
    assert_ne!(hash64(b"ab"), hash64(b"ba"));
}

#[test]
fn red_dress_trigrams() {
    let cfg = FeaturizerConfig {
        buckets: 1 << 20,
        word_ngram_max: 2,
        char_ngram_min: 3,
        char_ngram_max: 3,
        ..FeaturizerConfig::default()
    };
    let expected = [
        "red", "dress", "red_dress", "<re", "red", "ed>", "<dr", "dre", "res", "ess", "ss>",
    ];
    assert_eq!(feature_strings("red dress", &cfg), expected);
    let bag = featurize("red dress", &cfg);
    let want: Vec<usize> = expected.iter().map(|f| (hash64(f.as_bytes()) % (1 << 20)) as usize).collect();
    assert_eq!(bag.indices, want);
    assert_eq!(bag.token_count(), 11);
}

#[test]
fn empty_text_has_no_features() {
    let bag = featurize("", &FeaturizerConfig::default());
    assert_eq!(bag.token_count(), 0);
    assert!(featurize("  \t ", &FeaturizerConfig::default()).is_empty());
}

#[test]
fn lowercasing_is_configurable() {
    let on = FeaturizerConfig::default();
    let off = FeaturizerConfig {
        lowercase: false,
        ..on.clone()
    };
    assert_eq!(featurize("Red Dress", &on), featurize("red dress", &on));
    assert_ne!(featurize("Red Dress", &off), featurize("red dress", &off));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = FeaturizerConfig::default();
    for bad in [
        base.clone().with_buckets(1),
        base.clone().with_buckets(1000),
        FeaturizerConfig {
            word_ngram_max: 0,
            ..base.clone()
        },
        FeaturizerConfig {
            char_ngram_min: 5,
            char_ngram_max: 3,
            ..base.clone()
        },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    assert!(base.validate().is_ok());
}

fn config() -> impl Strategy<Value = FeaturizerConfig> {
    (1u32..=16, 1u32..=3, 1u32..=4, 0u32..=3).prop_map(|(log_b, wng, cmin, extra)| FeaturizerConfig {
        buckets: 1 << log_b,
        word_ngram_max: wng,
        char_ngram_min: cmin,
        char_ngram_max: cmin + extra,
        ..FeaturizerConfig::default()
    })
}

proptest! {
    #[test]
    fn indices_below_bucket_count(text in "[a-zA-Z0-9 éü]{0,40}", cfg in config()) {
        let bag = featurize(&text, &cfg);
        prop_assert!(bag.indices.iter().all(|&i| (i as u64) < cfg.buckets));
        prop_assert_eq!(bag.token_count(), bag.indices.len());
    }

    #[test]
    fn deterministic(text in "\\PC{0,30}", cfg in config()) {
        prop_assert_eq!(featurize(&text, &cfg), featurize(&text, &cfg));
    }

    #[test]
    fn appending_a_token_never_shrinks(text in "[a-z ]{0,30}", tok in "[a-z]{1,8}", cfg in config()) {
        let longer = format!("{text} {tok}");
        prop_assert!(featurize(&longer, &cfg).token_count() >= featurize(&text, &cfg).token_count());
    }

    #[test]
    fn strings_and_indices_agree(text in "[a-z ]{0,30}", cfg in config()) {
        let from_strings: Vec<usize> = feature_strings(&text, &cfg).iter().map(|f| bucket_of(f, cfg.buckets)).collect();
        prop_assert_eq!(from_strings, featurize(&text, &cfg).indices);
    }
}

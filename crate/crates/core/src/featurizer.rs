//! Hashed bag of words, word n-grams and character n-grams.
//!
//! Every feature string is hashed with 64-bit FNV-1a and reduced modulo the
//! bucket count. Words, word n-grams (tokens joined by `_`) and character
//! n-grams of `<word>` share one bucket space, so collisions between feature
//! kinds are possible and expected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::hash64;

pub const DEFAULT_BUCKETS: u64 = 1 << 21;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub buckets: u64,
    pub word_ngram_max: u32,
    pub char_ngram_min: u32,
    pub char_ngram_max: u32,
    pub min_word_count: u32,
    pub lowercase: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            buckets: DEFAULT_BUCKETS,
            word_ngram_max: 2,
            char_ngram_min: 3,
            char_ngram_max: 6,
            min_word_count: 1,
            lowercase: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn with_buckets(mut self, buckets: u64) -> Self {
        self.buckets = buckets;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.buckets < 2 || !self.buckets.is_power_of_two() {
            errs.push(format!(
                "featurizer.buckets must be a power of two >= 2, got {}",
                self.buckets
            ));
        }
        if self.buckets > 1 << 32 {
            errs.push("featurizer.buckets must be <= 2^32".to_string());
        }
        if self.word_ngram_max < 1 {
            errs.push("featurizer.word_ngram_max must be >= 1".to_string());
        }
        if self.char_ngram_min < 1 || self.char_ngram_min > self.char_ngram_max {
            errs.push(format!(
                "featurizer char n-gram range {}..{} is invalid",
                self.char_ngram_min, self.char_ngram_max
            ));
        }
        if self.min_word_count < 1 {
            errs.push("featurizer.min_word_count must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Multiset of bucket indices, in emission order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureBag {
    pub indices: Vec<usize>,
}

impl FeatureBag {
    pub fn token_count(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn bucket_of(feature: &str, buckets: u64) -> usize {
    (hash64(feature.as_bytes()) % buckets) as usize
}

/// Splits on ASCII whitespace, lowercasing if configured.
pub fn tokenize(text: &str, cfg: &FeaturizerConfig) -> Vec<String> {
    text.split_ascii_whitespace()
        .map(|t| {
            if cfg.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

pub fn featurize(text: &str, cfg: &FeaturizerConfig) -> FeatureBag {
    featurize_filtered(text, cfg, |_| true)
}

/// Like [`featurize`], dropping tokens for which `keep` returns false before
/// any feature is generated.
pub fn featurize_filtered(
    text: &str,
    cfg: &FeaturizerConfig,
    keep: impl Fn(&str) -> bool,
) -> FeatureBag {
    let mut indices = Vec::new();
    for_each_feature(text, cfg, keep, |f| indices.push(bucket_of(f, cfg.buckets)));
    FeatureBag { indices }
}

/// The feature strings behind [`featurize`], in the same order.
pub fn feature_strings(text: &str, cfg: &FeaturizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    for_each_feature(text, cfg, |_| true, |f| out.push(f.to_string()));
    out
}

/// Words, then word n-grams joined by `_`, then character n-grams of each
/// `<word>`.
fn for_each_feature(
    text: &str,
    cfg: &FeaturizerConfig,
    keep: impl Fn(&str) -> bool,
    mut emit: impl FnMut(&str),
) {
    let tokens: Vec<String> = tokenize(text, cfg)
        .into_iter()
        .filter(|t| keep(t))
        .collect();

    for tok in &tokens {
        emit(tok);
    }

    let mut gram = String::new();
    for n in 2..=cfg.word_ngram_max as usize {
        for window in tokens.windows(n) {
            gram.clear();
            for (i, tok) in window.iter().enumerate() {
                if i > 0 {
                    gram.push('_');
                }
                gram.push_str(tok);
            }
            emit(&gram);
        }
    }

    let (lo, hi) = (cfg.char_ngram_min as usize, cfg.char_ngram_max as usize);
    let mut wrapped = String::new();
    let mut bounds = Vec::new();
    for tok in &tokens {
        wrapped.clear();
        wrapped.push('<');
        wrapped.push_str(tok);
        wrapped.push('>');
        bounds.clear();
        bounds.extend(wrapped.char_indices().map(|(i, _)| i));
        bounds.push(wrapped.len());
        let n_chars = bounds.len() - 1;
        for n in lo..=hi.min(n_chars) {
            for start in 0..=n_chars - n {
                emit(&wrapped[bounds[start]..bounds[start + n]]);
            }
        }
    }
}

//! Browser bindings: hashed features of a query, PV weights of a row, and
//! PV allocation on a small pasted dataset.

use std::collections::BTreeSet;

use ddme_core::corpus::parse_dataset;
use ddme_core::distill::{allocate_pv, merge_labels, write_augmented, AllocationConfig, InferenceDataset};
use ddme_core::experts::compute_pv_weights;
use ddme_core::featurizer::{bucket_of, feature_strings, FeaturizerConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub fn featurize_json(text: &str, buckets: u64, word_ngram_max: u32, char_min: u32, char_max: u32) -> Result<String, String> {
    let cfg = FeaturizerConfig {
        buckets,
        word_ngram_max,
        char_ngram_min: char_min,
        char_ngram_max: char_max,
        ..FeaturizerConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let features: Vec<_> = feature_strings(text, &cfg)
        .into_iter()
        .map(|f| json!({ "bucket": bucket_of(&f, buckets), "feature": f }))
        .collect();
    Ok(json!({ "features": features }).to_string())
}

/// `pv` is `index:value` pairs separated by commas.
pub fn pv_weights_json(pv: &str, k: usize) -> Result<String, String> {
    let mut row = Vec::new();
    for item in pv.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (j, v) = item.split_once(':').ok_or(format!("expected index:pv, got {item:?}"))?;
        let j: usize = j.trim().parse().map_err(|_| format!("bad index {j:?}"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("bad pv {v:?}"))?;
        if j >= k {
            return Err(format!("index {j} out of range for k = {k}"));
        }
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("pv must be non-negative, got {v}"));
        }
        row.push((j, v));
    }
    let w = compute_pv_weights(&row, k).map_err(|e| e.to_string())?;
    Ok(json!({
        "w": w.w,
        "r": w.r,
        "sum_w": w.w.iter().sum::<f64>(),
        "sum_r": w.r.iter().sum::<f64>(),
    })
    .to_string())
}

/// `predicted` has one line per dataset record listing the expert-predicted
/// categories, comma-separated.
pub fn allocate_json(dataset: &str, predicted: &str, m: f64) -> Result<String, String> {
    let ds = parse_dataset(dataset, None).map_err(|e| e.to_string())?;
    let ls = ds.label_space();
    let lines: Vec<&str> = predicted.lines().collect();
    let mut sets = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let line = lines.get(i).copied().unwrap_or("");
        let mut set = BTreeSet::new();
        for cat in line.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            set.insert(ls.index_of(cat).ok_or(format!("line {}: unknown category {cat:?}", i + 1))?);
        }
        sets.push(set);
    }
    let inf = InferenceDataset::from_sets(vec![sets], ds.n()).map_err(|e| e.to_string())?;
    let merged = merge_labels(&ds, &inf).map_err(|e| e.to_string())?;
    let (aug, report) = allocate_pv(&ds, &merged, &AllocationConfig::with_m(m)).map_err(|e| e.to_string())?;
    let (data, provenance) = write_augmented(&aug).map_err(|e| e.to_string())?;
    Ok(json!({
        "augmented": data,
        "provenance": provenance,
        "table": report.render_table(),
        "prior_before": ds.category_mass().iter().map(|&v| v as f64 / ds.total_pv() as f64).collect::<Vec<_>>(),
        "prior_after": aug.category_mass().iter().map(|v| v / aug.total_pv()).collect::<Vec<_>>(),
        "categories": ls.categories(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn featurize(text: &str, buckets: u32, word_ngram_max: u32, char_min: u32, char_max: u32) -> Result<String, JsValue> {
    featurize_json(text, u64::from(buckets), word_ngram_max, char_min, char_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn pv_weights(pv: &str, k: u32) -> Result<String, JsValue> {
    pv_weights_json(pv, k as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn allocate(dataset: &str, predicted: &str, m: f64) -> Result<String, JsValue> {
    allocate_json(dataset, predicted, m).map_err(|e| JsValue::from_str(&e))
}

//! Seeded long-tail click-log generator.
//!
//! Categories are grouped into families of [`FAMILY_SIZE`]. Each category
//! owns a handful of specific tokens, each family owns a few family tokens,
//! and a shared noise vocabulary adds nothing. A query's true label set is
//! its primary category, the whole family when a family token occurs in the
//! text, and occasionally one idiosyncratic category that no token predicts.
//! Query popularity follows a Zipf law over a random rank permutation; each
//! query's PV is split multinomially over its labels.
//!
//! `observed` drops labels of tail queries (below `tail_quantile` by total
//! PV) with probability `tail_label_dropout`, always keeping the most-clicked
//! label. The two held-out sets mix re-issued training queries with fresh
//! ones at 95% and 55% overlap.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bands::assign_bands_by_mass;
use super::{Band, BandCuts, ClickDataset, LabelSpace, QueryRecord};
use crate::error::{Error, Result};

pub const FAMILY_SIZE: usize = 4;
const FAMILY_TOKENS: usize = 2;
const IDIOSYNCRATIC_PROB: f64 = 0.3;
const CATEGORY_ZIPF: f64 = 0.8;
const T1_OVERLAP: f64 = 0.95;
const T30_OVERLAP: f64 = 0.55;
const LENGTH_WEIGHTS: [u32; 5] = [1, 3, 3, 2, 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_queries: usize,
    pub k_categories: usize,
    pub zipf_exponent: f64,
    /// Target vocabulary size; every category gets at least one token.
    pub vocab_size: usize,
    pub tail_label_dropout: f64,
    /// Queries ranked below this total-PV quantile are subject to dropout.
    pub tail_quantile: f64,
    pub heldout_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_queries: 30_000,
            k_categories: 100,
            zipf_exponent: 1.1,
            vocab_size: 5_000,
            tail_label_dropout: 0.7,
            tail_quantile: 0.5,
            heldout_size: 3_000,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_queries < 1 {
            errs.push("synthetic.n_queries must be >= 1".to_string());
        }
        if self.k_categories < 1 {
            errs.push("synthetic.k_categories must be >= 1".to_string());
        }
        if self.vocab_size < 1 {
            errs.push("synthetic.vocab_size must be >= 1".to_string());
        }
        if self.heldout_size < 1 {
            errs.push("synthetic.heldout_size must be >= 1".to_string());
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            errs.push("synthetic.zipf_exponent must be > 0".to_string());
        }
        if !(0.0..=1.0).contains(&self.tail_label_dropout) {
            errs.push("synthetic.tail_label_dropout must be in [0, 1]".to_string());
        }
        if !(0.0..=1.0).contains(&self.tail_quantile) {
            errs.push("synthetic.tail_quantile must be in [0, 1]".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Ground-truth labels and PVs.
    pub full: ClickDataset,
    /// What the click log exposes: tail labels dropped.
    pub observed: ClickDataset,
    /// Ground-truth labels, high overlap with the training queries.
    pub heldout_t1: ClickDataset,
    /// Ground-truth labels, moderate overlap with the training queries.
    pub heldout_t30: ClickDataset,
}

struct Vocabulary {
    specific: Vec<Vec<String>>,
    family: Vec<Vec<String>>,
    noise: Vec<String>,
}

fn pseudo_word(rng: &mut impl Rng, seen: &mut HashSet<String>) -> String {
    const ONSETS: [&str; 18] = [
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
    ];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
    loop {
        let syllables = rng.gen_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        if seen.insert(w.clone()) {
            return w;
        }
    }
}

fn build_vocab(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vocabulary {
    let k = spec.k_categories;
    let families = k.div_ceil(FAMILY_SIZE);
    let noise_n = (spec.vocab_size / 5).max(1);
    let fam_n = families * FAMILY_TOKENS;
    let per_cat = (spec.vocab_size.saturating_sub(noise_n + fam_n) / k).max(1);
    let mut seen = HashSet::new();
    let mut words = |n: usize| -> Vec<String> { (0..n).map(|_| pseudo_word(rng, &mut seen)).collect() };
    let specific = (0..k).map(|_| words(per_cat)).collect();
    let family = (0..families).map(|_| words(FAMILY_TOKENS)).collect();
    let noise = words(noise_n);
    Vocabulary {
        specific,
        family,
        noise,
    }
}

fn family_members(fam: usize, k: usize) -> impl Iterator<Item = usize> {
    (fam * FAMILY_SIZE..((fam + 1) * FAMILY_SIZE).min(k)).into_iter()
}

struct QueryDraw {
    text: String,
    /// Label -> split weight for PV allocation.
    labels: BTreeMap<usize, f64>,
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    vocab: Vocabulary,
    primary: WeightedIndex<f64>,
    length: WeightedIndex<u32>,
}

impl Generator<'_> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> QueryDraw {
        let k = self.spec.k_categories;
        let c = self.primary.sample(rng);
        let fam = c / FAMILY_SIZE;
        let len = self.length.sample(rng) + 1;
        let spec_toks = &self.vocab.specific[c];
        let mut tokens = vec![spec_toks[rng.gen_range(0..spec_toks.len())].as_str()];
        let mut has_family = false;
        for _ in 1..len {
            let u: f64 = rng.gen();
            let tok = if u < 0.35 {
                has_family = true;
                let f = &self.vocab.family[fam];
                f[rng.gen_range(0..f.len())].as_str()
            } else if u < 0.7 {
                spec_toks[rng.gen_range(0..spec_toks.len())].as_str()
            } else {
                let nz = &self.vocab.noise;
                nz[rng.gen_range(0..nz.len())].as_str()
            };
            tokens.push(tok);
        }
        tokens.shuffle(rng);

        let mut labels = BTreeMap::from([(c, 1.0)]);
        if has_family {
            for j in family_members(fam, k) {
                labels.entry(j).or_insert(0.4);
            }
        }
        if rng.gen_bool(IDIOSYNCRATIC_PROB) {
            let j = rng.gen_range(0..k);
            labels.entry(j).or_insert(0.25);
        }
        QueryDraw {
            text: tokens.join(" "),
            labels,
        }
    }

    /// Draws a query whose text is not yet in `used`. Tiny vocabularies can
    /// run out of distinct texts; after `MAX_TRIES` a duplicate is accepted.
    fn draw_unique(&self, rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> QueryDraw {
        const MAX_TRIES: usize = 1000;
        let mut q = self.draw(rng);
        for _ in 1..MAX_TRIES {
            if !used.contains(&q.text) {
                break;
            }
            q = self.draw(rng);
        }
        used.insert(q.text.clone());
        q
    }

    fn total_pv(&self, rank: usize) -> u64 {
        let n = self.spec.n_queries as f64;
        let v = 2.0 * (n / rank as f64).powf(self.spec.zipf_exponent);
        v.round().max(1.0) as u64
    }
}

fn split_pv(total: u64, weights: &BTreeMap<usize, f64>, rng: &mut ChaCha8Rng) -> BTreeMap<usize, u64> {
    let labels: Vec<usize> = weights.keys().copied().collect();
    let w: Vec<f64> = weights.values().copied().collect();
    let dist = WeightedIndex::new(&w).expect("positive split weights");
    let mut pv: BTreeMap<usize, u64> = labels.iter().map(|&j| (j, 0)).collect();
    for _ in 0..total {
        *pv.get_mut(&labels[dist.sample(rng)]).unwrap() += 1;
    }
    pv
}

fn drop_tail_labels(
    record: &QueryRecord,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<usize, u64> {
    let keep = record.top_label().expect("records have labels");
    let mut pv = BTreeMap::new();
    for (&j, &v) in &record.pv {
        if !rng.gen_bool(dropout) {
            pv.insert(j, v);
        }
    }
    if pv.is_empty() {
        pv.insert(keep, record.pv[&keep]);
    }
    pv
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.k_categories;
    let n = spec.n_queries;
    let width = (k - 1).to_string().len().max(3);
    let label_space = LabelSpace::new((0..k).map(|j| format!("c{j:0width$}")).collect())?;

    let vocab = build_vocab(spec, &mut rng);
    let cat_weights: Vec<f64> = (1..=k).map(|r| (r as f64).powf(-CATEGORY_ZIPF)).collect();
    let gen = Generator {
        spec,
        vocab,
        primary: WeightedIndex::new(&cat_weights).expect("category weights"),
        length: WeightedIndex::new(LENGTH_WEIGHTS).expect("length weights"),
    };

    let mut ranks: Vec<usize> = (1..=n).collect();
    ranks.shuffle(&mut rng);

    let mut used = HashSet::new();
    let mut full_records = Vec::with_capacity(n);
    for (i, &rank) in ranks.iter().enumerate() {
        let q = gen.draw_unique(&mut rng, &mut used);
        let pv = split_pv(gen.total_pv(rank), &q.labels, &mut rng);
        full_records.push(QueryRecord::new(i as u64, q.text, pv));
    }

    let tail_cuts = BandCuts {
        low: spec.tail_quantile,
        high: 1.0,
    };
    let tail = assign_bands_by_mass(
        full_records.iter().map(|r| (r.total_pv() as f64, r.query_id)),
        &tail_cuts,
    );
    let observed_records: Vec<QueryRecord> = full_records
        .iter()
        .zip(&tail)
        .map(|(r, band)| {
            let pv = if *band == Band::Low && spec.tail_label_dropout > 0.0 {
                drop_tail_labels(r, spec.tail_label_dropout, &mut rng)
            } else {
                r.pv.clone()
            };
            QueryRecord::new(r.query_id, r.text.clone(), pv)
        })
        .collect();

    let heldout = |overlap: f64, rng: &mut ChaCha8Rng, used: &mut HashSet<String>| {
        let size = spec.heldout_size;
        let seen = ((overlap * size as f64).round() as usize).min(n);
        let mut picks: Vec<QueryRecord> = rand::seq::index::sample(rng, n, seen)
            .into_iter()
            .map(|i| full_records[i].clone())
            .collect();
        for _ in seen..size {
            let q = gen.draw_unique(rng, used);
            let rank = rng.gen_range(1..=n);
            let pv = split_pv(gen.total_pv(rank), &q.labels, rng);
            picks.push(QueryRecord::new(0, q.text, pv));
        }
        picks.shuffle(rng);
        for (i, r) in picks.iter_mut().enumerate() {
            r.query_id = i as u64;
        }
        picks
    };
    let t1 = heldout(T1_OVERLAP, &mut rng, &mut used);
    let t30 = heldout(T30_OVERLAP, &mut rng, &mut used);

    Ok(SyntheticCorpus {
        full: ClickDataset::new(label_space.clone(), full_records)?,
        observed: ClickDataset::new(label_space.clone(), observed_records)?,
        heldout_t1: ClickDataset::new(label_space.clone(), t1)?,
        heldout_t30: ClickDataset::new(label_space, t30)?,
    })
}

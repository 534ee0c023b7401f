use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{bce_with_logit, sigmoid, Target};
use super::store::{ParamStore, SharedParams};
use super::{StudentModel, TrainingSource};
use crate::error::{Error, Result};
use crate::featurizer::{featurize_filtered, tokenize, FeaturizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeMode {
    /// Every non-positive category is a negative term.
    FullSigmoid,
    /// `m` uniformly drawn negatives per positive.
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// Positive pair weight `ln(1 + pv)`, or 1 when `pv == 0`.
    LogPv,
    Uniform,
}

impl WeightMode {
    pub fn positive_weight(self, pv: f64) -> f64 {
        match self {
            WeightMode::LogPv if pv > 0.0 => pv.ln_1p(),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Initial rate, decayed linearly to zero over all updates.
    pub learning_rate: f64,
    pub negatives: NegativeMode,
    pub weight_mode: WeightMode,
    /// Forces a single worker; results are then bit-reproducible.
    pub deterministic: bool,
    pub seed: u64,
    pub threads: usize,
    pub featurizer: FeaturizerConfig,
}

impl Default for StudentTrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 5,
            learning_rate: 0.1,
            negatives: NegativeMode::FullSigmoid,
            weight_mode: WeightMode::LogPv,
            deterministic: true,
            seed: 0,
            threads: 1,
            featurizer: FeaturizerConfig::default(),
        }
    }
}

impl StudentTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.epochs < 1 {
            errs.push("student.epochs must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push("student.learning_rate must be > 0".to_string());
        }
        if self.dim < 1 {
            errs.push("student.dim must be >= 1".to_string());
        }
        if self.threads < 1 {
            errs.push("threads must be >= 1".to_string());
        }
        if let NegativeMode::Sampled(0) = self.negatives {
            errs.push("student.negatives sample count must be >= 1".to_string());
        }
        if let Err(Error::Config(e)) = self.featurizer.validate() {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads.max(1)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainStats {
    /// Mean weighted loss per example, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

struct Example {
    query_id: u64,
    bag: Vec<usize>,
    positives: Vec<(usize, f64)>,
}

fn build_targets(
    ex: &Example,
    k: usize,
    negatives: NegativeMode,
    rng: &mut impl Rng,
    out: &mut Vec<Target>,
) {
    out.clear();
    match negatives {
        NegativeMode::FullSigmoid => {
            let mut pos = ex.positives.iter().peekable();
            for label in 0..k {
                match pos.peek() {
                    Some(&&(j, w)) if j == label => {
                        out.push(Target { label, positive: true, weight: w });
                        pos.next();
                    }
                    _ => out.push(Target { label, positive: false, weight: 1.0 }),
                }
            }
        }
        NegativeMode::Sampled(m) => {
            out.extend(ex.positives.iter().map(|&(label, weight)| Target {
                label,
                positive: true,
                weight,
            }));
            if ex.positives.len() >= k {
                return;
            }
            for _ in 0..m * ex.positives.len() {
                let label = loop {
                    let j = rng.gen_range(0..k);
                    if ex.positives.binary_search_by_key(&j, |p| p.0).is_err() {
                        break j;
                    }
                };
                out.push(Target { label, positive: false, weight: 1.0 });
            }
        }
    }
}

/// Scratch buffers for one worker.
struct Scratch {
    hidden: Vec<f32>,
    grad_hidden: Vec<f32>,
    targets: Vec<Target>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            hidden: vec![0.0; dim],
            grad_hidden: vec![0.0; dim],
            targets: Vec::new(),
        }
    }
}

/// One SGD update on a single example; returns its weighted loss.
fn sgd_step<S: ParamStore + ?Sized>(
    embedding: &mut S,
    output: &mut S,
    dim: usize,
    bag: &[usize],
    lr: f32,
    scratch: &mut Scratch,
) -> f64 {
    let Scratch {
        hidden,
        grad_hidden,
        targets,
    } = scratch;
    hidden.fill(0.0);
    grad_hidden.fill(0.0);
    if !bag.is_empty() {
        for &r in bag {
            let base = r * dim;
            for (c, h) in hidden.iter_mut().enumerate() {
                *h += embedding.load(base + c);
            }
        }
        let inv = 1.0 / bag.len() as f32;
        hidden.iter_mut().for_each(|h| *h *= inv);
    }

    let mut loss = 0.0f64;
    for t in targets.iter() {
        let base = t.label * dim;
        let mut z = 0.0f32;
        for (c, &h) in hidden.iter().enumerate() {
            z += output.load(base + c) * h;
        }
        loss += t.weight * bce_with_logit(z as f64, t.positive);
        let y = if t.positive { 1.0 } else { 0.0 };
        let g = t.weight as f32 * (sigmoid(z) - y);
        for (c, (&h, gh)) in hidden.iter().zip(grad_hidden.iter_mut()).enumerate() {
            let u = output.load(base + c);
            *gh += g * u;
            output.store(base + c, u - lr * g * h);
        }
    }

    if !bag.is_empty() {
        let scale = lr / bag.len() as f32;
        for &r in bag {
            let base = r * dim;
            for (c, &gh) in grad_hidden.iter().enumerate() {
                embedding.store(base + c, embedding.load(base + c) - scale * gh);
            }
        }
    }
    loss
}

fn prepare_examples<D: TrainingSource + ?Sized>(
    ds: &D,
    cfg: &StudentTrainConfig,
) -> Vec<Example> {
    let fc = &cfg.featurizer;
    let rare: HashSet<String> = if fc.min_word_count > 1 {
        let mut counts: HashMap<String, u32> = HashMap::new();
        for i in 0..ds.len() {
            for tok in tokenize(ds.text(i), fc) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .filter(|(_, c)| *c < fc.min_word_count)
            .map(|(w, _)| w)
            .collect()
    } else {
        HashSet::new()
    };
    (0..ds.len())
        .map(|i| {
            let mut positives: Vec<(usize, f64)> = ds
                .labels(i)
                .into_iter()
                .map(|(j, pv)| (j, cfg.weight_mode.positive_weight(pv)))
                .collect();
            positives.sort_by_key(|p| p.0);
            Example {
                query_id: ds.query_id(i),
                bag: featurize_filtered(ds.text(i), fc, |t| !rare.contains(t)).indices,
                positives,
            }
        })
        .collect()
}

fn check_finite(values: &[f32], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite {what} parameters after epoch")))
    }
}

/// Trains the one-vs-all student with per-example SGD and linear learning
/// rate decay.
pub fn train_student<D: TrainingSource + ?Sized>(
    ds: &D,
    cfg: &StudentTrainConfig,
) -> Result<(StudentModel, TrainStats)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = ds.label_space().k();
    let dim = cfg.dim;
    let buckets = usize::try_from(cfg.featurizer.buckets)
        .map_err(|_| Error::Resource("bucket count exceeds address space".to_string()))?;
    let emb_len = buckets
        .checked_mul(dim)
        .ok_or_else(|| Error::Resource("embedding size overflows".to_string()))?;

    let examples = prepare_examples(ds, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / dim as f32;
    let mut embedding: Vec<f32> = Vec::new();
    embedding
        .try_reserve_exact(emb_len)
        .map_err(|e| Error::Resource(format!("cannot allocate embedding: {e}")))?;
    embedding.extend((0..emb_len).map(|_| rng.gen_range(-bound..bound)));
    let mut output = vec![0f32; k * dim];

    let total_steps = (examples.len() * cfg.epochs) as f64;
    let lr0 = cfg.learning_rate;
    let lr_at = |step: usize| (lr0 * (1.0 - step as f64 / total_steps)).max(0.0) as f32;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut stats = TrainStats::default();
    let workers = cfg.workers();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let base_step = epoch * examples.len();
        let epoch_loss = if workers == 1 {
            let mut scratch = Scratch::new(dim);
            let mut sum = 0.0;
            for (s, &i) in order.iter().enumerate() {
                let ex = &examples[i];
                build_targets(ex, k, cfg.negatives, &mut rng, &mut scratch.targets);
                let loss = sgd_step(
                    embedding.as_mut_slice(),
                    output.as_mut_slice(),
                    dim,
                    &ex.bag,
                    lr_at(base_step + s),
                    &mut scratch,
                );
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        record: ex.query_id,
                    });
                }
                sum += loss;
            }
            sum
        } else {
            train_epoch_shared(
                &examples,
                &order,
                &mut embedding,
                &mut output,
                dim,
                k,
                cfg,
                epoch,
                &|s| lr_at(base_step + s),
            )?
        };
        check_finite(&embedding, "embedding")?;
        check_finite(&output, "output")?;
        stats.epoch_losses.push(epoch_loss / examples.len() as f64);
    }

    let model = StudentModel::from_parts(
        dim,
        embedding,
        output,
        cfg.featurizer.clone(),
        ds.label_space().clone(),
    );
    Ok((model, stats))
}

#[allow(clippy::too_many_arguments)]
fn train_epoch_shared(
    examples: &[Example],
    order: &[usize],
    embedding: &mut [f32],
    output: &mut [f32],
    dim: usize,
    k: usize,
    cfg: &StudentTrainConfig,
    epoch: usize,
    lr_at: &(dyn Fn(usize) -> f32 + Sync),
) -> Result<f64> {
    let workers = cfg.workers();
    let emb = SharedParams::new(embedding);
    let out = SharedParams::new(output);
    let progress = AtomicUsize::new(0);
    let chunk = order.len().div_ceil(workers);
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = order
            .chunks(chunk)
            .enumerate()
            .map(|(w, part)| {
                let (mut emb, mut out) = (emb, out);
                let progress = &progress;
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        cfg.seed ^ ((epoch as u64) << 32) ^ (w as u64 + 1),
                    );
                    let mut scratch = Scratch::new(dim);
                    let mut sum = 0.0;
                    for &i in part {
                        let ex = &examples[i];
                        build_targets(ex, k, cfg.negatives, &mut rng, &mut scratch.targets);
                        let step = progress.fetch_add(1, Ordering::Relaxed);
                        let loss =
                            sgd_step(&mut emb, &mut out, dim, &ex.bag, lr_at(step), &mut scratch);
                        if !loss.is_finite() {
                            return Err(Error::NonFiniteLoss {
                                record: ex.query_id,
                            });
                        }
                        sum += loss;
                    }
                    Ok(sum)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("student worker panicked"))
            .collect()
    });
    results.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(positives: Vec<(usize, f64)>) -> Example {
        Example {
            query_id: 0,
            bag: vec![],
            positives,
        }
    }

    #[test]
    fn full_targets_cover_every_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::new();
        build_targets(&ex(vec![(1, 2.0), (3, 0.5)]), 5, NegativeMode::FullSigmoid, &mut rng, &mut out);
        assert_eq!(out.len(), 5);
        assert!(out[1].positive && out[1].weight == 2.0);
        assert!(out[3].positive && out[3].weight == 0.5);
        assert!(!out[0].positive && out[0].weight == 1.0);
    }

    #[test]
    fn sampled_targets_avoid_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        build_targets(&ex(vec![(0, 1.0), (2, 1.0)]), 4, NegativeMode::Sampled(3), &mut rng, &mut out);
        assert_eq!(out.len(), 2 + 6);
        assert!(out[2..].iter().all(|t| !t.positive && t.label != 0 && t.label != 2));
    }

    #[test]
    fn log_pv_weights() {
        assert_eq!(WeightMode::LogPv.positive_weight(0.0), 1.0);
        assert!((WeightMode::LogPv.positive_weight(10.0) - 11f64.ln()).abs() < 1e-15);
        assert_eq!(WeightMode::Uniform.positive_weight(10.0), 1.0);
    }
}

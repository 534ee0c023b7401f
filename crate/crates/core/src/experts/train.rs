use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{accumulate_record, ExpertGrads, ExpertLossMode, ExpertParams, TermWeights};
use super::ExpertModel;
use crate::error::{Error, Result};
use crate::featurizer::{featurize, FeaturizerConfig};
use crate::student::{TrainStats, TrainingSource};

pub const DEFAULT_EXPERT_BUCKETS: u64 = 1 << 18;

/// Records per gradient shard. Shards are summed in order, so results do
/// not depend on how many threads computed them.
const SHARD: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertTrainConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Scale the PV-weighted objectives by k so that each record's total
    /// term weight matches the unweighted objective.
    pub normalize_weighted: bool,
    pub optimizer: Optimizer,
    /// Decoupled weight decay; embedding rows decay only when touched.
    pub weight_decay: f64,
    pub featurizer: FeaturizerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    /// Adam with lazy (touched-rows-only) embedding moments.
    Adam,
}

impl Default for ExpertTrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            hidden: 256,
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.05,
            seed: 0,
            normalize_weighted: true,
            optimizer: Optimizer::Adam,
            weight_decay: 0.0,
            featurizer: FeaturizerConfig::default().with_buckets(DEFAULT_EXPERT_BUCKETS),
        }
    }
}

impl ExpertTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("expert.dim", self.embed_dim),
            ("expert.hidden", self.hidden),
            ("expert.epochs", self.epochs),
            ("expert.batch_size", self.batch_size),
        ] {
            if v < 1 {
                errs.push(format!("{name} must be >= 1"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push("expert.learning_rate must be > 0".to_string());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            errs.push("expert.weight_decay must be >= 0".to_string());
        }
        if let Err(Error::Config(e)) = self.featurizer.validate() {
            errs.extend(e.into_iter().map(|m| format!("expert {m}")));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn objective_scale(&self, mode: &ExpertLossMode, k: usize) -> f64 {
        use super::loss::ExpertKind;
        match mode.kind {
            ExpertKind::Uniform => 1.0,
            _ if self.normalize_weighted => k as f64,
            _ => 1.0,
        }
    }
}

pub(crate) struct PreparedRecord {
    pub query_id: u64,
    pub bag: Vec<usize>,
    pub weights: TermWeights,
}

fn shard_grads(
    params: &ExpertParams<f32>,
    shard: &[&PreparedRecord],
    scale: f32,
) -> Result<(f64, ExpertGrads<f32>)> {
    let mut grads = ExpertGrads::zeros(params);
    let mut loss = 0.0f64;
    for rec in shard {
        let l = accumulate_record(params, &rec.bag, &rec.weights, scale, &mut grads);
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss {
                record: rec.query_id,
            });
        }
        loss += f64::from(l);
    }
    Ok((loss, grads))
}

/// Summed loss and the gradient of `scale * Σ loss` over `batch`.
pub(crate) fn batch_grads(
    params: &ExpertParams<f32>,
    batch: &[&PreparedRecord],
    scale: f32,
) -> Result<(f64, ExpertGrads<f32>)> {
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, ExpertGrads<f32>)>> = {
        use rayon::prelude::*;
        batch
            .par_chunks(SHARD)
            .map(|s| shard_grads(params, s, scale))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, ExpertGrads<f32>)>> = batch
        .chunks(SHARD)
        .map(|s| shard_grads(params, s, scale))
        .collect();

    let mut total = ExpertGrads::zeros(params);
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.merge(g);
    }
    Ok((loss, total))
}

/// Batch objective for arbitrary float type: mean record loss and its
/// gradient. Used to expose the objective directly (e.g. gradient checks).
pub fn batch_loss_grad<F: num_traits::Float>(
    params: &ExpertParams<F>,
    batch: &[(Vec<usize>, TermWeights)],
) -> (F, super::loss::ExpertGrads<F>) {
    let mut grads = ExpertGrads::zeros(params);
    let scale = F::one() / F::from(batch.len().max(1)).unwrap();
    let mut loss = F::zero();
    for (bag, w) in batch {
        loss = loss + accumulate_record(params, bag, w, scale, &mut grads) * scale;
    }
    (loss, grads)
}

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const ADAM_EPS: f32 = 1e-8;

#[derive(Default)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f32,
    decay: f32,
    step: i32,
    dense: [Moments; 4],
    embedding: Moments,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f32, weight_decay: f32, p: &ExpertParams<f32>) -> Result<Self> {
        let dense = match kind {
            Optimizer::Adam => [
                Moments::new(p.w1.len()),
                Moments::new(p.b1.len()),
                Moments::new(p.w2.len()),
                Moments::new(p.b2.len()),
            ],
            Optimizer::Sgd => Default::default(),
        };
        let embedding = match kind {
            Optimizer::Adam => {
                let n = p.embedding.len();
                let mut m = Vec::new();
                let mut v = Vec::new();
                m.try_reserve_exact(n)
                    .and_then(|_| v.try_reserve_exact(n))
                    .map_err(|e| Error::Resource(format!("cannot allocate Adam moments: {e}")))?;
                m.resize(n, 0.0);
                v.resize(n, 0.0);
                Moments { m, v }
            }
            Optimizer::Sgd => Moments::default(),
        };
        Ok(Self {
            kind,
            lr,
            decay: 1.0 - lr * weight_decay,
            step: 0,
            dense,
            embedding,
        })
    }

    fn apply(&mut self, params: &mut ExpertParams<f32>, grads: &ExpertGrads<f32>) {
        self.step += 1;
        let (lr, decay) = (self.lr, self.decay);
        let de = params.embed_dim;
        // (parameters, gradient, decayed?)
        let dense = [
            (&mut params.w1, &grads.w1, true),
            (&mut params.b1, &grads.b1, false),
            (&mut params.w2, &grads.w2, true),
            (&mut params.b2, &grads.b2, false),
        ];
        match self.kind {
            Optimizer::Sgd => {
                for (p, g, decayed) in dense {
                    let d = if decayed { decay } else { 1.0 };
                    p.iter_mut().zip(g).for_each(|(p, &g)| *p = *p * d - lr * g);
                }
                for (bag, g) in &grads.embedding {
                    for &r in bag {
                        for (p, &g) in params.embedding[r * de..(r + 1) * de].iter_mut().zip(g) {
                            *p = *p * decay - lr * g;
                        }
                    }
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                let step_size = lr * c2.sqrt() / c1;
                let adam = |p: &mut f32, g: f32, m: &mut f32, v: &mut f32, d: f32| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p = *p * d - step_size * *m / (v.sqrt() + ADAM_EPS);
                };
                for ((p, g, decayed), mo) in dense.into_iter().zip(&mut self.dense) {
                    let d = if decayed { decay } else { 1.0 };
                    for i in 0..p.len() {
                        adam(&mut p[i], g[i], &mut mo.m[i], &mut mo.v[i], d);
                    }
                }
                // Sum each touched row's gradient, then update it once.
                let mut sums: std::collections::BTreeMap<usize, Vec<f32>> = Default::default();
                for (bag, g) in &grads.embedding {
                    for &r in bag {
                        let acc = sums.entry(r).or_insert_with(|| vec![0.0; de]);
                        acc.iter_mut().zip(g).for_each(|(a, &g)| *a += g);
                    }
                }
                for (r, g) in sums {
                    let base = r * de;
                    for (c, &g) in g.iter().enumerate() {
                        let i = base + c;
                        adam(
                            &mut params.embedding[i],
                            g,
                            &mut self.embedding.m[i],
                            &mut self.embedding.v[i],
                            decay,
                        );
                    }
                }
            }
        }
    }
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f32> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

pub(crate) fn init_params(
    cfg: &ExpertTrainConfig,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ExpertParams<f32>> {
    let buckets = usize::try_from(cfg.featurizer.buckets)
        .map_err(|_| Error::Resource("bucket count exceeds address space".to_string()))?;
    let (de, h) = (cfg.embed_dim, cfg.hidden);
    let n = buckets
        .checked_mul(de)
        .ok_or_else(|| Error::Resource("expert embedding size overflows".to_string()))?;
    let mut embedding = Vec::new();
    embedding
        .try_reserve_exact(n)
        .map_err(|e| Error::Resource(format!("cannot allocate expert embedding: {e}")))?;
    embedding.extend((0..n).map(|_| rng.gen_range(-0.1f32..0.1)));
    Ok(ExpertParams {
        buckets,
        embed_dim: de,
        hidden: h,
        k,
        embedding,
        w1: xavier(rng, de, h, h * de),
        b1: vec![0.0; h],
        w2: xavier(rng, h, k, k * h),
        b2: vec![0.0; k],
    })
}

/// Mini-batch gradient descent on the mode's weighted BCE.
pub fn train_expert<D: TrainingSource + ?Sized>(
    ds: &D,
    mode: ExpertLossMode,
    cfg: &ExpertTrainConfig,
) -> Result<(ExpertModel, TrainStats)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = ds.label_space().k();
    let records = (0..ds.len())
        .map(|i| {
            Ok(PreparedRecord {
                query_id: ds.query_id(i),
                bag: featurize(ds.text(i), &cfg.featurizer).indices,
                weights: mode.term_weights(&ds.labels(i), k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(cfg, k, &mut rng)?;
    let objective_scale = cfg.objective_scale(&mode, k);
    let mut opt = OptimizerState::new(
        cfg.optimizer,
        cfg.learning_rate as f32,
        cfg.weight_decay as f32,
        &params,
    )?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut stats = TrainStats::default();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedRecord> = chunk.iter().map(|&i| &records[i]).collect();
            let scale = (objective_scale / batch.len() as f64) as f32;
            let (loss, grads) = batch_grads(&params, &batch, scale)?;
            epoch_loss += loss;
            opt.apply(&mut params, &grads);
        }
        if !params.all_finite() {
            return Err(Error::invalid("non-finite expert parameters after epoch"));
        }
        stats.epoch_losses.push(epoch_loss / records.len() as f64);
    }

    let model = ExpertModel {
        params,
        mode,
        featurizer: cfg.featurizer.clone(),
        label_space: ds.label_space().clone(),
    };
    Ok((model, stats))
}

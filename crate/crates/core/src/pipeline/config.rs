//! Line-oriented `key = value` pipeline configuration with dotted section
//! keys. Unknown keys are rejected; all problems are reported together.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{BandCuts, SyntheticSpec};
use crate::distill::{AllocationConfig, Supplement};
use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::experts::{ExpertKind, ExpertTrainConfig, NegativeScheme, Optimizer};
use crate::featurizer::FeaturizerConfig;
use crate::student::{NegativeMode, StudentTrainConfig, WeightMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Student on the historical data only.
    Baseline,
    /// One (uniform) expert feeds the augmentation.
    DdmeSingle,
    /// All three experts feed the augmentation.
    DdmeFull,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::DdmeSingle, Mode::DdmeFull];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::DdmeSingle => "ddme_single",
            Mode::DdmeFull => "ddme_full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn expert_kinds(self) -> &'static [ExpertKind] {
        match self {
            Mode::Baseline => &[],
            Mode::DdmeSingle => &[ExpertKind::Uniform],
            Mode::DdmeFull => &[ExpertKind::Forward, ExpertKind::Uniform, ExpertKind::Backward],
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generate a corpus from `synthetic.*`.
    Synthetic,
    Files {
        train: PathBuf,
        labels: Option<PathBuf>,
        eval: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Option<Mode>,
    pub seed: u64,
    pub deterministic: bool,
    pub data: DataSource,
    pub synthetic: SyntheticSpec,
    /// Student featurizer; experts share it except for the bucket count.
    pub featurizer: FeaturizerConfig,
    pub student: StudentTrainConfig,
    pub expert: ExpertTrainConfig,
    pub expert_scheme: NegativeScheme,
    pub tau: f64,
    pub m_cap: usize,
    pub allocation: AllocationConfig,
    pub bands: BandCuts,
    pub eval: EvalOptions,
    /// Root seeds of the toy and ablation experiments.
    pub seeds: Vec<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: 7,
            deterministic: true,
            data: DataSource::Synthetic,
            synthetic: SyntheticSpec::default(),
            featurizer: FeaturizerConfig::default(),
            student: StudentTrainConfig::default(),
            expert: ExpertTrainConfig::default(),
            expert_scheme: NegativeScheme::default(),
            tau: 0.5,
            m_cap: 5,
            allocation: AllocationConfig::default(),
            bands: BandCuts::default(),
            eval: EvalOptions::default(),
            seeds: vec![1, 2, 3],
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected a number, got {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_num)
        .collect()
}

fn fmt_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_scheme(s: NegativeScheme) -> String {
    match s {
        NegativeScheme::Literal => "literal".to_string(),
        NegativeScheme::Smoothed(a) => format!("smoothed:{a}"),
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "mode",
    "seed",
    "deterministic",
    "data.train",
    "data.labels",
    "data.eval",
    "synthetic.n_queries",
    "synthetic.k_categories",
    "synthetic.zipf_exponent",
    "synthetic.vocab_size",
    "synthetic.tail_label_dropout",
    "synthetic.tail_quantile",
    "synthetic.heldout_size",
    "featurizer.buckets",
    "featurizer.word_ngram_max",
    "featurizer.char_ngram_min",
    "featurizer.char_ngram_max",
    "featurizer.min_word_count",
    "featurizer.lowercase",
    "student.dim",
    "student.epochs",
    "student.learning_rate",
    "student.negatives",
    "student.weight_mode",
    "student.threads",
    "expert.dim",
    "expert.hidden",
    "expert.epochs",
    "expert.batch_size",
    "expert.learning_rate",
    "expert.optimizer",
    "expert.weight_decay",
    "expert.buckets",
    "expert.negative_scheme",
    "expert.normalize_weighted",
    "distill.tau",
    "distill.m_cap",
    "distill.m",
    "distill.m_fraction",
    "distill.floor_pv",
    "bands.low",
    "bands.high",
    "eval.topk",
    "eval.threshold",
    "experiment.seeds",
];

impl PipelineConfig {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(src: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut errs = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errs.push(format!("line {}: expected `key = value`", i + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                errs.push(format!("line {}: duplicate key `{key}`", i + 1));
                continue;
            }
            if let Err(e) = cfg.set(key, value, base_dir) {
                errs.push(format!("line {}: {e}", i + 1));
            }
        }
        if let Err(Error::Config(e)) = cfg.check() {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&src, base)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str, base_dir: &Path) -> std::result::Result<(), String> {
        let path = |v: &str| base_dir.join(v);
        let files = |data: &mut DataSource| -> (PathBuf, Option<PathBuf>, Vec<PathBuf>) {
            match std::mem::replace(data, DataSource::Synthetic) {
                DataSource::Files { train, labels, eval } => (train, labels, eval),
                DataSource::Synthetic => (PathBuf::new(), None, Vec::new()),
            }
        };
        let (s, f, st, ex) = (
            &mut self.synthetic,
            &mut self.featurizer,
            &mut self.student,
            &mut self.expert,
        );
        match key {
            "mode" => {
                self.mode = Some(Mode::parse(v).ok_or_else(|| {
                    format!("mode must be one of baseline, ddme_single, ddme_full; got {v:?}")
                })?)
            }
            "seed" => self.seed = parse_num(v)?,
            "deterministic" => self.deterministic = parse_bool(v)?,
            "data.train" | "data.labels" | "data.eval" => {
                let (mut train, mut labels, mut eval) = files(&mut self.data);
                match key {
                    "data.train" => train = path(v),
                    "data.labels" => labels = Some(path(v)),
                    _ => eval = v.split(',').map(str::trim).filter(|p| !p.is_empty()).map(path).collect(),
                }
                self.data = DataSource::Files { train, labels, eval };
            }
            "synthetic.n_queries" => s.n_queries = parse_num(v)?,
            "synthetic.k_categories" => s.k_categories = parse_num(v)?,
            "synthetic.zipf_exponent" => s.zipf_exponent = parse_num(v)?,
            "synthetic.vocab_size" => s.vocab_size = parse_num(v)?,
            "synthetic.tail_label_dropout" => s.tail_label_dropout = parse_num(v)?,
            "synthetic.tail_quantile" => s.tail_quantile = parse_num(v)?,
            "synthetic.heldout_size" => s.heldout_size = parse_num(v)?,
            "featurizer.buckets" => f.buckets = parse_num(v)?,
            "featurizer.word_ngram_max" => f.word_ngram_max = parse_num(v)?,
            "featurizer.char_ngram_min" => f.char_ngram_min = parse_num(v)?,
            "featurizer.char_ngram_max" => f.char_ngram_max = parse_num(v)?,
            "featurizer.min_word_count" => f.min_word_count = parse_num(v)?,
            "featurizer.lowercase" => f.lowercase = parse_bool(v)?,
            "student.dim" => st.dim = parse_num(v)?,
            "student.epochs" => st.epochs = parse_num(v)?,
            "student.learning_rate" => st.learning_rate = parse_num(v)?,
            "student.negatives" => {
                st.negatives = match v {
                    "full" => NegativeMode::FullSigmoid,
                    _ => match v.strip_prefix("sampled:") {
                        Some(m) => NegativeMode::Sampled(parse_num(m)?),
                        None => return Err(format!("student.negatives must be full or sampled:<m>, got {v:?}")),
                    },
                }
            }
            "student.weight_mode" => {
                st.weight_mode = match v {
                    "log_pv" => WeightMode::LogPv,
                    "uniform" => WeightMode::Uniform,
                    _ => return Err(format!("student.weight_mode must be log_pv or uniform, got {v:?}")),
                }
            }
            "student.threads" => st.threads = parse_num(v)?,
            "expert.dim" => ex.embed_dim = parse_num(v)?,
            "expert.hidden" => ex.hidden = parse_num(v)?,
            "expert.epochs" => ex.epochs = parse_num(v)?,
            "expert.batch_size" => ex.batch_size = parse_num(v)?,
            "expert.learning_rate" => ex.learning_rate = parse_num(v)?,
            "expert.optimizer" => {
                ex.optimizer = match v {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(format!("expert.optimizer must be adam or sgd, got {v:?}")),
                }
            }
            "expert.weight_decay" => ex.weight_decay = parse_num(v)?,
            "expert.buckets" => ex.featurizer.buckets = parse_num(v)?,
            "expert.negative_scheme" => {
                self.expert_scheme = match v {
                    "literal" => NegativeScheme::Literal,
                    _ => match v.strip_prefix("smoothed:") {
                        Some(a) => NegativeScheme::Smoothed(parse_num(a)?),
                        None => {
                            return Err(format!(
                                "expert.negative_scheme must be literal or smoothed:<alpha>, got {v:?}"
                            ))
                        }
                    },
                }
            }
            "expert.normalize_weighted" => ex.normalize_weighted = parse_bool(v)?,
            "distill.tau" => self.tau = parse_num(v)?,
            "distill.m_cap" => self.m_cap = parse_num(v)?,
            "distill.m" => self.allocation.supplement = Supplement::Absolute(parse_num(v)?),
            "distill.m_fraction" => self.allocation.supplement = Supplement::Fraction(parse_num(v)?),
            "distill.floor_pv" => self.allocation.floor_pv = parse_num(v)?,
            "bands.low" => self.bands.low = parse_num(v)?,
            "bands.high" => self.bands.high = parse_num(v)?,
            "eval.topk" => self.eval.topk = parse_num(v)?,
            "eval.threshold" => self.eval.threshold = parse_num(v)?,
            "experiment.seeds" => self.seeds = parse_list(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Range checks over every field; all violations at once.
    pub fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut take = |r: Result<()>| match r {
            Ok(()) => {}
            Err(Error::Config(e)) => errs.extend(e),
            Err(e) => errs.push(e.to_string()),
        };
        take(self.synthetic.validate());
        take(self.featurizer.validate());
        take(self.student.validate());
        take(self.expert.validate());
        take(self.bands.validate());
        if !(self.tau > 0.0 && self.tau < 1.0) {
            errs.push(format!("distill.tau must be in (0, 1), got {}", self.tau));
        }
        if self.m_cap < 1 {
            errs.push("distill.m_cap must be >= 1".to_string());
        }
        match self.allocation.supplement {
            Supplement::Absolute(m) if !(m > 0.0 && m.is_finite()) => {
                errs.push(format!("distill.m: M must be positive, got {m}"))
            }
            Supplement::Fraction(x) if !(x > 0.0 && x.is_finite()) => {
                errs.push(format!("distill.m_fraction: M must be positive, got {x}"))
            }
            _ => {}
        }
        if !(self.allocation.floor_pv >= 0.0 && self.allocation.floor_pv.is_finite()) {
            errs.push("distill.floor_pv must be >= 0".to_string());
        }
        if let NegativeScheme::Smoothed(a) = self.expert_scheme {
            if !(a > 0.0 && a.is_finite()) {
                errs.push(format!("expert.negative_scheme alpha must be > 0, got {a}"));
            }
        }
        if self.eval.topk < 1 {
            errs.push("eval.topk must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            errs.push("eval.threshold must be in [0, 1]".to_string());
        }
        if self.seeds.is_empty() {
            errs.push("experiment.seeds must list at least one seed".to_string());
        }
        if let DataSource::Files { train, labels, eval } = &self.data {
            if train.as_os_str().is_empty() {
                errs.push("missing required key data.train (data.* keys were given)".to_string());
            } else if !train.is_file() {
                errs.push(format!("data.train: {} does not exist", train.display()));
            }
            for p in labels.iter().chain(eval) {
                if !p.is_file() {
                    errs.push(format!("{} does not exist", p.display()));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// `(key, value)` for every key, including defaults.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (s, f, st, ex) = (&self.synthetic, &self.featurizer, &self.student, &self.expert);
        let (train, labels, eval) = match &self.data {
            DataSource::Synthetic => (String::new(), String::new(), String::new()),
            DataSource::Files { train, labels, eval } => (
                train.display().to_string(),
                labels.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                eval.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
            ),
        };
        let (m, m_fraction) = match self.allocation.supplement {
            Supplement::Absolute(m) => (m.to_string(), String::new()),
            Supplement::Fraction(x) => (String::new(), x.to_string()),
        };
        KEYS.iter()
            .map(|&key| {
                let v = match key {
                    "mode" => self.mode.map(|m| m.to_string()).unwrap_or_default(),
                    "seed" => self.seed.to_string(),
                    "deterministic" => self.deterministic.to_string(),
                    "data.train" => train.clone(),
                    "data.labels" => labels.clone(),
                    "data.eval" => eval.clone(),
                    "synthetic.n_queries" => s.n_queries.to_string(),
                    "synthetic.k_categories" => s.k_categories.to_string(),
                    "synthetic.zipf_exponent" => s.zipf_exponent.to_string(),
                    "synthetic.vocab_size" => s.vocab_size.to_string(),
                    "synthetic.tail_label_dropout" => s.tail_label_dropout.to_string(),
                    "synthetic.tail_quantile" => s.tail_quantile.to_string(),
                    "synthetic.heldout_size" => s.heldout_size.to_string(),
                    "featurizer.buckets" => f.buckets.to_string(),
                    "featurizer.word_ngram_max" => f.word_ngram_max.to_string(),
                    "featurizer.char_ngram_min" => f.char_ngram_min.to_string(),
                    "featurizer.char_ngram_max" => f.char_ngram_max.to_string(),
                    "featurizer.min_word_count" => f.min_word_count.to_string(),
                    "featurizer.lowercase" => f.lowercase.to_string(),
                    "student.dim" => st.dim.to_string(),
                    "student.epochs" => st.epochs.to_string(),
                    "student.learning_rate" => st.learning_rate.to_string(),
                    "student.negatives" => match st.negatives {
                        NegativeMode::FullSigmoid => "full".to_string(),
                        NegativeMode::Sampled(m) => format!("sampled:{m}"),
                    },
                    "student.weight_mode" => match st.weight_mode {
                        WeightMode::LogPv => "log_pv".to_string(),
                        WeightMode::Uniform => "uniform".to_string(),
                    },
                    "student.threads" => st.threads.to_string(),
                    "expert.dim" => ex.embed_dim.to_string(),
                    "expert.hidden" => ex.hidden.to_string(),
                    "expert.epochs" => ex.epochs.to_string(),
                    "expert.batch_size" => ex.batch_size.to_string(),
                    "expert.learning_rate" => ex.learning_rate.to_string(),
                    "expert.optimizer" => match ex.optimizer {
                        Optimizer::Adam => "adam".to_string(),
                        Optimizer::Sgd => "sgd".to_string(),
                    },
                    "expert.weight_decay" => ex.weight_decay.to_string(),
                    "expert.buckets" => ex.featurizer.buckets.to_string(),
                    "expert.negative_scheme" => fmt_scheme(self.expert_scheme),
                    "expert.normalize_weighted" => ex.normalize_weighted.to_string(),
                    "distill.tau" => self.tau.to_string(),
                    "distill.m_cap" => self.m_cap.to_string(),
                    "distill.m" => m.clone(),
                    "distill.m_fraction" => m_fraction.clone(),
                    "distill.floor_pv" => self.allocation.floor_pv.to_string(),
                    "bands.low" => self.bands.low.to_string(),
                    "bands.high" => self.bands.high.to_string(),
                    "eval.topk" => self.eval.topk.to_string(),
                    "eval.threshold" => self.eval.threshold.to_string(),
                    "experiment.seeds" => fmt_list(&self.seeds),
                    _ => unreachable!("every key has an echo"),
                };
                (key, v)
            })
            .collect()
    }

    /// Config text that parses back to this config (absolute paths).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            if !v.is_empty() {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn student_config(&self, seed: u64) -> StudentTrainConfig {
        StudentTrainConfig {
            seed,
            deterministic: self.deterministic,
            featurizer: self.featurizer.clone(),
            ..self.student.clone()
        }
    }

    pub fn expert_config(&self, seed: u64) -> ExpertTrainConfig {
        let mut featurizer = self.featurizer.clone();
        featurizer.buckets = self.expert.featurizer.buckets;
        ExpertTrainConfig {
            seed,
            featurizer,
            ..self.expert.clone()
        }
    }

    pub fn synthetic_spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            ..self.synthetic.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<PipelineConfig> {
        PipelineConfig::parse(src, Path::new("."))
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn negative_m_is_rejected() {
        let err = parse("distill.m = -1\n").unwrap_err();
        let Error::Config(msgs) = err else { panic!() };
        assert!(msgs.iter().any(|m| m.contains("M must be positive")), "{msgs:?}");
    }

    #[test]
    fn unknown_key_is_named() {
        let Error::Config(msgs) = parse("foo = 1\n").unwrap_err() else { panic!() };
        assert!(msgs[0].contains("`foo`"));
    }

    #[test]
    fn reports_every_problem() {
        let Error::Config(msgs) = parse("foo = 1\nstudent.dim = x\ndistill.tau = 2\n").unwrap_err() else {
            panic!()
        };
        assert_eq!(msgs.len(), 3, "{msgs:?}");
    }

    #[test]
    fn render_round_trips() {
        let cfg = parse(
            "mode = ddme_single\nstudent.negatives = sampled:5\nexpert.negative_scheme = smoothed:0.5\n\
             distill.m = 250\nexperiment.seeds = 4,5\nfeaturizer.lowercase = false\n",
        )
        .unwrap();
        assert_eq!(parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn data_keys_require_train() {
        let Error::Config(msgs) = parse("data.eval = missing.tsv\n").unwrap_err() else { panic!() };
        assert!(msgs.iter().any(|m| m.contains("data.train")));
    }

    #[test]
    fn every_key_is_settable() {
        for key in KEYS {
            let mut cfg = PipelineConfig::default();
            let err = cfg.set(key, "\u{0}", Path::new("."));
            assert!(!matches!(err, Err(ref e) if e.starts_with("unknown key")), "{key}");
        }
    }
}

//! FastText-style student: averaged hashed n-gram embeddings feeding a
//! one-vs-all sigmoid layer.

mod format;
pub mod kernel;
mod store;
mod train;

use crate::corpus::{ClickDataset, LabelSpace};
use crate::featurizer::{featurize, FeaturizerConfig};

pub use format::{load_model, read_model, save_model, write_model, STUDENT_MAGIC, STUDENT_VERSION};
pub use train::{
    train_student, NegativeMode, StudentTrainConfig, TrainStats, WeightMode,
};

/// A scored category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub score: f32,
}

/// Keeps scores `>= threshold`, sorted by score descending then label
/// ascending, truncated to `topk`.
pub fn rank_scores(scores: &[f32], topk: usize, threshold: f32) -> Vec<Prediction> {
    let mut preds: Vec<Prediction> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(label, &score)| Prediction { label, score })
        .collect();
    preds.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.label.cmp(&b.label)));
    preds.truncate(topk);
    preds
}

/// Anything the student can be trained on: texts with weighted label sets.
pub trait TrainingSource {
    fn label_space(&self) -> &LabelSpace;
    fn len(&self) -> usize;
    fn query_id(&self, i: usize) -> u64;
    fn text(&self, i: usize) -> &str;
    /// `(category, pv)` pairs of example `i`.
    fn labels(&self, i: usize) -> Vec<(usize, f64)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TrainingSource for ClickDataset {
    fn label_space(&self) -> &LabelSpace {
        ClickDataset::label_space(self)
    }

    fn len(&self) -> usize {
        self.n()
    }

    fn query_id(&self, i: usize) -> u64 {
        self.records()[i].query_id
    }

    fn text(&self, i: usize) -> &str {
        &self.records()[i].text
    }

    fn labels(&self, i: usize) -> Vec<(usize, f64)> {
        self.records()[i]
            .pv
            .iter()
            .map(|(&j, &v)| (j, v as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    dim: usize,
    embedding: Vec<f32>,
    output: Vec<f32>,
    featurizer: FeaturizerConfig,
    label_space: LabelSpace,
}

impl StudentModel {
    /// Builds a model from raw parameters; panics on inconsistent sizes.
    pub fn from_parts(
        dim: usize,
        embedding: Vec<f32>,
        output: Vec<f32>,
        featurizer: FeaturizerConfig,
        label_space: LabelSpace,
    ) -> Self {
        assert_eq!(embedding.len(), featurizer.buckets as usize * dim);
        assert_eq!(output.len(), label_space.k() * dim);
        Self {
            dim,
            embedding,
            output,
            featurizer,
            label_space,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.label_space.k()
    }

    pub fn buckets(&self) -> u64 {
        self.featurizer.buckets
    }

    pub fn embedding(&self) -> &[f32] {
        &self.embedding
    }

    pub fn output(&self) -> &[f32] {
        &self.output
    }

    pub fn featurizer(&self) -> &FeaturizerConfig {
        &self.featurizer
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.iter().chain(&self.output).all(|v| v.is_finite())
    }

    /// Sigmoid score of every category.
    pub fn scores(&self, text: &str) -> Vec<f32> {
        let bag = featurize(text, &self.featurizer);
        let mut hidden = vec![0f32; self.dim];
        kernel::mean_embedding(&self.embedding, self.dim, &bag.indices, &mut hidden);
        self.output
            .chunks_exact(self.dim)
            .map(|row| kernel::sigmoid(kernel::dot(row, &hidden)))
            .collect()
    }

    pub fn predict_topk(&self, text: &str, topk: usize, threshold: f32) -> Vec<Prediction> {
        rank_scores(&self.scores(text), topk, threshold)
    }

    pub fn predict_batch<S: AsRef<str>>(
        &self,
        texts: &[S],
        topk: usize,
        threshold: f32,
    ) -> Vec<Vec<Prediction>> {
        texts
            .iter()
            .map(|t| self.predict_topk(t.as_ref(), topk, threshold))
            .collect()
    }

    #[cfg(feature = "parallel")]
    pub fn par_predict_batch<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
        topk: usize,
        threshold: f32,
    ) -> Vec<Vec<Prediction>> {
        use rayon::prelude::*;
        texts
            .par_iter()
            .map(|t| self.predict_topk(t.as_ref(), topk, threshold))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_order_and_ties() {
        let preds = rank_scores(&[0.2, 0.9, 0.2, 0.5], 10, 0.0);
        let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![1, 3, 0, 2]);
        assert_eq!(rank_scores(&[0.2, 0.9, 0.2], 2, 0.0).len(), 2);
        assert!(rank_scores(&[0.2, 0.9999], 5, 1.0).is_empty());
        assert_eq!(rank_scores(&[1.0, 0.3], 5, 1.0).len(), 1);
    }

    #[test]
    fn zero_model_scores_half() {
        let ls = LabelSpace::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let fc = FeaturizerConfig::default().with_buckets(64);
        let m = StudentModel::from_parts(4, vec![0.0; 256], vec![0.0; 12], fc, ls);
        assert_eq!(m.scores("anything"), vec![0.5; 3]);
        assert_eq!(m.predict_topk("", 5, 0.0).len(), 3);
    }
}

//! Distribution-diverse teacher networks.
//!
//! Each expert is a hashed-embedding encoder with one tanh hidden layer and
//! k sigmoid outputs. The three experts differ only in how their BCE terms
//! are weighted by the query's PV row (see [`ExpertKind`]).

mod format;
mod inference;
pub mod loss;
mod train;
mod weights;

use crate::corpus::LabelSpace;
use crate::featurizer::{featurize, FeaturizerConfig};
use crate::student::{rank_scores, Prediction};

pub use format::{load_expert, read_expert, save_expert, write_expert, EXPERT_MAGIC, EXPERT_VERSION};
pub use inference::{load_inference, parse_inference, save_inference, write_inference, InferenceLine};
pub use loss::{ExpertKind, ExpertLossMode, ExpertParams, NegativeScheme, TermWeights, PROB_EPS};
pub use train::{batch_loss_grad, train_expert, ExpertTrainConfig, Optimizer, DEFAULT_EXPERT_BUCKETS};
pub use weights::{compute_pv_weights, forward_weights, PvWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    pub params: ExpertParams<f32>,
    pub mode: ExpertLossMode,
    pub featurizer: FeaturizerConfig,
    pub label_space: LabelSpace,
}

impl ExpertModel {
    /// All-zero parameters: every score is exactly 0.5.
    pub fn zeros(
        mode: ExpertLossMode,
        featurizer: FeaturizerConfig,
        label_space: LabelSpace,
        embed_dim: usize,
        hidden: usize,
    ) -> Self {
        let params = ExpertParams::zeros(
            featurizer.buckets as usize,
            embed_dim,
            hidden,
            label_space.k(),
        );
        Self {
            params,
            mode,
            featurizer,
            label_space,
        }
    }

    pub fn kind(&self) -> ExpertKind {
        self.mode.kind
    }

    pub fn scores(&self, text: &str) -> Vec<f32> {
        let bag = featurize(text, &self.featurizer);
        let (_, _, z) = self.params.forward(&bag.indices);
        z.into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect()
    }

    /// Categories scoring at least `tau`, best `m_cap` kept.
    pub fn predict(&self, text: &str, tau: f32, m_cap: usize) -> Vec<Prediction> {
        rank_scores(&self.scores(text), m_cap, tau)
    }

    /// Squared L2 distance between parameter vectors of equal shape.
    pub fn param_distance_sq(&self, other: &ExpertModel) -> f64 {
        let a = &self.params;
        let b = &other.params;
        [
            (&a.embedding, &b.embedding),
            (&a.w1, &b.w1),
            (&a.b1, &b.b1),
            (&a.w2, &b.w2),
            (&a.b2, &b.b2),
        ]
        .iter()
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum()
    }
}

/// Free-function form of [`ExpertModel::predict`].
pub fn expert_predict(model: &ExpertModel, text: &str, tau: f32, m_cap: usize) -> Vec<Prediction> {
    model.predict(text, tau, m_cap)
}

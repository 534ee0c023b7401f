//! Forward/backward pass of the expert network and the three weighted BCE
//! objectives. Generic over the float type for f64 gradient checks.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::weights::{compute_pv_weights, forward_weights};
use crate::error::Result;

pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertKind {
    /// PV-reweighted BCE; emphasizes high-frequency queries.
    Forward,
    /// Plain BCE.
    Uniform,
    /// Reverse-PV-reweighted BCE; emphasizes the tail.
    Backward,
}

impl ExpertKind {
    pub const ALL: [ExpertKind; 3] = [ExpertKind::Forward, ExpertKind::Uniform, ExpertKind::Backward];

    pub fn code(self) -> u8 {
        match self {
            ExpertKind::Forward => 1,
            ExpertKind::Uniform => 2,
            ExpertKind::Backward => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ExpertKind::Forward),
            2 => Some(ExpertKind::Uniform),
            3 => Some(ExpertKind::Backward),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExpertKind::Forward => "forward",
            ExpertKind::Uniform => "uniform",
            ExpertKind::Backward => "backward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How forward-mode weights treat negative terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NegativeScheme {
    /// `w_ij` on both terms, exactly as the PV-reweighted loss is written.
    /// Unclicked categories then carry zero weight.
    Literal,
    /// `w_ij` on positive terms, `alpha / k` on negative terms.
    Smoothed(f64),
}

impl Default for NegativeScheme {
    fn default() -> Self {
        NegativeScheme::Smoothed(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertLossMode {
    pub kind: ExpertKind,
    pub negative_scheme: NegativeScheme,
}

impl ExpertLossMode {
    pub fn new(kind: ExpertKind) -> Self {
        Self {
            kind,
            negative_scheme: NegativeScheme::default(),
        }
    }

    pub fn literal(kind: ExpertKind) -> Self {
        Self {
            kind,
            negative_scheme: NegativeScheme::Literal,
        }
    }

    /// Per-category (target, positive-term weight, negative-term weight).
    pub fn term_weights(&self, pv: &[(usize, f64)], k: usize) -> Result<TermWeights> {
        let mut target = vec![false; k];
        for &(j, _) in pv {
            target[j] = true;
        }
        let (pos, neg) = match self.kind {
            ExpertKind::Uniform => (vec![1.0; k], vec![1.0; k]),
            ExpertKind::Forward => {
                let w = forward_weights(pv, k);
                match self.negative_scheme {
                    NegativeScheme::Literal => (w.clone(), w),
                    NegativeScheme::Smoothed(alpha) => (w, vec![alpha / k as f64; k]),
                }
            }
            ExpertKind::Backward => {
                let r = compute_pv_weights(pv, k)?.r;
                (r.clone(), r)
            }
        };
        Ok(TermWeights { target, pos, neg })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermWeights {
    pub target: Vec<bool>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Weighted BCE of one category on a clamped probability, and dL/dz.
pub fn weighted_bce<F: Float>(z: F, target: bool, pos_w: F, neg_w: F) -> (F, F) {
    let eps = F::from(PROB_EPS).unwrap();
    let one = F::one();
    let p = one / (one + (-z).exp());
    let clamped = p < eps || p > one - eps;
    let pc = p.max(eps).min(one - eps);
    if target {
        let dz = if clamped { F::zero() } else { -pos_w * (one - pc) };
        (-pos_w * pc.ln(), dz)
    } else {
        let dz = if clamped { F::zero() } else { neg_w * pc };
        (-neg_w * (one - pc).ln(), dz)
    }
}

/// Parameters of the expert network: mean embedding -> tanh hidden -> k logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams<F> {
    pub buckets: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub k: usize,
    /// `buckets x embed_dim`
    pub embedding: Vec<F>,
    /// `hidden x embed_dim`
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    /// `k x hidden`
    pub w2: Vec<F>,
    pub b2: Vec<F>,
}

impl<F: Float> ExpertParams<F> {
    pub fn zeros(buckets: usize, embed_dim: usize, hidden: usize, k: usize) -> Self {
        Self {
            buckets,
            embed_dim,
            hidden,
            k,
            embedding: vec![F::zero(); buckets * embed_dim],
            w1: vec![F::zero(); hidden * embed_dim],
            b1: vec![F::zero(); hidden],
            w2: vec![F::zero(); k * hidden],
            b2: vec![F::zero(); k],
        }
    }

    pub fn cast<G: Float>(&self) -> ExpertParams<G> {
        let c = |v: &Vec<F>| v.iter().map(|x| G::from(*x).unwrap()).collect();
        ExpertParams {
            buckets: self.buckets,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            k: self.k,
            embedding: c(&self.embedding),
            w1: c(&self.w1),
            b1: c(&self.b1),
            w2: c(&self.w2),
            b2: c(&self.b2),
        }
    }

    pub fn all_finite(&self) -> bool {
        [&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Returns (mean embedding, hidden activations, logits).
    pub fn forward(&self, bag: &[usize]) -> (Vec<F>, Vec<F>, Vec<F>) {
        let de = self.embed_dim;
        let mut e = vec![F::zero(); de];
        if !bag.is_empty() {
            for &r in bag {
                for (acc, &v) in e.iter_mut().zip(&self.embedding[r * de..(r + 1) * de]) {
                    *acc = *acc + v;
                }
            }
            let inv = F::one() / F::from(bag.len()).unwrap();
            e.iter_mut().for_each(|v| *v = *v * inv);
        }
        let a: Vec<F> = self
            .w1
            .chunks_exact(de)
            .zip(&self.b1)
            .map(|(row, &b)| (dot(row, &e) + b).tanh())
            .collect();
        let z: Vec<F> = self
            .w2
            .chunks_exact(self.hidden)
            .zip(&self.b2)
            .map(|(row, &b)| dot(row, &a) + b)
            .collect();
        (e, a, z)
    }
}

pub(crate) fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Dense gradient accumulator. The embedding gradient is kept sparse as
/// `(bag, g)` entries: every occurrence of a row in `bag` receives `g`.
#[derive(Debug, Clone)]
pub struct ExpertGrads<F> {
    pub embedding: Vec<(Vec<usize>, Vec<F>)>,
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: Vec<F>,
}

impl<F: Float> ExpertGrads<F> {
    pub fn zeros(p: &ExpertParams<F>) -> Self {
        Self {
            embedding: Vec::new(),
            w1: vec![F::zero(); p.w1.len()],
            b1: vec![F::zero(); p.b1.len()],
            w2: vec![F::zero(); p.w2.len()],
            b2: vec![F::zero(); p.b2.len()],
        }
    }

    /// Adds `other` into `self`, in order.
    pub fn merge(&mut self, other: ExpertGrads<F>) {
        for (a, b) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
        }
        self.embedding.extend(other.embedding);
    }

    /// Dense embedding gradient, for tests on small bucket counts.
    pub fn dense_embedding(&self, p: &ExpertParams<F>) -> Vec<F> {
        let de = p.embed_dim;
        let mut g = vec![F::zero(); p.embedding.len()];
        for (bag, row) in &self.embedding {
            for &r in bag {
                for (acc, &v) in g[r * de..(r + 1) * de].iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
        }
        g
    }
}

/// Adds the gradient of one record's loss (times `scale`) into `grads` and
/// returns the unscaled loss.
pub fn accumulate_record<F: Float>(
    p: &ExpertParams<F>,
    bag: &[usize],
    weights: &TermWeights,
    scale: F,
    grads: &mut ExpertGrads<F>,
) -> F {
    let (e, a, z) = p.forward(bag);
    let (de, h) = (p.embed_dim, p.hidden);
    let mut loss = F::zero();
    let mut dz = vec![F::zero(); p.k];
    for j in 0..p.k {
        let (l, d) = weighted_bce(
            z[j],
            weights.target[j],
            F::from(weights.pos[j]).unwrap(),
            F::from(weights.neg[j]).unwrap(),
        );
        loss = loss + l;
        dz[j] = d * scale;
    }

    let mut da = vec![F::zero(); h];
    for j in 0..p.k {
        let g = dz[j];
        if g == F::zero() {
            continue;
        }
        grads.b2[j] = grads.b2[j] + g;
        let row = &p.w2[j * h..(j + 1) * h];
        let grow = &mut grads.w2[j * h..(j + 1) * h];
        for c in 0..h {
            grow[c] = grow[c] + g * a[c];
            da[c] = da[c] + g * row[c];
        }
    }

    let mut de_grad = vec![F::zero(); de];
    for c in 0..h {
        let dpre = da[c] * (F::one() - a[c] * a[c]);
        if dpre == F::zero() {
            continue;
        }
        grads.b1[c] = grads.b1[c] + dpre;
        let row = &p.w1[c * de..(c + 1) * de];
        let grow = &mut grads.w1[c * de..(c + 1) * de];
        for t in 0..de {
            grow[t] = grow[t] + dpre * e[t];
            de_grad[t] = de_grad[t] + dpre * row[t];
        }
    }

    if !bag.is_empty() {
        let inv = F::one() / F::from(bag.len()).unwrap();
        de_grad.iter_mut().for_each(|v| *v = *v * inv);
        grads.embedding.push((bag.to_vec(), de_grad));
    }
    loss
}

/// Loss of one record, no gradient.
pub fn record_loss<F: Float>(p: &ExpertParams<F>, bag: &[usize], weights: &TermWeights) -> F {
    let (_, _, z) = p.forward(bag);
    (0..p.k).fold(F::zero(), |acc, j| {
        acc + weighted_bce(
            z[j],
            weights.target[j],
            F::from(weights.pos[j]).unwrap(),
            F::from(weights.neg[j]).unwrap(),
        )
        .0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn loss_at(mode: ExpertLossMode, pv: &[(usize, f64)], probs: &[f64]) -> f64 {
        let tw = mode.term_weights(pv, probs.len()).unwrap();
        probs
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                weighted_bce(logit(p), tw.target[j], tw.pos[j], tw.neg[j]).0
            })
            .sum()
    }

    #[test]
    fn uniform_bce_at_half() {
        let l = loss_at(ExpertLossMode::new(ExpertKind::Uniform), &[(0, 3.0)], &[0.5, 0.5]);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn literal_forward_ignores_zero_pv_records() {
        let mode = ExpertLossMode::literal(ExpertKind::Forward);
        let l = loss_at(mode, &[(0, 0.0), (2, 0.0)], &[0.3, 0.9, 0.01]);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn backward_two_labels() {
        // r = (0, 1): only the negative term of category 1 counts.
        let l = loss_at(ExpertLossMode::new(ExpertKind::Backward), &[(0, 10.0)], &[0.9, 0.1]);
        let scalar = -(1.0 - 0.1f64).ln();
        assert!((l - scalar).abs() < 1e-12);
        assert!((l - 0.1054).abs() < 1e-4);
    }

    #[test]
    fn smoothed_forward_weights() {
        let tw = ExpertLossMode::new(ExpertKind::Forward)
            .term_weights(&[(1, 3.0), (2, 1.0)], 4)
            .unwrap();
        assert_eq!(tw.pos, vec![0.0, 0.75, 0.25, 0.0]);
        assert_eq!(tw.neg, vec![0.25; 4]);
        assert_eq!(tw.target, vec![false, true, true, false]);
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        let (l, d) = weighted_bce(800.0f64, false, 1.0, 1.0);
        assert!(l.is_finite());
        assert!((l + (1e-7f64).ln()).abs() < 1e-9);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn kind_codes() {
        for k in ExpertKind::ALL {
            assert_eq!(ExpertKind::from_code(k.code()), Some(k));
            assert_eq!(ExpertKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(ExpertKind::from_code(0), None);
    }
}

//! One-vs-all sigmoid loss over averaged embeddings, generic over the float
//! type so the same code serves f32 training and f64 gradient checks.

use num_traits::Float;

/// One BCE term of an example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub label: usize,
    pub positive: bool,
    pub weight: f64,
}

/// Numerically stable `-[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y z`.
pub fn bce_with_logit<F: Float>(z: F, positive: bool) -> F {
    let zero = F::zero();
    let softplus = z.max(zero) + (-z.abs()).exp().ln_1p();
    if positive {
        softplus - z
    } else {
        softplus
    }
}

pub fn sigmoid<F: Float>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// Mean of the embedding rows in `bag`; zero vector for an empty bag.
pub fn mean_embedding<F: Float>(embedding: &[F], dim: usize, bag: &[usize], out: &mut [F]) {
    out.iter_mut().for_each(|v| *v = F::zero());
    if bag.is_empty() {
        return;
    }
    for &r in bag {
        let row = &embedding[r * dim..(r + 1) * dim];
        for (o, &e) in out.iter_mut().zip(row) {
            *o = *o + e;
        }
    }
    let inv = F::one() / F::from(bag.len()).unwrap();
    out.iter_mut().for_each(|v| *v = *v * inv);
}

pub fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Loss and gradient of one example.
#[derive(Debug, Clone)]
pub struct ExampleGrad<F> {
    pub loss: F,
    /// Averaged input vector.
    pub hidden: Vec<F>,
    /// dL/dz for each target, aligned with the targets slice.
    pub dlogit: Vec<F>,
    /// dL/dh; each embedding row occurrence receives `grad_hidden / |bag|`.
    pub grad_hidden: Vec<F>,
}

pub fn example_grad<F: Float>(
    embedding: &[F],
    output: &[F],
    dim: usize,
    bag: &[usize],
    targets: &[Target],
) -> ExampleGrad<F> {
    let mut hidden = vec![F::zero(); dim];
    mean_embedding(embedding, dim, bag, &mut hidden);
    let mut loss = F::zero();
    let mut dlogit = Vec::with_capacity(targets.len());
    let mut grad_hidden = vec![F::zero(); dim];
    for t in targets {
        let w = F::from(t.weight).unwrap();
        let row = &output[t.label * dim..(t.label + 1) * dim];
        let z = dot(row, &hidden);
        loss = loss + w * bce_with_logit(z, t.positive);
        let y = if t.positive { F::one() } else { F::zero() };
        let g = w * (sigmoid(z) - y);
        for (gh, &u) in grad_hidden.iter_mut().zip(row) {
            *gh = *gh + g * u;
        }
        dlogit.push(g);
    }
    ExampleGrad {
        loss,
        hidden,
        dlogit,
        grad_hidden,
    }
}

/// Loss only; used by finite-difference checks.
pub fn example_loss<F: Float>(
    embedding: &[F],
    output: &[F],
    dim: usize,
    bag: &[usize],
    targets: &[Target],
) -> F {
    example_grad(embedding, output, dim, bag, targets).loss
}

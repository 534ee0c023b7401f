//! PV-normalized term weights.
//!
//! `w_ij = v_ij / Σ_l v_il` emphasizes the clicked categories of a query;
//! `r_ij = (1 - w_ij) / (k - 1)` inverts that emphasis.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PvWeights {
    pub w: Vec<f64>,
    pub r: Vec<f64>,
}

/// Dense forward weights over `k` categories. All zero when the row carries
/// no PV.
pub fn forward_weights(pv: &[(usize, f64)], k: usize) -> Vec<f64> {
    let mass: f64 = pv.iter().map(|&(_, v)| v).sum();
    let mut w = vec![0.0; k];
    if mass > 0.0 {
        for &(j, v) in pv {
            w[j] = v / mass;
        }
    }
    w
}

pub fn compute_pv_weights(pv: &[(usize, f64)], k: usize) -> Result<PvWeights> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "reverse PV weights need k >= 2, got k = {k}"
        )));
    }
    let w = forward_weights(pv, k);
    let denom = (k - 1) as f64;
    let r = w.iter().map(|wj| (1.0 - wj) / denom).collect();
    Ok(PvWeights { w, r })
}

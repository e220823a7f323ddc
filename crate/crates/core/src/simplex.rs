//! Simplex parameterization and hierarchical memberships.
//!
//! Points on a simplex are stored as unconstrained logits and mapped through
//! a max-shifted exp-normalize. Hierarchical memberships are parameterized at
//! the finest level (`2^H` communities); coarser levels are adjacent-pair
//! sums, so level `h` always has `2^h` entries and level 0 is the scalar 1.

use serde::{Deserialize, Serialize};

use crate::error::{MltError, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exp-normalize into `out`. No finiteness check; see [`to_simplex`].
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (x - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Pulls a gradient w.r.t. softmax output `p` back onto the logits, in place.
pub fn softmax_backward(p: &[f64], grad: &mut [f64]) {
    let dot: f64 = p.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
    for (g, &pi) in grad.iter_mut().zip(p) {
        *g = pi * (*g - dot);
    }
}

pub fn to_simplex(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(MltError::Domain("empty logit vector".into()));
    }
    if let Some(x) = logits.iter().find(|x| !x.is_finite()) {
        return Err(MltError::Domain(format!("non-finite logit {x}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector {
    logits: Vec<f64>,
    value: Vec<f64>,
}

impl SimplexVector {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        let value = to_simplex(&logits)?;
        Ok(Self { logits, value })
    }

    /// Wraps an explicit probability vector; logits are its logs, so zero
    /// entries are allowed but yield `-inf` logits.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        check_simplex(&p)?;
        Ok(Self {
            logits: p.iter().map(|x| x.ln()).collect(),
            value: p,
        })
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }
}

fn check_simplex(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(MltError::Domain(format!("not a probability vector: {p:?}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(MltError::Domain(format!("entries sum to {s}, expected 1")));
    }
    Ok(())
}

/// One adjacent-pair summation step.
pub fn coarsen(fine: &[f64]) -> Vec<f64> {
    fine.chunks_exact(2).map(|p| p[0] + p[1]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyLadder {
    levels: Vec<Vec<f64>>,
}

impl HierarchyLadder {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Level `h`, of dimension `2^h`.
    pub fn level(&self, h: usize) -> &[f64] {
        &self.levels[h]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }
}

pub fn build_ladder(finest: &SimplexVector, depth: usize) -> Result<HierarchyLadder> {
    ladder_from_values(finest.value(), depth)
}

pub fn ladder_from_values(finest: &[f64], depth: usize) -> Result<HierarchyLadder> {
    if depth >= usize::BITS as usize || finest.len() != 1usize << depth {
        return Err(MltError::Shape(format!(
            "finest dimension {} is not 2^{depth}",
            finest.len()
        )));
    }
    let mut levels = vec![finest.to_vec()];
    for _ in 0..depth {
        let next = coarsen(levels.last().unwrap());
        levels.push(next);
    }
    levels.reverse();
    Ok(HierarchyLadder { levels })
}

/// Kronecker product of binary branching proportions, root first.
pub fn kron_membership(branches: &[[f64; 2]]) -> Result<Vec<f64>> {
    let mut out = vec![1.0];
    for b in branches {
        check_simplex(b)?;
        out = out.iter().flat_map(|&x| [x * b[0], x * b[1]]).collect();
    }
    Ok(out)
}

/// Hierarchy depth for `n_nodes`: `max(1, floor(ln N))`.
pub fn depth_for(n_nodes: usize) -> Result<usize> {
    if n_nodes < 2 {
        return Err(MltError::Domain(format!(
            "depth needs at least 2 nodes, got {n_nodes}"
        )));
    }
    Ok(((n_nodes as f64).ln().floor() as usize).max(1))
}

/// Global strength `s = softplus(global_raw)` split over levels `0..=H` per
/// layer by `pi^l = softmax(level_logits[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthProfile {
    pub global_raw: f64,
    /// One row of `H + 1` logits per layer.
    pub level_logits: Vec<Vec<f64>>,
}

impl StrengthProfile {
    pub fn global(&self) -> f64 {
        softplus(self.global_raw)
    }

    pub fn proportions(&self, layer: usize) -> Vec<f64> {
        let row = &self.level_logits[layer];
        let mut p = vec![0.0; row.len()];
        softmax_into(row, &mut p);
        p
    }

    /// `s^l_h = s * pi^l_h` for `h = 0..=H`.
    pub fn strengths(&self, layer: usize) -> Vec<f64> {
        let s = self.global();
        self.proportions(layer).into_iter().map(|p| s * p).collect()
    }
}

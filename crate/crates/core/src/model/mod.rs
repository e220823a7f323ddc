//! Multiplex latent trade-off model.
//!
//! Log-odds of a directed tie `i -> j` in layer `l`:
//!
//! ```text
//! r = beta[i,l] + gamma[j,l] + z_i[l] * w_j[l] * sum_h s^l_h <u_i^{l,h}, v_j^{l,h}>
//! ```
//!
//! `z`, `w` live on the (L-1)-simplex, the hierarchy memberships on the
//! (2^h - 1)-simplex at every level `h = 0..=H`, and `s^l_h = s * pi^l_h`.
//! The trade-off variant replaces the bracket with the global strength `s`,
//! the bias variant drops the interaction entirely.

mod likelihood;
mod params;

pub use likelihood::{
    interaction_matrix, log_odds_matrix, nll, nll_grad, nll_sampled, sample_nodes, Observations,
};
pub use params::{MltParams, ParamFile, Variant};

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{MltError, Result};
use crate::graph::MultiplexGraph;
use crate::simplex::{ladder_from_values, sigmoid, to_simplex};

/// Dyads excluded from the likelihood, per layer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskPlan {
    hidden: Vec<BTreeSet<(usize, usize)>>,
}

impl MaskPlan {
    pub fn empty(n_layers: usize) -> Self {
        Self {
            hidden: vec![BTreeSet::new(); n_layers],
        }
    }

    pub fn hide(&mut self, layer: usize, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(MltError::Domain(format!(
                "cannot mask diagonal dyad ({i}, {i})"
            )));
        }
        if layer >= self.hidden.len() {
            self.hidden.resize(layer + 1, BTreeSet::new());
        }
        self.hidden[layer].insert((i, j));
        Ok(())
    }

    pub fn is_hidden(&self, layer: usize, i: usize, j: usize) -> bool {
        self.hidden.get(layer).is_some_and(|s| s.contains(&(i, j)))
    }

    pub fn hidden(&self, layer: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.hidden.get(layer).into_iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.hidden.iter().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_dyad(params: &MltParams, i: usize, j: usize, layer: usize) -> Result<()> {
    if i == j {
        return Err(MltError::Domain(format!("diagonal dyad ({i}, {i})")));
    }
    let (n, l) = (params.n_nodes(), params.n_layers());
    if i >= n || j >= n || layer >= l {
        return Err(MltError::Domain(format!(
            "dyad ({i}, {j}, layer {layer}) outside N={n}, L={l}"
        )));
    }
    Ok(())
}

/// Interdependence term of one dyad, evaluated through explicit ladders.
pub fn interdependence(params: &MltParams, i: usize, j: usize, layer: usize) -> Result<f64> {
    check_dyad(params, i, j, layer)?;
    let zi = to_simplex(params.z_logits.row(i).as_slice().unwrap())?[layer];
    let wj = to_simplex(params.w_logits.row(j).as_slice().unwrap())?[layer];
    match params.variant {
        Variant::Bias => Ok(0.0),
        Variant::Tradeoff => Ok(zi * params.strength.global() * wj),
        Variant::Full => {
            let h = params.depth;
            let u = to_simplex(params.u_logits[layer].row(i).as_slice().unwrap())?;
            let v = to_simplex(params.v_logits[layer].row(j).as_slice().unwrap())?;
            let lu = ladder_from_values(&u, h)?;
            let lv = ladder_from_values(&v, h)?;
            let s = params.strength.strengths(layer);
            let bracket: f64 = (0..=h)
                .map(|k| {
                    let dot: f64 = lu
                        .level(k)
                        .iter()
                        .zip(lv.level(k))
                        .map(|(a, b)| a * b)
                        .sum();
                    s[k] * dot
                })
                .sum();
            Ok(zi * bracket * wj)
        }
    }
}

pub fn log_odds(params: &MltParams, i: usize, j: usize, layer: usize) -> Result<f64> {
    let eta = interdependence(params, i, j, layer)?;
    Ok(params.beta[[i, layer]] + params.gamma[[j, layer]] + eta)
}

pub fn link_probability(params: &MltParams, i: usize, j: usize, layer: usize) -> Result<f64> {
    log_odds(params, i, j, layer).map(sigmoid)
}

/// Draws every off-diagonal dyad independently from its link probability.
pub fn sample_network<R: Rng + ?Sized>(params: &MltParams, rng: &mut R) -> MultiplexGraph {
    let (n, l) = (params.n_nodes(), params.n_layers());
    let mut g = MultiplexGraph::new(n, l);
    for layer in 0..l {
        let r = log_odds_matrix(params, layer);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < sigmoid(r[[i, j]]) {
                    g.add_edge(layer, i, j).expect("valid dyad");
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests;

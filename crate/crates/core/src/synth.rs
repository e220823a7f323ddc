//! Planted ground-truth parameters for recovery experiments.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MltError, Result};
use crate::model::{MltParams, Variant};
use crate::rng::{stream_rng, Stream};
use crate::simplex::{depth_for, softplus_inv};

/// Raw strength used for `s = 0`; softplus of it underflows to ~1e-304.
const STRENGTH_OFF_RAW: f64 = -700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub n_layers: usize,
    /// Hierarchy depth; `None` uses `max(1, floor(ln N))`.
    pub depth: Option<usize>,
    /// Planted blocks per layer, placed at level `ceil(log2(block_count))`.
    pub block_count: usize,
    /// Global interdependence strength `s`.
    pub strength: f64,
    pub bias_mean: f64,
    /// Standard deviation of the sender and receiver biases.
    pub bias_spread: f64,
    /// Role sharpness: role logits are `concentration * N(0, 1)`.
    pub concentration: f64,
    /// Mass spread uniformly over all finest communities.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_nodes: 60,
            n_layers: 3,
            depth: None,
            block_count: 4,
            strength: 0.0,
            bias_mean: 0.0,
            bias_spread: 0.5,
            concentration: 1.0,
            smoothing: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn resolved_depth(&self) -> Result<usize> {
        match self.depth {
            Some(0) => Err(MltError::Spec("depth must be at least 1".into())),
            Some(d) if d > 20 => Err(MltError::Spec(format!("depth {d} too large"))),
            Some(d) => Ok(d),
            None => depth_for(self.n_nodes).map_err(|e| MltError::Spec(e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 || self.n_layers == 0 {
            return Err(MltError::Spec("need at least 2 nodes and 1 layer".into()));
        }
        let depth = self.resolved_depth()?;
        if self.block_count == 0 || self.block_count > 1 << depth {
            return Err(MltError::Spec(format!(
                "block_count {} outside [1, 2^{depth}]",
                self.block_count
            )));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(MltError::Spec(
                "strength must be finite and nonnegative".into(),
            ));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(MltError::Spec("concentration must be positive".into()));
        }
        if !(self.bias_spread >= 0.0 && self.bias_spread.is_finite() && self.bias_mean.is_finite())
        {
            return Err(MltError::Spec("invalid bias distribution".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(MltError::Spec("smoothing must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Level at which the planted blocks live.
    pub fn block_level(&self) -> usize {
        self.block_count.next_power_of_two().trailing_zeros() as usize
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub params: MltParams,
    /// Per layer, planted block of every node.
    pub blocks: Vec<Vec<usize>>,
}

pub fn make_params(spec: &SynthSpec) -> Result<MltParams> {
    make_planted(spec).map(|p| p.params)
}

pub fn make_planted(spec: &SynthSpec) -> Result<Planted> {
    spec.validate()?;
    let depth = spec.resolved_depth()?;
    let (n, layers) = (spec.n_nodes, spec.n_layers);
    let d = 1usize << depth;
    let mut rng = stream_rng(spec.seed, Stream::Synth, 0);
    let mut p = MltParams::zeros(n, layers, depth, Variant::Full);

    let bias = Normal::new(spec.bias_mean, spec.bias_spread).expect("validated spread");
    p.beta.mapv_inplace(|_| bias.sample(&mut rng));
    p.gamma.mapv_inplace(|_| bias.sample(&mut rng));

    let unit = Normal::new(0.0, 1.0).unwrap();
    p.z_logits
        .mapv_inplace(|_| spec.concentration * unit.sample(&mut rng));
    p.w_logits
        .mapv_inplace(|_| spec.concentration * unit.sample(&mut rng));

    let level = spec.block_level();
    let width = d >> level;
    let mut blocks = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut labels: Vec<usize> = (0..n).map(|i| i % spec.block_count).collect();
        labels.shuffle(&mut rng);
        for (i, &b) in labels.iter().enumerate() {
            for k in 0..d {
                let inside = if k / width == b {
                    (1.0 - spec.smoothing) / width as f64
                } else {
                    0.0
                };
                let x = (inside + spec.smoothing / d as f64).ln();
                p.u_logits[l][[i, k]] = x;
                p.v_logits[l][[i, k]] = x;
            }
        }
        blocks.push(labels);
        p.strength.level_logits[l] = (0..=depth)
            .map(|h| if h >= level { 0.0 } else { -4.0 })
            .collect();
    }
    p.strength.global_raw = if spec.strength > 0.0 {
        softplus_inv(spec.strength)
    } else {
        STRENGTH_OFF_RAW
    };
    Ok(Planted { params: p, blocks })
}

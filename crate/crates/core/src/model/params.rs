use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MltError, Result};
use crate::simplex::{softmax_into, softplus_inv, StrengthProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Sender and receiver biases only.
    Bias,
    /// Biases plus `z_i[l] * s * w_j[l]`.
    Tradeoff,
    /// Biases plus the hierarchical interdependence term.
    Full,
}

impl std::str::FromStr for Variant {
    type Err = MltError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias" => Ok(Variant::Bias),
            "tradeoff" => Ok(Variant::Tradeoff),
            "full" => Ok(Variant::Full),
            other => Err(MltError::Spec(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Bias => "bias",
            Variant::Tradeoff => "tradeoff",
            Variant::Full => "full",
        })
    }
}

/// Free parameters of one model variant. All simplex-valued quantities are
/// stored as logits. Gradients use the same record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamFile", try_from = "ParamFile")]
pub struct MltParams {
    pub variant: Variant,
    pub depth: usize,
    /// N x L sender biases.
    pub beta: Array2<f64>,
    /// N x L receiver biases.
    pub gamma: Array2<f64>,
    /// N x L source role logits.
    pub z_logits: Array2<f64>,
    /// N x L target role logits.
    pub w_logits: Array2<f64>,
    /// Per layer, N x 2^H finest source memberships.
    pub u_logits: Vec<Array2<f64>>,
    /// Per layer, N x 2^H finest target memberships.
    pub v_logits: Vec<Array2<f64>>,
    pub strength: StrengthProfile,
}

impl MltParams {
    pub fn zeros(n_nodes: usize, n_layers: usize, depth: usize, variant: Variant) -> Self {
        let d = 1usize << depth;
        Self {
            variant,
            depth,
            beta: Array2::zeros((n_nodes, n_layers)),
            gamma: Array2::zeros((n_nodes, n_layers)),
            z_logits: Array2::zeros((n_nodes, n_layers)),
            w_logits: Array2::zeros((n_nodes, n_layers)),
            u_logits: vec![Array2::zeros((n_nodes, d)); n_layers],
            v_logits: vec![Array2::zeros((n_nodes, d)); n_layers],
            strength: StrengthProfile {
                global_raw: 0.0,
                level_logits: vec![vec![0.0; depth + 1]; n_layers],
            },
        }
    }

    /// Random initialization: biases ~ N(0, 0.1^2), every logit ~ N(0, 1),
    /// global strength at 1.
    pub fn random<R: Rng + ?Sized>(
        n_nodes: usize,
        n_layers: usize,
        depth: usize,
        variant: Variant,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(n_nodes, n_layers, depth, variant);
        let bias = Normal::new(0.0, 0.1).unwrap();
        let logit = Normal::new(0.0, 1.0).unwrap();
        p.beta.mapv_inplace(|_| bias.sample(rng));
        p.gamma.mapv_inplace(|_| bias.sample(rng));
        p.z_logits.mapv_inplace(|_| logit.sample(rng));
        p.w_logits.mapv_inplace(|_| logit.sample(rng));
        for a in p.u_logits.iter_mut().chain(p.v_logits.iter_mut()) {
            a.mapv_inplace(|_| logit.sample(rng));
        }
        for row in &mut p.strength.level_logits {
            for x in row.iter_mut() {
                *x = logit.sample(rng);
            }
        }
        p.strength.global_raw = softplus_inv(1.0);
        p
    }

    pub fn n_nodes(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_layers(&self) -> usize {
        self.beta.ncols()
    }

    /// Finest-level community count `2^H`.
    pub fn n_communities(&self) -> usize {
        1 << self.depth
    }

    /// Same shapes, all zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_nodes(), self.n_layers(), self.depth, self.variant)
    }

    /// Copy of these parameters under another variant. Parameters unused by
    /// the source variant keep their values.
    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    /// Row-wise simplex values of an N x K logit matrix.
    pub fn simplex_rows(logits: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(logits.raw_dim());
        for (src, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
            softmax_into(
                src.as_slice().expect("standard layout"),
                dst.as_slice_mut().expect("standard layout"),
            );
        }
        out
    }

    pub fn z(&self) -> Array2<f64> {
        Self::simplex_rows(&self.z_logits)
    }

    pub fn w(&self) -> Array2<f64> {
        Self::simplex_rows(&self.w_logits)
    }

    pub fn u(&self, layer: usize) -> Array2<f64> {
        Self::simplex_rows(&self.u_logits[layer])
    }

    pub fn v(&self, layer: usize) -> Array2<f64> {
        Self::simplex_rows(&self.v_logits[layer])
    }

    /// Number of leading entries of the flat view that are biases.
    pub fn n_bias_params(&self) -> usize {
        self.beta.len() + self.gamma.len()
    }

    /// Slices of every parameter the variant uses, biases first.
    pub fn active_slices(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.beta.as_slice().unwrap(),
            self.gamma.as_slice().unwrap(),
        ];
        if self.variant == Variant::Bias {
            return out;
        }
        out.push(self.z_logits.as_slice().unwrap());
        out.push(self.w_logits.as_slice().unwrap());
        out.push(std::slice::from_ref(&self.strength.global_raw));
        if self.variant == Variant::Full {
            for a in self.u_logits.iter().chain(&self.v_logits) {
                out.push(a.as_slice().unwrap());
            }
            for row in &self.strength.level_logits {
                out.push(row);
            }
        }
        out
    }

    pub fn active_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.beta.as_slice_mut().unwrap(),
            self.gamma.as_slice_mut().unwrap(),
        ];
        if self.variant == Variant::Bias {
            return out;
        }
        out.push(self.z_logits.as_slice_mut().unwrap());
        out.push(self.w_logits.as_slice_mut().unwrap());
        out.push(std::slice::from_mut(&mut self.strength.global_raw));
        if self.variant == Variant::Full {
            for a in self.u_logits.iter_mut().chain(self.v_logits.iter_mut()) {
                out.push(a.as_slice_mut().unwrap());
            }
            for row in &mut self.strength.level_logits {
                out.push(row);
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.active_slices().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.active_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn n_active(&self) -> usize {
        self.active_slices().iter().map(|s| s.len()).sum()
    }

    /// Validates internal shape consistency.
    pub fn check(&self) -> Result<()> {
        let (n, l) = (self.n_nodes(), self.n_layers());
        let d = self.n_communities();
        let ok = self.gamma.dim() == (n, l)
            && self.z_logits.dim() == (n, l)
            && self.w_logits.dim() == (n, l)
            && self.u_logits.len() == l
            && self.v_logits.len() == l
            && self
                .u_logits
                .iter()
                .chain(&self.v_logits)
                .all(|a| a.dim() == (n, d))
            && self.strength.level_logits.len() == l
            && self
                .strength
                .level_logits
                .iter()
                .all(|r| r.len() == self.depth + 1);
        if !ok {
            return Err(MltError::Shape(format!(
                "parameter shapes inconsistent with N={n}, L={l}, H={}",
                self.depth
            )));
        }
        if self.flatten().iter().any(|x| !x.is_finite()) {
            return Err(MltError::Domain("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// On-disk JSON layout of [`MltParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamFile {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub depth: usize,
    pub variant: Variant,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub z_logits: Vec<Vec<f64>>,
    pub w_logits: Vec<Vec<f64>>,
    pub u_logits: Vec<Vec<Vec<f64>>>,
    pub v_logits: Vec<Vec<Vec<f64>>>,
    pub strength: StrengthProfile,
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, shape: (usize, usize), what: &str) -> Result<Array2<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(MltError::Shape(format!(
            "{what} is not {}x{}",
            shape.0, shape.1
        )));
    }
    Ok(Array2::from_shape_vec(shape, rows.concat()).expect("checked shape"))
}

impl From<MltParams> for ParamFile {
    fn from(p: MltParams) -> Self {
        Self {
            n_nodes: p.n_nodes(),
            n_layers: p.n_layers(),
            depth: p.depth,
            variant: p.variant,
            beta: to_rows(&p.beta),
            gamma: to_rows(&p.gamma),
            z_logits: to_rows(&p.z_logits),
            w_logits: to_rows(&p.w_logits),
            u_logits: p.u_logits.iter().map(to_rows).collect(),
            v_logits: p.v_logits.iter().map(to_rows).collect(),
            strength: p.strength,
        }
    }
}

impl TryFrom<ParamFile> for MltParams {
    type Error = MltError;

    fn try_from(f: ParamFile) -> Result<Self> {
        let (n, l) = (f.n_nodes, f.n_layers);
        if f.depth == 0 || f.depth > 20 {
            return Err(MltError::Shape(format!("unsupported depth {}", f.depth)));
        }
        let d = 1usize << f.depth;
        if f.u_logits.len() != l || f.v_logits.len() != l {
            return Err(MltError::Shape("membership layer count mismatch".into()));
        }
        let p = Self {
            variant: f.variant,
            depth: f.depth,
            beta: from_rows(f.beta, (n, l), "beta")?,
            gamma: from_rows(f.gamma, (n, l), "gamma")?,
            z_logits: from_rows(f.z_logits, (n, l), "z_logits")?,
            w_logits: from_rows(f.w_logits, (n, l), "w_logits")?,
            u_logits: f
                .u_logits
                .into_iter()
                .map(|r| from_rows(r, (n, d), "u_logits"))
                .collect::<Result<_>>()?,
            v_logits: f
                .v_logits
                .into_iter()
                .map(|r| from_rows(r, (n, d), "v_logits"))
                .collect::<Result<_>>()?,
            strength: f.strength,
        };
        p.check()?;
        Ok(p)
    }
}

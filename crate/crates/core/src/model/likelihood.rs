//! Normalized Bernoulli negative log-likelihood and its analytic gradient.
//!
//! For a node subset `S` (all nodes by default) the loss is
//!
//! ```text
//! -1/(|S|(|S|-1)) * sum_l sum_{i != j in S, unmasked} ( y r - softplus(r) )
//! ```
//!
//! which equals the full loss when `S` is every node, and is an unbiased
//! estimate of it when `S` is a uniformly drawn subset of fixed size.
//!
//! The hierarchy bracket is evaluated as `U M V^T`, where `M[a, b]` sums the
//! level strengths over every level at which finest communities `a` and `b`
//! share an ancestor. Its gradient w.r.t. `s_h` is the sum of `U^T G V` over
//! the level-`h` diagonal blocks.

use std::borrow::Cow;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::{MaskPlan, MltParams, Variant};
use crate::error::{MltError, Result};
use crate::graph::MultiplexGraph;
use crate::simplex::{sigmoid, softmax_backward};

/// Dense observed adjacency plus a likelihood weight per dyad (0 on the
/// diagonal and on masked dyads).
#[derive(Debug, Clone)]
pub struct Observations {
    y: Vec<Array2<f64>>,
    keep: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GradScope {
    None,
    Bias,
    All,
}

impl Observations {
    pub fn new(g: &MultiplexGraph, mask: &MaskPlan) -> Self {
        let n = g.n_nodes();
        let mut y = Vec::with_capacity(g.n_layers());
        let mut keep = Vec::with_capacity(g.n_layers());
        for l in 0..g.n_layers() {
            y.push(g.adjacency(l));
            let mut k = Array2::ones((n, n));
            for i in 0..n {
                k[[i, i]] = 0.0;
            }
            for (i, j) in mask.hidden(l) {
                k[[i, j]] = 0.0;
            }
            keep.push(k);
        }
        Self { y, keep }
    }

    pub fn n_nodes(&self) -> usize {
        self.y.first().map_or(0, |a| a.nrows())
    }

    pub fn n_layers(&self) -> usize {
        self.y.len()
    }

    fn check(&self, params: &MltParams) -> Result<()> {
        if params.n_nodes() != self.n_nodes() || params.n_layers() != self.n_layers() {
            return Err(MltError::Shape(format!(
                "parameters are {}x{}, data is {}x{}",
                params.n_nodes(),
                params.n_layers(),
                self.n_nodes(),
                self.n_layers()
            )));
        }
        Ok(())
    }

    pub fn nll(&self, params: &MltParams) -> Result<f64> {
        self.check(params)?;
        Ok(self.evaluate(params, None, None, GradScope::None).0)
    }

    pub fn nll_on(&self, params: &MltParams, nodes: &[usize]) -> Result<f64> {
        self.check(params)?;
        check_subset(nodes, self.n_nodes())?;
        Ok(self.evaluate(params, Some(nodes), None, GradScope::None).0)
    }

    pub fn nll_grad(
        &self,
        params: &MltParams,
        nodes: Option<&[usize]>,
    ) -> Result<(f64, MltParams)> {
        self.check(params)?;
        if let Some(s) = nodes {
            check_subset(s, self.n_nodes())?;
        }
        let (loss, grad) = self.evaluate(params, nodes, None, GradScope::All);
        Ok((loss, grad.expect("gradient requested")))
    }

    /// Loss and gradient where the interaction matrices are supplied
    /// (full node set only) and only bias gradients are formed.
    pub(crate) fn bias_step(&self, params: &MltParams, frozen: &[Array2<f64>]) -> (f64, MltParams) {
        let (loss, grad) = self.evaluate(params, None, Some(frozen), GradScope::Bias);
        (loss, grad.expect("gradient requested"))
    }

    pub(crate) fn evaluate(
        &self,
        params: &MltParams,
        nodes: Option<&[usize]>,
        frozen: Option<&[Array2<f64>]>,
        scope: GradScope,
    ) -> (f64, Option<MltParams>) {
        let n = self.n_nodes();
        let idx: Cow<[usize]> = match nodes {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned((0..n).collect()),
        };
        let sn = idx.len();
        let coef = 1.0 / (sn as f64 * (sn as f64 - 1.0));
        let gather = |a: &Array2<f64>| -> Array2<f64> {
            match nodes {
                Some(s) => standard(a.select(Axis(0), s)),
                None => a.clone(),
            }
        };

        let beta = gather(&params.beta);
        let gamma = gather(&params.gamma);
        let interacting = params.variant != Variant::Bias;
        let z = interacting.then(|| MltParams::simplex_rows(&gather(&params.z_logits)));
        let w = interacting.then(|| MltParams::simplex_rows(&gather(&params.w_logits)));
        let s = params.strength.global();

        let mut grad = (scope != GradScope::None).then(|| params.zeros_like());
        let full_grad = scope == GradScope::All && interacting;
        let mut gz = Array2::<f64>::zeros((sn, params.n_layers()));
        let mut gw = Array2::<f64>::zeros((sn, params.n_layers()));
        let mut g_global = 0.0;

        let mut total = 0.0;
        for l in 0..self.n_layers() {
            let y: Cow<Array2<f64>> = match nodes {
                Some(s) => Cow::Owned(standard(self.y[l].select(Axis(0), s).select(Axis(1), s))),
                None => Cow::Borrowed(&self.y[l]),
            };
            let keep: Cow<Array2<f64>> = match nodes {
                Some(s) => Cow::Owned(standard(self.keep[l].select(Axis(0), s).select(Axis(1), s))),
                None => Cow::Borrowed(&self.keep[l]),
            };

            // hierarchy pieces, Full only: (U, V, M, K = U M V^T)
            let mut hier = None;
            let mut r = Array2::<f64>::zeros((sn, sn));
            if let Some(fz) = frozen {
                r.assign(&fz[l]);
            } else if interacting {
                let zl = z.as_ref().unwrap().column(l).to_owned();
                let wl = w.as_ref().unwrap().column(l).to_owned();
                match params.variant {
                    Variant::Tradeoff => {
                        for i in 0..sn {
                            for j in 0..sn {
                                r[[i, j]] = zl[i] * s * wl[j];
                            }
                        }
                    }
                    Variant::Full => {
                        let u = MltParams::simplex_rows(&gather(&params.u_logits[l]));
                        let v = MltParams::simplex_rows(&gather(&params.v_logits[l]));
                        let strengths = params.strength.strengths(l);
                        let m = level_kernel(&strengths, params.depth);
                        let k = u.dot(&m).dot(&v.t());
                        for i in 0..sn {
                            for j in 0..sn {
                                r[[i, j]] = zl[i] * k[[i, j]] * wl[j];
                            }
                        }
                        hier = Some((u, v, m, k));
                    }
                    Variant::Bias => unreachable!(),
                }
            }
            let bl = beta.column(l).to_owned();
            let cl = gamma.column(l).to_owned();

            // r becomes the dloss/dr coefficient matrix in place
            let layer_sum = {
                let ys = y.as_slice().unwrap();
                let ks = keep.as_slice().unwrap();
                let rs = r.as_slice_mut().unwrap();
                bernoulli_terms(
                    rs,
                    ys,
                    ks,
                    bl.as_slice().unwrap(),
                    cl.as_slice().unwrap(),
                    coef,
                )
            };
            total += layer_sum;
            let c = r;

            let Some(g) = grad.as_mut() else { continue };
            let row_sums = c.sum_axis(Axis(1));
            let col_sums = c.sum_axis(Axis(0));
            for (a, &i) in idx.iter().enumerate() {
                g.beta[[i, l]] += row_sums[a];
                g.gamma[[i, l]] += col_sums[a];
            }
            if !full_grad {
                continue;
            }
            let zl = z.as_ref().unwrap().column(l).to_owned();
            let wl = w.as_ref().unwrap().column(l).to_owned();
            match hier {
                None => {
                    // trade-off: K = s everywhere
                    let cw = c.dot(&wl);
                    let ctz = c.t().dot(&zl);
                    for a in 0..sn {
                        gz[[a, l]] += s * cw[a];
                        gw[[a, l]] += s * ctz[a];
                    }
                    g_global += zl.dot(&cw);
                }
                Some((u, v, m, k)) => {
                    let ck = &c * &k;
                    let ckw = ck.dot(&wl);
                    let cktz = ck.t().dot(&zl);
                    for a in 0..sn {
                        gz[[a, l]] += ckw[a];
                        gw[[a, l]] += cktz[a];
                    }
                    let gmat = scale_rows_cols(&c, zl.view(), wl.view());
                    let gv = gmat.dot(&v);
                    let mut gu_val = gv.dot(&m);
                    let mut gv_val = gmat.t().dot(&u).dot(&m);
                    let p = u.t().dot(&gv);
                    let g_levels = level_block_sums(&p, params.depth);
                    backprop_rows(&u, &mut gu_val);
                    backprop_rows(&v, &mut gv_val);
                    for (a, &i) in idx.iter().enumerate() {
                        g.u_logits[l].row_mut(i).scaled_add(1.0, &gu_val.row(a));
                        g.v_logits[l].row_mut(i).scaled_add(1.0, &gv_val.row(a));
                    }
                    let pi = params.strength.proportions(l);
                    let mut g_pi: Vec<f64> = g_levels.iter().map(|gh| s * gh).collect();
                    g_global += pi.iter().zip(&g_levels).map(|(p, gh)| p * gh).sum::<f64>();
                    softmax_backward(&pi, &mut g_pi);
                    for (dst, src) in g.strength.level_logits[l].iter_mut().zip(g_pi) {
                        *dst += src;
                    }
                }
            }
        }

        if let Some(g) = grad.as_mut() {
            if full_grad {
                let zv = z.as_ref().unwrap();
                let wv = w.as_ref().unwrap();
                backprop_rows(zv, &mut gz);
                backprop_rows(wv, &mut gw);
                for (a, &i) in idx.iter().enumerate() {
                    g.z_logits.row_mut(i).scaled_add(1.0, &gz.row(a));
                    g.w_logits.row_mut(i).scaled_add(1.0, &gw.row(a));
                }
                g.strength.global_raw = sigmoid(params.strength.global_raw) * g_global;
            }
        }
        (-coef * total, grad)
    }
}

fn check_subset(nodes: &[usize], n: usize) -> Result<()> {
    if nodes.len() < 2 {
        return Err(MltError::Domain(format!(
            "node sample of size {} (need at least 2)",
            nodes.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in nodes {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(MltError::Domain(format!(
                "invalid or repeated sampled node {i}"
            )));
        }
    }
    Ok(())
}

/// Adds the biases to the interaction terms in `r`, returns the kept
/// `sum y*x - softplus(x)` and leaves `coef * keep * (sigmoid(x) - y)` in `r`.
///
/// Softplus sums are taken as the log of running products of `1 + e^{-|x|}`
/// (each factor in [1, 2]), flushed every 64 factors.
fn bernoulli_terms(r: &mut [f64], y: &[f64], keep: &[f64], b: &[f64], c: &[f64], coef: f64) -> f64 {
    let n = b.len();
    let mut linear = 0.0;
    let mut log_sum = 0.0;
    let mut prod = 1.0;
    let mut pending = 0;
    for i in 0..n {
        let row = i * n;
        for j in 0..n {
            let t = row + j;
            if keep[t] == 0.0 {
                r[t] = 0.0;
                continue;
            }
            let x = b[i] + c[j] + r[t];
            let e = (-x.abs()).exp();
            let sg = if x >= 0.0 {
                1.0 / (1.0 + e)
            } else {
                e / (1.0 + e)
            };
            linear += keep[t] * (y[t] * x - x.max(0.0));
            prod *= 1.0 + e;
            pending += 1;
            if pending == 64 {
                log_sum += prod.ln();
                prod = 1.0;
                pending = 0;
            }
            r[t] = coef * keep[t] * (sg - y[t]);
        }
    }
    linear - (log_sum + prod.ln())
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn scale_rows_cols(c: &Array2<f64>, rows: ArrayView1<f64>, cols: ArrayView1<f64>) -> Array2<f64> {
    let mut out = c.clone();
    for ((i, j), x) in out.indexed_iter_mut() {
        *x *= rows[i] * cols[j];
    }
    out
}

/// Row-wise softmax backward: `grad` holds dL/dvalue on entry, dL/dlogit on
/// exit.
fn backprop_rows(values: &Array2<f64>, grad: &mut Array2<f64>) {
    for (p, mut g) in values.rows().into_iter().zip(grad.rows_mut()) {
        softmax_backward(p.as_slice().unwrap(), g.as_slice_mut().unwrap());
    }
}

/// `M[a, b] = sum_{h=0}^{H} s_h [a, b share their level-h ancestor]`.
pub(crate) fn level_kernel(strengths: &[f64], depth: usize) -> Array2<f64> {
    let d = 1usize << depth;
    let mut m = Array2::zeros((d, d));
    for a in 0..d {
        for b in 0..d {
            m[[a, b]] = (0..=depth)
                .take_while(|&h| a >> (depth - h) == b >> (depth - h))
                .map(|h| strengths[h])
                .sum();
        }
    }
    m
}

/// Sum of `p` over the level-`h` diagonal blocks, for each `h = 0..=H`.
fn level_block_sums(p: &Array2<f64>, depth: usize) -> Vec<f64> {
    let d = 1usize << depth;
    let mut out = vec![0.0; depth + 1];
    for a in 0..d {
        for b in 0..d {
            for (h, o) in out.iter_mut().enumerate() {
                if a >> (depth - h) == b >> (depth - h) {
                    *o += p[[a, b]];
                } else {
                    break;
                }
            }
        }
    }
    out
}

/// `eta^l_ij` for every ordered pair (diagonal included) of one layer.
pub fn interaction_matrix(params: &MltParams, layer: usize) -> Array2<f64> {
    let n = params.n_nodes();
    let mut eta = Array2::zeros((n, n));
    if params.variant == Variant::Bias {
        return eta;
    }
    let zl: Array1<f64> = params.z().column(layer).to_owned();
    let wl: Array1<f64> = params.w().column(layer).to_owned();
    let k = match params.variant {
        Variant::Full => {
            let m = level_kernel(&params.strength.strengths(layer), params.depth);
            params.u(layer).dot(&m).dot(&params.v(layer).t())
        }
        _ => Array2::from_elem((n, n), params.strength.global()),
    };
    for ((i, j), e) in eta.indexed_iter_mut() {
        *e = zl[i] * k[[i, j]] * wl[j];
    }
    eta
}

/// Log-odds of every ordered pair (diagonal included) of one layer.
pub fn log_odds_matrix(params: &MltParams, layer: usize) -> Array2<f64> {
    let mut r = interaction_matrix(params, layer);
    for ((i, j), x) in r.indexed_iter_mut() {
        *x += params.beta[[i, layer]] + params.gamma[[j, layer]];
    }
    r
}

pub fn nll(g: &MultiplexGraph, params: &MltParams, mask: &MaskPlan) -> Result<f64> {
    Observations::new(g, mask).nll(params)
}

/// `size` distinct nodes drawn uniformly, in ascending order.
pub fn sample_nodes<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if size < 2 || size > n {
        return Err(MltError::Domain(format!(
            "sample size {size} outside [2, {n}]"
        )));
    }
    let mut s = rand::seq::index::sample(rng, n, size).into_vec();
    s.sort_unstable();
    Ok(s)
}

/// Unbiased subsampled estimate of [`nll`] from `size` distinct nodes.
pub fn nll_sampled<R: Rng + ?Sized>(
    g: &MultiplexGraph,
    params: &MltParams,
    mask: &MaskPlan,
    size: usize,
    rng: &mut R,
) -> Result<f64> {
    let nodes = sample_nodes(g.n_nodes(), size, rng)?;
    Observations::new(g, mask).nll_on(params, &nodes)
}

/// Loss and gradient, optionally restricted to a node sample.
pub fn nll_grad(
    g: &MultiplexGraph,
    params: &MltParams,
    mask: &MaskPlan,
    sample: Option<&[usize]>,
) -> Result<(f64, MltParams)> {
    Observations::new(g, mask).nll_grad(params, sample)
}

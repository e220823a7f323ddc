//! Post-fit statistics: soft NMI, rank correlations, bootstrap and
//! permutation nulls, rank tests and centralities.
//!
//! Every resampling loop draws iteration `k` from its own keyed stream, so
//! results do not depend on the thread count.

use std::collections::VecDeque;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MltError, Result};
use crate::graph::{degree_profile, layer_stats, Direction, LayerStats, MultiplexGraph};
use crate::model::MltParams;
use crate::rng::{stream_rng, Stream};

/// Slack used when comparing null statistics with the observed one.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    matrix: Array2<f64>,
}

impl SoftAssignment {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.ncols() == 0 {
            return Err(MltError::Shape(
                "assignment needs at least one column".into(),
            ));
        }
        for (i, row) in matrix.rows().into_iter().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(MltError::Domain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            if (row.sum() - 1.0).abs() > 1e-9 {
                return Err(MltError::Domain(format!("row {i} sums to {}", row.sum())));
            }
        }
        Ok(Self { matrix })
    }

    /// One-hot rows from hard labels in `0..k`.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let mut m = Array2::zeros((labels.len(), k));
        for (i, &c) in labels.iter().enumerate() {
            if c >= k {
                return Err(MltError::Domain(format!("label {c} outside 0..{k}")));
            }
            m[[i, c]] = 1.0;
        }
        Ok(Self { matrix: m })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn select_rows(&self, keep: &[bool]) -> Self {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep[i]).collect();
        Self {
            matrix: self.matrix.select(Axis(0), &idx),
        }
    }

    pub fn column_mean(&self, col: usize) -> f64 {
        self.matrix.column(col).mean().unwrap_or(f64::NAN)
    }
}

fn entropy(p: impl Iterator<Item = f64>) -> f64 {
    p.filter(|&x| x > 0.0).map(|x| -x * x.ln()).sum()
}

/// `2 I / (H_a + H_b)` of the joint `p(k, k') = mean_i a_ik b_ik'`.
pub fn nmi_soft(a: &SoftAssignment, b: &SoftAssignment) -> Result<f64> {
    if a.n_rows() != b.n_rows() {
        return Err(MltError::Shape(format!(
            "{} vs {} rows",
            a.n_rows(),
            b.n_rows()
        )));
    }
    if a.n_rows() == 0 {
        return Err(MltError::Shape("empty assignment".into()));
    }
    let joint = a.matrix.t().dot(&b.matrix) / a.n_rows() as f64;
    let pa = joint.sum_axis(Axis(1));
    let pb = joint.sum_axis(Axis(0));
    let (ha, hb) = (entropy(pa.iter().copied()), entropy(pb.iter().copied()));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((x, y), &p) in joint.indexed_iter() {
        if p > 0.0 {
            mi += p * (p / (pa[x] * pb[y])).ln();
        }
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Average ranks starting at 1; ties share their mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && x[idx[e + 1]] == x[idx[k]] {
            e += 1;
        }
        let r = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            ranks[i] = r;
        }
        k = e + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MltError::Shape(format!(
            "{} vs {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(MltError::Domain(
            "correlation needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MltError::Degenerate("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 3 || x.len() != y.len() {
        return Err(MltError::Domain(format!(
            "spearman needs n >= 3 paired values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMode {
    /// Resample nodes inside every network.
    Within,
    /// Resample whole networks.
    Across,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub means: Vec<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Degenerate per-network correlations left out of the means.
    pub skipped: usize,
}

/// Bootstrap distribution of the mean Spearman correlation over networks.
///
/// Across-network mode resamples networks and averages their full-sample
/// correlations.
pub fn bootstrap_mean_corr(
    datasets: &[(Vec<f64>, Vec<f64>)],
    n_boot: usize,
    mode: BootstrapMode,
    seed: u64,
) -> Result<BootstrapResult> {
    if datasets.is_empty() || n_boot == 0 {
        return Err(MltError::Domain(
            "bootstrap needs data and iterations".into(),
        ));
    }
    for (k, (x, y)) in datasets.iter().enumerate() {
        if x.len() != y.len() || x.len() < 3 {
            return Err(MltError::Domain(format!(
                "network {k} needs n >= 3 paired values"
            )));
        }
    }
    let draws: Vec<(Option<f64>, usize)> = match mode {
        BootstrapMode::Within => (0..n_boot)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, Stream::Bootstrap, b as u64);
                let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
                for (x, y) in datasets {
                    let idx: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
                    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
                    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                    match spearman(&xs, &ys) {
                        Ok(r) => {
                            sum += r;
                            used += 1;
                        }
                        Err(_) => skipped += 1,
                    }
                }
                ((used > 0).then(|| sum / used as f64), skipped)
            })
            .collect(),
        BootstrapMode::Across => {
            let rho: Vec<Option<f64>> = datasets.iter().map(|(x, y)| spearman(x, y).ok()).collect();
            (0..n_boot)
                .into_par_iter()
                .map(|b| {
                    let mut rng = stream_rng(seed, Stream::Bootstrap, b as u64);
                    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
                    for _ in 0..rho.len() {
                        match rho[rng.gen_range(0..rho.len())] {
                            Some(r) => {
                                sum += r;
                                used += 1;
                            }
                            None => skipped += 1,
                        }
                    }
                    ((used > 0).then(|| sum / used as f64), skipped)
                })
                .collect()
        }
    };
    let skipped = draws.iter().map(|d| d.1).sum();
    let means: Vec<f64> = draws.into_iter().filter_map(|d| d.0).collect();
    let mut sorted = means.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        ci_low: quantile(&sorted, 0.025),
        ci_high: quantile(&sorted, 0.975),
        means,
        skipped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
}

impl PermutationResult {
    /// Add-one p-value for the alternative "statistic is large".
    fn greater(observed: f64, null_samples: Vec<f64>) -> Self {
        let hits = null_samples
            .iter()
            .filter(|&&s| s >= observed - TIE_TOL)
            .count();
        let p_value = (1 + hits) as f64 / (1 + null_samples.len()) as f64;
        Self {
            observed,
            null_samples,
            p_value,
        }
    }

    pub fn null_mean(&self) -> f64 {
        self.null_samples.iter().sum::<f64>() / self.null_samples.len() as f64
    }
}

/// Tests whether the mean weight of `layer` differs from `1/K`.
///
/// Null: the components of each row are permuted independently. The
/// reported `observed` and null samples are column means; the two-sided p
/// compares their distances from `1/K`.
pub fn permute_rows_test(
    a: &SoftAssignment,
    layer: usize,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult> {
    let k = a.n_cols();
    if layer >= k {
        return Err(MltError::Domain(format!("layer {layer} outside 0..{k}")));
    }
    if n_perm == 0 || a.n_rows() == 0 {
        return Err(MltError::Domain(
            "permutation test needs rows and iterations".into(),
        ));
    }
    let center = 1.0 / k as f64;
    let m = a.matrix();
    let observed = a.column_mean(layer);
    let null: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, Stream::Permutation, t as u64);
            // a row permutation moves a uniformly chosen component to `layer`
            let s: f64 = m
                .rows()
                .into_iter()
                .map(|row| row[rng.gen_range(0..k)])
                .sum();
            s / m.nrows() as f64
        })
        .collect();
    let obs_dev = (observed - center).abs();
    let hits = null
        .iter()
        .filter(|&&s| (s - center).abs() >= obs_dev - TIE_TOL)
        .count();
    Ok(PermutationResult {
        observed,
        p_value: (1 + hits) as f64 / (1 + n_perm) as f64,
        null_samples: null,
    })
}

fn follows_order(row: &[f64], order: &[usize]) -> bool {
    order.windows(2).all(|w| row[w[0]] > row[w[1]])
}

/// Fraction of networks whose layer means follow `claimed_order` strictly
/// (descending), against layer labels permuted within each network.
pub fn layer_order_test(
    means: ArrayView2<'_, f64>,
    claimed_order: &[usize],
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult> {
    let l = means.ncols();
    let mut seen = vec![false; l];
    if claimed_order.len() != l
        || claimed_order
            .iter()
            .any(|&k| k >= l || std::mem::replace(&mut seen[k], true))
    {
        return Err(MltError::Domain(
            "claimed order must be a permutation of the layers".into(),
        ));
    }
    if means.nrows() == 0 || n_perm == 0 {
        return Err(MltError::Domain(
            "layer order test needs networks and iterations".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = means.rows().into_iter().map(|r| r.to_vec()).collect();
    let frac = |hits: usize| hits as f64 / rows.len() as f64;
    let observed = frac(
        rows.iter()
            .filter(|r| follows_order(r, claimed_order))
            .count(),
    );
    let null: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, Stream::Permutation, t as u64);
            let mut hits = 0;
            for r in &rows {
                let mut p = r.clone();
                p.shuffle(&mut rng);
                hits += usize::from(follows_order(&p, claimed_order));
            }
            frac(hits)
        })
        .collect();
    Ok(PermutationResult::greater(observed, null))
}

/// Permutation null for NMI: rows of `b` are reassigned to random nodes.
pub fn nmi_permutation_test(
    a: &SoftAssignment,
    b: &SoftAssignment,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult> {
    let observed = nmi_soft(a, b)?;
    let n = b.n_rows();
    let null = (0..n_perm)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, Stream::Permutation, t as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let shuffled = SoftAssignment {
                matrix: b.matrix.select(Axis(0), &idx),
            };
            nmi_soft(a, &shuffled)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PermutationResult::greater(observed, null))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u: f64,
    /// P(U >= observed) when `a` is not stochastically greater than `b`.
    pub p_value: f64,
    pub exact: bool,
}

/// Exact rank-sum tail by dynamic programming over doubled midranks.
fn exact_upper_tail(ranks2: &[usize], na: usize, observed2: usize) -> f64 {
    let max_sum: usize = ranks2.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0f64; max_sum + 1]; na + 1];
    ways[0][0] = 1.0;
    for &r in ranks2 {
        for k in (1..=na).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let total: f64 = ways[na].iter().sum();
    let tail: f64 = ways[na][observed2..].iter().sum();
    tail / total
}

/// One-sided Mann-Whitney test of "a tends to exceed b". Exact for
/// `n_a + n_b <= 20`, otherwise normal with tie and continuity corrections.
pub fn mann_whitney_one_sided(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(MltError::Domain(
            "Mann-Whitney needs two nonempty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(MltError::Domain("NaN in Mann-Whitney input".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let n = na + nb;
    if n <= 20 {
        let ranks2: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let obs2 = (2.0 * ra).round() as usize;
        return Ok(MannWhitney {
            u,
            p_value: exact_upper_tail(&ranks2, na, obs2),
            exact: true,
        });
    }
    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0;
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_sum += t * t * t - t;
    }
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let mu = naf * nbf / 2.0;
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_sum / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (u - mu - 0.5) / var.sqrt();
        1.0 - Normal::new(0.0, 1.0).expect("unit normal").cdf(z)
    };
    Ok(MannWhitney {
        u,
        p_value: p,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityKind {
    InDegree,
    OutDegree,
    Katz,
    Closeness,
    Betweenness,
}

impl CentralityKind {
    pub const ALL: [CentralityKind; 5] = [
        CentralityKind::InDegree,
        CentralityKind::OutDegree,
        CentralityKind::Katz,
        CentralityKind::Closeness,
        CentralityKind::Betweenness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CentralityKind::InDegree => "in_degree",
            CentralityKind::OutDegree => "out_degree",
            CentralityKind::Katz => "katz",
            CentralityKind::Closeness => "closeness",
            CentralityKind::Betweenness => "betweenness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

fn adjacency_lists(g: &MultiplexGraph, layer: usize, reverse: bool) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); g.n_nodes()];
    for (i, j) in g.edges(layer) {
        if reverse {
            adj[j].push(i);
        } else {
            adj[i].push(j);
        }
    }
    adj
}

/// Perron root of a nonnegative adjacency via power iteration on `A + I`.
pub fn spectral_radius(adj: &[Vec<usize>]) -> f64 {
    let n = adj.len();
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut mu = 0.0;
    for _ in 0..100_000 {
        let mut y = x.clone();
        for (i, out) in adj.iter().enumerate() {
            for &j in out {
                y[j] += x[i];
            }
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let delta = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        let prev = mu;
        mu = norm;
        if delta < 1e-10 && (mu - prev).abs() < 1e-10 {
            break;
        }
    }
    (mu - 1.0).max(0.0)
}

/// Solves `x = alpha A^T x + 1` with `alpha = 0.85 / lambda_max`; acyclic
/// layers (zero spectral radius) use `alpha = 0.85`.
fn katz(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let lambda = spectral_radius(adj);
    let alpha = if lambda > 1e-9 { 0.85 / lambda } else { 0.85 };
    let mut x = vec![1.0; n];
    for _ in 0..100_000 {
        let mut y = vec![1.0; n];
        for (i, out) in adj.iter().enumerate() {
            for &j in out {
                y[j] += alpha * x[i];
            }
        }
        let delta = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        if delta < 1e-12 * x.iter().fold(1.0, |m: f64, v| m.max(v.abs())) {
            break;
        }
    }
    x
}

fn bfs(adj: &[Vec<usize>], s: usize, dist: &mut [i64], order: &mut Vec<usize>) {
    dist.iter_mut().for_each(|d| *d = -1);
    order.clear();
    dist[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        order.push(v);
        for &w in &adj[v] {
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
        }
    }
}

/// Harmonic closeness over incoming distances: `c_j = sum_i 1/d(i, j)`.
fn harmonic_closeness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut c = vec![0.0; n];
    let mut dist = vec![-1i64; n];
    let mut order = Vec::with_capacity(n);
    for s in 0..n {
        bfs(adj, s, &mut dist, &mut order);
        for &t in &order[1..] {
            c[t] += 1.0 / dist[t] as f64;
        }
    }
    c
}

/// Brandes betweenness over ordered pairs, endpoints excluded, unnormalized.
fn betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    let mut dist = vec![-1i64; n];
    let mut order = Vec::with_capacity(n);
    let mut sigma = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for s in 0..n {
        bfs(adj, s, &mut dist, &mut order);
        sigma.iter_mut().for_each(|v| *v = 0.0);
        sigma[s] = 1.0;
        for &v in &order {
            for &w in &adj[v] {
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        delta.iter_mut().for_each(|v| *v = 0.0);
        for &v in order.iter().rev() {
            for &w in &adj[v] {
                if dist[w] == dist[v] + 1 {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if v != s {
                cb[v] += delta[v];
            }
        }
    }
    cb
}

/// Node centralities of one layer. Katz and closeness measure incoming
/// influence; `Role::Source` evaluates them on the reversed layer.
pub fn centrality(
    g: &MultiplexGraph,
    layer: usize,
    kind: CentralityKind,
    role: Role,
) -> Result<Vec<f64>> {
    if layer >= g.n_layers() {
        return Err(MltError::Domain(format!(
            "layer {layer} outside 0..{}",
            g.n_layers()
        )));
    }
    let n = g.n_nodes();
    let adj = adjacency_lists(g, layer, false);
    Ok(match kind {
        CentralityKind::OutDegree => adj.iter().map(|o| o.len() as f64).collect(),
        CentralityKind::InDegree => {
            let mut d = vec![0.0; n];
            adj.iter().flatten().for_each(|&j| d[j] += 1.0);
            d
        }
        _ if g.n_edges(layer) == 0 => vec![0.0; n],
        CentralityKind::Betweenness => betweenness(&adj),
        CentralityKind::Katz | CentralityKind::Closeness => {
            let adj = if role == Role::Source {
                adjacency_lists(g, layer, true)
            } else {
                adj
            };
            if kind == CentralityKind::Katz {
                katz(&adj)
            } else {
                harmonic_closeness(&adj)
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub n_boot: usize,
    pub n_perm: usize,
    pub seed: u64,
    /// Claimed descending order of the layer means; `None` uses the order
    /// of the pooled means.
    pub claimed_order: Option<Vec<usize>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            n_perm: 1000,
            seed: 0,
            claimed_order: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Correlation {
    pub layer: usize,
    pub parameter: String,
    pub against: String,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowTest {
    pub role: Role,
    pub layer: usize,
    pub result: PermutationResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkAnalysis {
    pub name: String,
    pub layer_stats: Vec<LayerStats>,
    /// NMI of z with the out-degree profile and its permutation null.
    pub nmi_source: Option<PermutationResult>,
    /// NMI of w with the in-degree profile and its permutation null.
    pub nmi_target: Option<PermutationResult>,
    /// Per-node role weights, the data behind layer-mean distributions.
    pub source_roles: Vec<Vec<f64>>,
    pub target_roles: Vec<Vec<f64>>,
    pub source_layer_means: Vec<f64>,
    pub target_layer_means: Vec<f64>,
    pub row_tests: Vec<RowTest>,
    pub correlations: Vec<Correlation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub layer: usize,
    pub parameter: String,
    pub against: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerOrderSummary {
    pub role: Role,
    pub claimed_order: Vec<usize>,
    pub result: PermutationResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub networks: Vec<NetworkAnalysis>,
    pub bootstrap: Vec<BootstrapSummary>,
    /// Present with two or more networks.
    pub layer_order: Vec<LayerOrderSummary>,
}

pub struct NetworkInput<'a> {
    pub name: String,
    pub graph: &'a MultiplexGraph,
    pub params: &'a MltParams,
}

fn role_matrix_means(m: &Array2<f64>) -> Vec<f64> {
    m.mean_axis(Axis(0)).map(|v| v.to_vec()).unwrap_or_default()
}

fn nmi_against_profile(
    roles: &Array2<f64>,
    g: &MultiplexGraph,
    dir: Direction,
    n_perm: usize,
    seed: u64,
) -> Result<Option<PermutationResult>> {
    let prof = degree_profile(g, dir);
    let keep = &prof.active;
    if keep.iter().filter(|&&k| k).count() < 2 {
        return Ok(None);
    }
    let a = SoftAssignment::new(roles.clone())?.select_rows(keep);
    let b = SoftAssignment::new(prof.normalized.clone())?;
    let b = b.select_rows(keep);
    nmi_permutation_test(&a, &b, n_perm, seed).map(Some)
}

/// Correlations of a bias column with every centrality.
fn bias_correlations(
    g: &MultiplexGraph,
    bias: &Array2<f64>,
    parameter: &str,
    role: Role,
    out: &mut Vec<Correlation>,
) -> Result<()> {
    for l in 0..g.n_layers() {
        let x = bias.column(l).to_vec();
        for kind in CentralityKind::ALL {
            let c = centrality(g, l, kind, role)?;
            out.push(Correlation {
                layer: l,
                parameter: parameter.into(),
                against: kind.name().into(),
                spearman: spearman(&x, &c).ok(),
                pearson: pearson(&x, &c).ok(),
            });
        }
    }
    Ok(())
}

fn analyze_network(
    input: &NetworkInput<'_>,
    cfg: &AnalysisConfig,
    index: usize,
) -> Result<NetworkAnalysis> {
    let (g, p) = (input.graph, input.params);
    if p.n_nodes() != g.n_nodes() || p.n_layers() != g.n_layers() {
        return Err(MltError::Shape(format!(
            "params are {}x{} but graph is {}x{}",
            p.n_nodes(),
            p.n_layers(),
            g.n_nodes(),
            g.n_layers()
        )));
    }
    let z = p.z();
    let w = p.w();
    let seed = cfg.seed.wrapping_add(1_000_003 * index as u64);
    let mut row_tests = Vec::new();
    if g.n_layers() >= 2 {
        let (za, wa) = (
            SoftAssignment::new(z.clone())?,
            SoftAssignment::new(w.clone())?,
        );
        for l in 0..g.n_layers() {
            row_tests.push(RowTest {
                role: Role::Source,
                layer: l,
                result: permute_rows_test(&za, l, cfg.n_perm, seed ^ (2 * l as u64 + 1))?,
            });
            row_tests.push(RowTest {
                role: Role::Target,
                layer: l,
                result: permute_rows_test(&wa, l, cfg.n_perm, seed ^ (2 * l as u64 + 2))?,
            });
        }
    }
    let mut correlations = Vec::new();
    bias_correlations(g, &p.beta, "beta", Role::Source, &mut correlations)?;
    bias_correlations(g, &p.gamma, "gamma", Role::Target, &mut correlations)?;
    let (nmi_source, nmi_target) = if g.n_layers() >= 2 {
        (
            nmi_against_profile(&z, g, Direction::Out, cfg.n_perm, seed)?,
            nmi_against_profile(&w, g, Direction::In, cfg.n_perm, seed.wrapping_add(1))?,
        )
    } else {
        (None, None)
    };
    Ok(NetworkAnalysis {
        name: input.name.clone(),
        layer_stats: (0..g.n_layers()).map(|l| layer_stats(g, l)).collect(),
        nmi_source,
        nmi_target,
        source_layer_means: role_matrix_means(&z),
        target_layer_means: role_matrix_means(&w),
        source_roles: z.rows().into_iter().map(|r| r.to_vec()).collect(),
        target_roles: w.rows().into_iter().map(|r| r.to_vec()).collect(),
        row_tests,
        correlations,
    })
}

fn descending_order(means: &Array2<f64>) -> Vec<usize> {
    let pooled = means.mean_axis(Axis(0)).expect("at least one network");
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[b].total_cmp(&pooled[a]));
    order
}

/// Runs the full battery over a set of fitted networks with equal layer
/// counts.
pub fn analyze(inputs: &[NetworkInput<'_>], cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    if inputs.is_empty() {
        return Err(MltError::Domain("nothing to analyze".into()));
    }
    let n_layers = inputs[0].graph.n_layers();
    if inputs.iter().any(|i| i.graph.n_layers() != n_layers) {
        return Err(MltError::Shape("networks differ in layer count".into()));
    }
    let networks = inputs
        .iter()
        .enumerate()
        .map(|(k, inp)| analyze_network(inp, cfg, k))
        .collect::<Result<Vec<_>>>()?;

    let mut bootstrap = Vec::new();
    for (parameter, kind) in [
        ("beta", CentralityKind::OutDegree),
        ("gamma", CentralityKind::InDegree),
    ] {
        for l in 0..n_layers {
            let mut data = Vec::new();
            for inp in inputs {
                let bias = if parameter == "beta" {
                    &inp.params.beta
                } else {
                    &inp.params.gamma
                };
                let role = if parameter == "beta" {
                    Role::Source
                } else {
                    Role::Target
                };
                if inp.graph.n_nodes() >= 3 {
                    data.push((
                        bias.column(l).to_vec(),
                        centrality(inp.graph, l, kind, role)?,
                    ));
                }
            }
            if data.is_empty() {
                continue;
            }
            let stream = (l * 2 + usize::from(parameter == "gamma")) as u64;
            let b = bootstrap_mean_corr(
                &data,
                cfg.n_boot,
                BootstrapMode::Within,
                cfg.seed ^ (stream << 32),
            )?;
            bootstrap.push(BootstrapSummary {
                layer: l,
                parameter: parameter.into(),
                against: kind.name().into(),
                mean: b.means.iter().sum::<f64>() / b.means.len().max(1) as f64,
                ci_low: b.ci_low,
                ci_high: b.ci_high,
                skipped: b.skipped,
            });
        }
    }

    let mut layer_order = Vec::new();
    if inputs.len() >= 2 && n_layers >= 2 {
        for role in [Role::Source, Role::Target] {
            let mut means = Array2::zeros((networks.len(), n_layers));
            for (k, na) in networks.iter().enumerate() {
                let m = if role == Role::Source {
                    &na.source_layer_means
                } else {
                    &na.target_layer_means
                };
                means
                    .row_mut(k)
                    .assign(&ndarray::ArrayView1::from(m.as_slice()));
            }
            let order = cfg
                .claimed_order
                .clone()
                .unwrap_or_else(|| descending_order(&means));
            let seed = cfg.seed ^ if role == Role::Source { 0x5eed } else { 0x7a76 };
            layer_order.push(LayerOrderSummary {
                role,
                result: layer_order_test(means.view(), &order, cfg.n_perm, seed)?,
                claimed_order: order,
            });
        }
    }
    Ok(AnalysisReport {
        networks,
        bootstrap,
        layer_order,
    })
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Source => "source",
        Role::Target => "target",
    }
}

impl AnalysisReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Long format `network,layer,statistic,value`; layer is empty for
    /// network-wide rows and 1-based otherwise.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("network,layer,statistic,value\n");
        let mut row = |net: &str, layer: Option<usize>, stat: &str, v: f64| {
            let l = layer.map(|l| (l + 1).to_string()).unwrap_or_default();
            out.push_str(&format!("{net},{l},{stat},{v}\n"));
        };
        for na in &self.networks {
            let net = na.name.as_str();
            for (l, s) in na.layer_stats.iter().enumerate() {
                row(net, Some(l), "reciprocity", s.reciprocity);
                row(net, Some(l), "transitivity", s.transitivity);
                row(net, Some(l), "clustering", s.clustering);
                row(net, Some(l), "avg_degree", s.avg_degree);
                row(net, Some(l), "n_edges", s.n_edges as f64);
            }
            for (name, r) in [
                ("nmi_source", &na.nmi_source),
                ("nmi_target", &na.nmi_target),
            ] {
                if let Some(r) = r {
                    row(net, None, name, r.observed);
                    row(net, None, &format!("{name}_null_mean"), r.null_mean());
                    row(net, None, &format!("{name}_p"), r.p_value);
                }
            }
            for (l, (s, t)) in na
                .source_layer_means
                .iter()
                .zip(&na.target_layer_means)
                .enumerate()
            {
                row(net, Some(l), "source_role_mean", *s);
                row(net, Some(l), "target_role_mean", *t);
            }
            for rt in &na.row_tests {
                row(
                    net,
                    Some(rt.layer),
                    &format!("{}_row_perm_p", role_name(rt.role)),
                    rt.result.p_value,
                );
            }
            for c in &na.correlations {
                if let Some(v) = c.spearman {
                    row(
                        net,
                        Some(c.layer),
                        &format!("spearman_{}_{}", c.parameter, c.against),
                        v,
                    );
                }
                if let Some(v) = c.pearson {
                    row(
                        net,
                        Some(c.layer),
                        &format!("pearson_{}_{}", c.parameter, c.against),
                        v,
                    );
                }
            }
        }
        for b in &self.bootstrap {
            let stat = format!("boot_spearman_{}_{}", b.parameter, b.against);
            row("all", Some(b.layer), &format!("{stat}_mean"), b.mean);
            row("all", Some(b.layer), &format!("{stat}_ci_low"), b.ci_low);
            row("all", Some(b.layer), &format!("{stat}_ci_high"), b.ci_high);
        }
        for lo in &self.layer_order {
            row(
                "all",
                None,
                &format!("{}_layer_order_fraction", role_name(lo.role)),
                lo.result.observed,
            );
            row(
                "all",
                None,
                &format!("{}_layer_order_p", role_name(lo.role)),
                lo.result.p_value,
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

//! Test-only oracles. Nothing here calls into the likelihood implementation.
#![allow(dead_code)]

use mlt::graph::MultiplexGraph;
use mlt::model::{MaskPlan, MltParams, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn naive_softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn naive_softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// Every level of the hierarchy, coarsest first, built by pair sums.
fn naive_levels(finest: &[f64]) -> Vec<Vec<f64>> {
    let mut levels = vec![finest.to_vec()];
    while levels[0].len() > 1 {
        let f = &levels[0];
        let c: Vec<f64> = (0..f.len() / 2).map(|k| f[2 * k] + f[2 * k + 1]).collect();
        levels.insert(0, c);
    }
    levels
}

/// Log-odds of one dyad straight from the model definition.
pub fn naive_log_odds(p: &MltParams, i: usize, j: usize, l: usize) -> f64 {
    let mut r = p.beta[[i, l]] + p.gamma[[j, l]];
    if p.variant == Variant::Bias {
        return r;
    }
    let zi = naive_softmax(&p.z_logits.row(i).to_vec())[l];
    let wj = naive_softmax(&p.w_logits.row(j).to_vec())[l];
    let s = naive_softplus(p.strength.global_raw);
    if p.variant == Variant::Tradeoff {
        return r + zi * s * wj;
    }
    let pi = naive_softmax(&p.strength.level_logits[l]);
    let ul = naive_levels(&naive_softmax(&p.u_logits[l].row(i).to_vec()));
    let vl = naive_levels(&naive_softmax(&p.v_logits[l].row(j).to_vec()));
    let mut bracket = 0.0;
    for h in 0..=p.depth {
        let dot: f64 = ul[h].iter().zip(&vl[h]).map(|(a, b)| a * b).sum();
        bracket += s * pi[h] * dot;
    }
    r += zi * bracket * wj;
    r
}

/// Dyad-loop evaluation of the normalized Bernoulli loss.
pub fn brute_nll(g: &MultiplexGraph, p: &MltParams, mask: &MaskPlan) -> f64 {
    let n = g.n_nodes();
    let mut total = 0.0;
    for l in 0..g.n_layers() {
        for i in 0..n {
            for j in 0..n {
                if i == j || mask.is_hidden(l, i, j) {
                    continue;
                }
                let r = naive_log_odds(p, i, j, l);
                if g.has_edge(l, i, j) {
                    total += r;
                }
                total -= naive_softplus(r);
            }
        }
    }
    -total / (n as f64 * (n as f64 - 1.0))
}

pub fn random_graph(n: usize, layers: usize, density: f64, rng: &mut impl Rng) -> MultiplexGraph {
    let mut g = MultiplexGraph::new(n, layers);
    for l in 0..layers {
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(density) {
                    g.add_edge(l, i, j).unwrap();
                }
            }
        }
    }
    g
}

pub fn random_mask(g: &MultiplexGraph, frac: f64, rng: &mut impl Rng) -> MaskPlan {
    let n = g.n_nodes();
    let mut m = MaskPlan::empty(g.n_layers());
    for l in 0..g.n_layers() {
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(frac) {
                    m.hide(l, i, j).unwrap();
                }
            }
        }
    }
    m
}

/// Random full-variant instance with non-trivial strengths.
pub fn random_instance(
    seed: u64,
    n: usize,
    layers: usize,
    depth: usize,
    variant: Variant,
) -> (MultiplexGraph, MltParams, MaskPlan) {
    let mut r = rng(seed);
    let mut p = MltParams::random(n, layers, depth, variant, &mut r);
    p.beta.mapv_inplace(|_| r.gen_range(-1.5..0.5));
    p.gamma.mapv_inplace(|_| r.gen_range(-1.5..0.5));
    p.strength.global_raw = r.gen_range(-1.0..2.5);
    let density = r.gen_range(0.1..0.5);
    let g = random_graph(n, layers, density, &mut r);
    let mask = random_mask(&g, 0.1, &mut r);
    (g, p, mask)
}

/// Central finite differences over every active coordinate.
pub fn finite_difference<F: Fn(&MltParams) -> f64>(p: &MltParams, step: f64, f: F) -> Vec<f64> {
    let base = p.flatten();
    let mut q = p.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut x = base.clone();
        x[k] = base[k] + step;
        q.assign_flat(&x);
        let up = f(&q);
        x[k] = base[k] - step;
        q.assign_flat(&x);
        let down = f(&q);
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over coordinates.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Brute-force ROC AUC by pair enumeration, ties worth 1/2.
pub fn pair_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut u = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                u += 1.0;
            } else if p == q {
                u += 0.5;
            }
        }
    }
    u / (pos.len() * neg.len()) as f64
}

/// Hard-partition NMI from the contingency table, `2I / (H_a + H_b)`.
pub fn contingency_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let ra: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cb: Vec<f64> = (0..kb).map(|k| table.iter().map(|r| r[k]).sum()).collect();
    let ent = |c: &[f64]| -> f64 {
        c.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -(x / n) * (x / n).ln())
            .sum()
    };
    let (ha, hb) = (ent(&ra), ent(&cb));
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let nij = table[x][y];
            if nij > 0.0 {
                mi += nij / n * (n * nij / (ra[x] * cb[y])).ln();
            }
        }
    }
    if ha == 0.0 || hb == 0.0 {
        0.0
    } else {
        2.0 * mi / (ha + hb)
    }
}

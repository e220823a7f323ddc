use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MultiplexGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub reciprocity: f64,
    /// Global transitivity of the undirected projection.
    pub transitivity: f64,
    /// Mean local clustering of the undirected projection; nodes with fewer
    /// than two neighbours contribute 0.
    pub clustering: f64,
    /// Directed edges per node.
    pub avg_degree: f64,
    pub n_edges: usize,
}

pub fn layer_stats(g: &MultiplexGraph, layer: usize) -> LayerStats {
    let n = g.n_nodes();
    let m = g.n_edges(layer);
    let reciprocated = g
        .edges(layer)
        .filter(|&(i, j)| g.has_edge(layer, j, i))
        .count();
    let reciprocity = if m == 0 {
        0.0
    } else {
        reciprocated as f64 / m as f64
    };

    let mut und = vec![vec![false; n]; n];
    for (i, j) in g.edges(layer) {
        und[i][j] = true;
        und[j][i] = true;
    }
    let nbrs: Vec<Vec<usize>> = und
        .iter()
        .map(|row| (0..n).filter(|&j| row[j]).collect())
        .collect();

    let mut closed_total = 0usize;
    let mut triples_total = 0usize;
    let mut clustering_sum = 0.0;
    for nb in &nbrs {
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut links = 0usize;
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if und[x][y] {
                    links += 1;
                }
            }
        }
        let pairs = d * (d - 1) / 2;
        closed_total += links;
        triples_total += pairs;
        clustering_sum += links as f64 / pairs as f64;
    }
    // closed_total counts each triangle three times, once per centre
    let transitivity = if triples_total == 0 {
        0.0
    } else {
        closed_total as f64 / triples_total as f64
    };
    LayerStats {
        reciprocity,
        transitivity,
        clustering: if n == 0 {
            0.0
        } else {
            clustering_sum / n as f64
        },
        avg_degree: if n == 0 { 0.0 } else { m as f64 / n as f64 },
        n_edges: m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone)]
pub struct DegreeProfile {
    /// N x L raw degrees.
    pub raw: Array2<usize>,
    /// Row-normalized layer proportions; all-zero for inactive rows.
    pub normalized: Array2<f64>,
    /// False for nodes with zero total degree in this direction.
    pub active: Vec<bool>,
}

pub fn degree_profile(g: &MultiplexGraph, direction: Direction) -> DegreeProfile {
    let (n, l) = (g.n_nodes(), g.n_layers());
    let mut raw = Array2::zeros((n, l));
    for layer in 0..l {
        for (i, j) in g.edges(layer) {
            let v = match direction {
                Direction::Out => i,
                Direction::In => j,
            };
            raw[[v, layer]] += 1;
        }
    }
    let mut normalized = Array2::zeros((n, l));
    let mut active = vec![false; n];
    for v in 0..n {
        let total: usize = raw.row(v).sum();
        if total > 0 {
            active[v] = true;
            for layer in 0..l {
                normalized[[v, layer]] = raw[[v, layer]] as f64 / total as f64;
            }
        }
    }
    DegreeProfile {
        raw,
        normalized,
        active,
    }
}

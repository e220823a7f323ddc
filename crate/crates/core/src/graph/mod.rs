//! Directed binary multiplex networks.
//!
//! A [`MultiplexGraph`] holds `L` edge layers over a shared node set of size
//! `N`. Edges are ordered pairs with set semantics per layer and no
//! self-loops. Node identity is a dense index; external string labels are
//! optional and carried through every transformation.

mod io;
mod stats;

pub use io::{
    format_graph, load_edge_list, load_graph, parse_edge_list, save_graph, sidecar_path, GraphMeta,
    LoadReport,
};
pub use stats::{degree_profile, layer_stats, DegreeProfile, Direction, LayerStats};

use std::collections::BTreeSet;

use ndarray::Array2;
use petgraph::graph::DiGraph;

use crate::error::{MltError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplexGraph {
    n_nodes: usize,
    layers: Vec<BTreeSet<(usize, usize)>>,
    labels: Option<Vec<String>>,
}

impl MultiplexGraph {
    pub fn new(n_nodes: usize, n_layers: usize) -> Self {
        Self {
            n_nodes,
            layers: vec![BTreeSet::new(); n_layers],
            labels: None,
        }
    }

    /// Builds a graph from `(layer, src, dst)` triples, rejecting self-loops
    /// and out-of-range endpoints. Duplicates collapse.
    pub fn from_edges<I>(n_nodes: usize, n_layers: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize)>,
    {
        let mut g = Self::new(n_nodes, n_layers);
        for (l, i, j) in edges {
            g.add_edge(l, i, j)?;
        }
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_nodes {
            return Err(MltError::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Inserts `i -> j` in `layer`; returns false if it was already present.
    pub fn add_edge(&mut self, layer: usize, i: usize, j: usize) -> Result<bool> {
        if layer >= self.layers.len() {
            return Err(MltError::Domain(format!(
                "layer {layer} outside [0, {})",
                self.layers.len()
            )));
        }
        if i >= self.n_nodes || j >= self.n_nodes {
            return Err(MltError::Domain(format!(
                "edge ({i}, {j}) outside [0, {})",
                self.n_nodes
            )));
        }
        if i == j {
            return Err(MltError::Domain(format!("self-loop at node {i}")));
        }
        Ok(self.layers[layer].insert((i, j)))
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn has_edge(&self, layer: usize, i: usize, j: usize) -> bool {
        self.layers[layer].contains(&(i, j))
    }

    pub fn edges(&self, layer: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers[layer].iter().copied()
    }

    pub fn n_edges(&self, layer: usize) -> usize {
        self.layers[layer].len()
    }

    pub fn total_edges(&self) -> usize {
        self.layers.iter().map(BTreeSet::len).sum()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// External identifier of node `i`, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Dense 0/1 adjacency matrix of one layer.
    pub fn adjacency(&self, layer: usize) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_nodes, self.n_nodes));
        for &(i, j) in &self.layers[layer] {
            a[[i, j]] = 1.0;
        }
        a
    }

    /// Out-neighbour lists of one layer, sorted.
    pub fn out_neighbors(&self, layer: usize) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(i, j) in &self.layers[layer] {
            adj[i].push(j);
        }
        adj
    }

    /// The same layer with every edge reversed.
    pub fn reversed_layer(&self, layer: usize) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(i, j) in &self.layers[layer] {
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Induced subgraph on `nodes` (in the given order), re-indexed densely.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.n_nodes];
        for (new, &old) in nodes.iter().enumerate() {
            index[old] = new;
        }
        let layers = self
            .layers
            .iter()
            .map(|edges| {
                edges
                    .iter()
                    .filter_map(|&(i, j)| {
                        let (a, b) = (index[i], index[j]);
                        (a != usize::MAX && b != usize::MAX).then_some((a, b))
                    })
                    .collect()
            })
            .collect();
        Self {
            n_nodes: nodes.len(),
            layers,
            labels: self
                .labels
                .as_ref()
                .map(|l| nodes.iter().map(|&i| l[i].clone()).collect()),
        }
    }
}

/// Restricts `g` to the largest strongly connected component of the
/// layer-collapsed directed graph. Ties between equally large components go
/// to the one holding the smallest node index. Kept nodes retain their
/// relative order.
pub fn restrict_to_scc(g: &MultiplexGraph) -> MultiplexGraph {
    let n = g.n_nodes();
    if n == 0 {
        return g.clone();
    }
    let mut collapsed = DiGraph::<(), ()>::with_capacity(n, g.total_edges());
    let nodes: Vec<_> = (0..n).map(|_| collapsed.add_node(())).collect();
    let union: BTreeSet<(usize, usize)> = (0..g.n_layers()).flat_map(|l| g.edges(l)).collect();
    for (i, j) in union {
        collapsed.add_edge(nodes[i], nodes[j], ());
    }
    let best = petgraph::algo::kosaraju_scc(&collapsed)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|v| v.index()).collect();
            c.sort_unstable();
            c
        })
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("nonempty graph has at least one component");
    g.induced(&best)
}

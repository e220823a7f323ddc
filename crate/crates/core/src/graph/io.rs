//! Edge-list TSV (`src<TAB>dst<TAB>layer`, 1-based layer, `#` comments) and
//! the JSON metadata sidecar that pins node order and layer count.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MultiplexGraph;
use crate::error::{MltError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub n_nodes: usize,
    pub n_layers: usize,
    /// Index -> label. `None` means the TSV holds raw integer indices.
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub graph: MultiplexGraph,
    pub self_loops_dropped: usize,
    pub duplicates: usize,
}

pub fn sidecar_path(edges: &Path) -> PathBuf {
    let mut s = edges.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Reads an edge list, assigning node indices by first appearance.
pub fn load_edge_list(path: impl AsRef<Path>, n_layers: usize) -> Result<LoadReport> {
    parse_edge_list(fs::File::open(path)?, n_layers)
}

pub fn parse_edge_list<R: Read>(reader: R, n_layers: usize) -> Result<LoadReport> {
    parse_with(reader, n_layers, None)
}

/// Loads a graph, honouring the metadata sidecar when one sits next to the
/// edge list. Without a sidecar `n_layers` is required.
pub fn load_graph(path: impl AsRef<Path>, n_layers: Option<usize>) -> Result<LoadReport> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    if meta_path.exists() {
        let meta: GraphMeta = serde_json::from_reader(fs::File::open(&meta_path)?)?;
        if let Some(l) = n_layers {
            if l != meta.n_layers {
                return Err(MltError::Shape(format!(
                    "requested {l} layers, sidecar declares {}",
                    meta.n_layers
                )));
            }
        }
        let n = meta.n_layers;
        parse_with(fs::File::open(path)?, n, Some(meta))
    } else {
        let n = n_layers.ok_or_else(|| {
            MltError::Domain(format!(
                "no sidecar {} and no layer count given",
                meta_path.display()
            ))
        })?;
        load_edge_list(path, n)
    }
}

enum NodeIndex {
    FirstSeen {
        map: HashMap<String, usize>,
        labels: Vec<String>,
    },
    Fixed {
        map: HashMap<String, usize>,
        n_nodes: usize,
        labels: Option<Vec<String>>,
    },
}

impl NodeIndex {
    fn resolve(&mut self, token: &str, line: usize) -> Result<usize> {
        match self {
            NodeIndex::FirstSeen { map, labels } => {
                let next = labels.len();
                Ok(*map.entry(token.to_string()).or_insert_with(|| {
                    labels.push(token.to_string());
                    next
                }))
            }
            NodeIndex::Fixed { map, n_nodes, .. } => {
                if let Some(&i) = map.get(token) {
                    return Ok(i);
                }
                if map.is_empty() {
                    if let Ok(i) = token.parse::<usize>() {
                        if i < *n_nodes {
                            return Ok(i);
                        }
                    }
                }
                Err(MltError::Parse {
                    line,
                    msg: format!("node '{token}' not declared in sidecar"),
                })
            }
        }
    }
}

fn parse_with<R: Read>(reader: R, n_layers: usize, meta: Option<GraphMeta>) -> Result<LoadReport> {
    let mut index = match meta {
        None => NodeIndex::FirstSeen {
            map: HashMap::new(),
            labels: Vec::new(),
        },
        Some(m) => NodeIndex::Fixed {
            map: m
                .labels
                .iter()
                .flatten()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect(),
            n_nodes: m.n_nodes,
            labels: m.labels,
        },
    };
    let mut triples = Vec::new();
    let mut self_loops = 0;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = t.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(MltError::Parse {
                line: lineno,
                msg: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        let layer: i64 = cols[2].parse().map_err(|_| MltError::Parse {
            line: lineno,
            msg: format!("layer '{}' is not an integer", cols[2]),
        })?;
        if layer < 1 || layer as usize > n_layers {
            return Err(MltError::LayerRange {
                line: lineno,
                layer,
                n_layers,
            });
        }
        let src = index.resolve(cols[0], lineno)?;
        let dst = index.resolve(cols[1], lineno)?;
        if src == dst {
            self_loops += 1;
            continue;
        }
        triples.push((layer as usize - 1, src, dst));
    }
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop rows");
    }
    let (n_nodes, labels) = match index {
        NodeIndex::FirstSeen { labels, .. } => (labels.len(), Some(labels)),
        NodeIndex::Fixed {
            n_nodes, labels, ..
        } => (n_nodes, labels),
    };
    let total = triples.len();
    let mut graph = MultiplexGraph::from_edges(n_nodes, n_layers, triples)?;
    if let Some(l) = labels {
        graph = graph.with_labels(l)?;
    }
    let duplicates = total - graph.total_edges();
    Ok(LoadReport {
        graph,
        self_loops_dropped: self_loops,
        duplicates,
    })
}

/// Edge-list TSV and sidecar JSON for `g`.
pub fn format_graph(g: &MultiplexGraph) -> Result<(String, String)> {
    let mut out = String::from("# src\tdst\tlayer\n");
    for l in 0..g.n_layers() {
        for (i, j) in g.edges(l) {
            out.push_str(&format!("{}\t{}\t{}\n", g.label(i), g.label(j), l + 1));
        }
    }
    let meta = GraphMeta {
        n_nodes: g.n_nodes(),
        n_layers: g.n_layers(),
        labels: g.labels().map(<[String]>::to_vec),
    };
    Ok((out, serde_json::to_string_pretty(&meta)?))
}

/// Writes the edge list plus its metadata sidecar.
pub fn save_graph(g: &MultiplexGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (edges, meta) = format_graph(g)?;
    fs::File::create(path)?.write_all(edges.as_bytes())?;
    fs::write(sidecar_path(path), meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcribes_worked_example() {
        let r = parse_edge_list("a b 1\nb a 1\na c 2\n".as_bytes(), 2).unwrap();
        let g = r.graph;
        assert_eq!((g.n_nodes(), g.n_layers()), (3, 2));
        assert_eq!(g.edges(0).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert_eq!(g.edges(1).collect::<Vec<_>>(), vec![(0, 2)]);
        assert_eq!(g.labels().unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn drops_self_loops_and_duplicates() {
        let r = parse_edge_list("# header\na a 1\na\tb\t1\na b 1\n\n".as_bytes(), 1).unwrap();
        assert_eq!(r.self_loops_dropped, 1);
        assert_eq!(r.duplicates, 1);
        assert_eq!(r.graph.edges(0).collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_edge_list("a b 1\na b\n".as_bytes(), 1) {
            Err(MltError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_edge_list("a b x\n".as_bytes(), 1) {
            Err(MltError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn layer_out_of_range() {
        assert!(matches!(
            parse_edge_list("a b 3\n".as_bytes(), 2),
            Err(MltError::LayerRange { layer: 3, .. })
        ));
        assert!(matches!(
            parse_edge_list("a b 0\n".as_bytes(), 2),
            Err(MltError::LayerRange { layer: 0, .. })
        ));
    }

    #[test]
    fn round_trip_with_isolated_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        let g = MultiplexGraph::from_edges(5, 2, [(0, 3, 1), (1, 1, 3), (1, 0, 4)]).unwrap();
        save_graph(&g, &p).unwrap();
        assert_eq!(load_graph(&p, None).unwrap().graph, g);

        let labelled = g
            .clone()
            .with_labels(["e", "d", "c", "b", "a"].map(String::from).to_vec())
            .unwrap();
        save_graph(&labelled, &p).unwrap();
        let back = load_graph(&p, Some(2)).unwrap().graph;
        assert_eq!(back, labelled);
        assert_eq!(load_graph(&p, None).unwrap().graph, back);
    }
}

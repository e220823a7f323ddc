use std::path::{Path, PathBuf};

use anyhow::anyhow;
use mlt::analysis::{analyze as run_analysis, NetworkInput};
use mlt::config::RunConfig;
use mlt::eval::{evaluate_cv, make_folds, CvOptions};
use mlt::graph::{format_graph, load_graph, restrict_to_scc, MultiplexGraph};
use mlt::model::{sample_network, MaskPlan, MltParams, Variant};
use mlt::rng::{stream_rng, Stream};
use mlt::synth::{make_params, SynthSpec};
use mlt::train::multi_restart_fit;
use mlt::MltError;

use crate::output::{config_hash, Outputs};
use crate::{AnalyzeArgs, EvalArgs, FitArgs, GraphInput, SampleArgs};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub source: anyhow::Error,
}

/// 2 usage or spec, 3 parse, 4 numeric, 5 I/O.
fn exit_code(e: &MltError) -> u8 {
    match e {
        MltError::Parse { .. } | MltError::LayerRange { .. } | MltError::Json(_) => 3,
        MltError::Spec(_) | MltError::Shape(_) | MltError::Domain(_) => 2,
        MltError::Divergence(_)
        | MltError::InsufficientNonEdges { .. }
        | MltError::AllRestartsFailed(_)
        | MltError::Degenerate(_) => 4,
        MltError::Io(_) => 5,
    }
}

impl From<MltError> for CliError {
    fn from(e: MltError) -> Self {
        Self {
            code: exit_code(&e),
            source: e.into(),
        }
    }
}

trait Context<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> Context<T> for mlt::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|e| {
            let code = exit_code(&e);
            CliError {
                code,
                source: anyhow::Error::from(e).context(path.display().to_string()),
            }
        })
    }
}

type CliResult = Result<(), CliError>;

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::from_json_file(p).at(p),
        None => Ok(RunConfig::default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(MltError::from)
        .at(path)?;
    serde_json::from_str(&text).map_err(MltError::from).at(path)
}

/// Loads an edge list and keeps its largest strongly connected component.
fn load_network(edges: &Path, layers: Option<usize>) -> Result<MultiplexGraph, CliError> {
    let report = load_graph(edges, layers).at(edges)?;
    if report.self_loops_dropped > 0 || report.duplicates > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            edges.display(),
            report.self_loops_dropped,
            report.duplicates
        );
    }
    let g = restrict_to_scc(&report.graph);
    if g.n_nodes() < report.graph.n_nodes() {
        log::info!(
            "{}: kept {} of {} nodes in the largest strongly connected component",
            edges.display(),
            g.n_nodes(),
            report.graph.n_nodes()
        );
    }
    if g.n_nodes() < 2 {
        return Err(MltError::Domain(format!(
            "{}: largest strongly connected component has {} node(s)",
            edges.display(),
            g.n_nodes()
        ))
        .into());
    }
    Ok(g)
}

fn network_name(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "network".into())
}

fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("values serialize");
    s.push(b'\n');
    s
}

pub fn fit(a: &FitArgs) -> CliResult {
    let GraphInput { edges, layers } = &a.input;
    let mut cfg = load_config(a.run.config.as_ref())?;
    if let Some(s) = a.run.seed {
        cfg.train.seed = s;
    }
    if let Some(r) = a.restarts {
        cfg.train.restarts = r;
    }
    cfg.validate()?;
    let g = load_network(edges, *layers)?;
    let res = multi_restart_fit(&g, a.variant, &cfg.train, &MaskPlan::empty(g.n_layers()))?;
    log::info!(
        "best restart {} loss {} after {} steps",
        res.restart_index,
        res.final_loss,
        res.steps
    );
    let mut out = Outputs::new(&a.run.out);
    out.add("params.json", json(&res.params));
    out.add("trace.csv", res.trace_csv());
    let mut inputs = vec![edges.clone()];
    inputs.extend(a.run.config.clone());
    out.commit(
        "fit",
        config_hash(&(&cfg, a.variant)),
        vec![cfg.train.seed],
        &inputs,
    )
}

pub fn sample(a: &SampleArgs) -> CliResult {
    let seed = a.seed.unwrap_or(0);
    let mut out = Outputs::new(&a.out);
    let (params, input, hash) = match (&a.spec, &a.params) {
        (Some(path), _) => {
            let mut spec: SynthSpec = read_json(path)?;
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            let p = make_params(&spec)?;
            out.add("params.json", json(&p));
            let hash = config_hash(&spec);
            (p, path.clone(), hash)
        }
        (None, Some(path)) => {
            let p: MltParams = read_json(path)?;
            p.check().at(path)?;
            let hash = config_hash(&(&p, seed));
            (p, path.clone(), hash)
        }
        (None, None) => {
            return Err(CliError {
                code: 2,
                source: anyhow!("one of --spec or --params is required"),
            })
        }
    };
    let g = sample_network(&params, &mut stream_rng(seed, Stream::Sample, 0));
    let (tsv, meta) = format_graph(&g)?;
    out.add("edges.tsv", tsv);
    out.add("edges.tsv.meta.json", meta);
    out.commit("sample", hash, vec![seed], &[input])
}

pub fn eval(a: &EvalArgs) -> CliResult {
    let GraphInput { edges, layers } = &a.input;
    let mut cfg = load_config(a.run.config.as_ref())?;
    if let Some(s) = a.run.seed {
        cfg.train.seed = s;
    }
    if let Some(r) = a.restarts {
        cfg.train.restarts = r;
    }
    if let Some(f) = a.folds {
        cfg.eval.n_folds = f;
    }
    if let Some(k) = a.neg_sets {
        cfg.eval.n_neg_sets = k;
    }
    cfg.validate()?;
    let g = load_network(edges, *layers)?;
    let plan = make_folds(&g, cfg.eval.n_folds, cfg.train.seed)?;
    let opts = CvOptions {
        n_neg_sets: cfg.eval.n_neg_sets,
        keep_params: false,
        curves: a.curves,
        network: network_name(edges),
    };
    let report = evaluate_cv(
        &g,
        &[Variant::Bias, Variant::Full],
        &cfg.train,
        &plan,
        &opts,
    )?;
    let mut out = Outputs::new(&a.run.out);
    out.add("metrics.json", json(&report));
    out.add("metrics.csv", report.to_csv());
    if a.curves {
        out.add("curves.csv", report.curves_csv());
    }
    let mut inputs = vec![edges.clone()];
    inputs.extend(a.run.config.clone());
    out.commit("eval", config_hash(&cfg), vec![cfg.train.seed], &inputs)
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult {
    if a.edges.len() != a.params.len() {
        return Err(CliError {
            code: 2,
            source: anyhow!(
                "{} edge lists but {} parameter files",
                a.edges.len(),
                a.params.len()
            ),
        });
    }
    let mut cfg = load_config(a.config.as_ref())?;
    if let Some(s) = a.seed {
        cfg.analysis.seed = s;
    }
    if let Some(order) = &a.order {
        if order.contains(&0) {
            return Err(MltError::Spec("layer order is 1-based".into()).into());
        }
        cfg.analysis.claimed_order = Some(order.iter().map(|k| k - 1).collect());
    }
    cfg.validate()?;
    let mut graphs = Vec::new();
    let mut params = Vec::new();
    for (e, p) in a.edges.iter().zip(&a.params) {
        graphs.push(load_network(e, a.layers)?);
        let q: MltParams = read_json(p)?;
        q.check().at(p)?;
        params.push(q);
    }
    let inputs: Vec<NetworkInput<'_>> = a
        .edges
        .iter()
        .zip(graphs.iter().zip(&params))
        .map(|(e, (graph, params))| NetworkInput {
            name: network_name(e),
            graph,
            params,
        })
        .collect();
    let report = run_analysis(&inputs, &cfg.analysis)?;
    let mut out = Outputs::new(&a.out);
    out.add("analysis.json", json(&report));
    out.add("analysis.csv", report.to_csv());
    let mut paths: Vec<PathBuf> = a.edges.iter().chain(&a.params).cloned().collect();
    paths.extend(a.config.clone());
    out.commit(
        "analyze",
        config_hash(&cfg),
        vec![cfg.analysis.seed],
        &paths,
    )
}

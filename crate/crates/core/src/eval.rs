//! Cross-validated link prediction.
//!
//! Positive dyads of every layer are split into folds. For each fold the
//! fold's positives are masked out of the likelihood, each model variant is
//! refit, and the held-out positives are scored against repeated draws of
//! equally many non-edges. Metrics are averaged over negative sets, then
//! over folds.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{MltError, Result};
use crate::graph::MultiplexGraph;
use crate::model::{log_odds_matrix, MaskPlan, MltParams, Variant};
use crate::rng::{stream_rng, Stream};
use crate::train::{multi_restart_fit, TrainConfig};

pub type Dyad = (usize, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// `folds[layer][fold]`; empty for layers without positives.
    folds: Vec<Vec<Vec<Dyad>>>,
}

impl FoldPlan {
    pub fn n_layers(&self) -> usize {
        self.folds.len()
    }

    pub fn layer_folds(&self, layer: usize) -> &[Vec<Dyad>] {
        &self.folds[layer]
    }

    /// Held-out positives of one layer in one fold (empty when the layer
    /// has fewer folds).
    pub fn test_positives(&self, layer: usize, fold: usize) -> &[Dyad] {
        self.folds[layer].get(fold).map_or(&[], Vec::as_slice)
    }

    pub fn is_excluded(&self, layer: usize) -> bool {
        self.folds[layer].is_empty()
    }

    pub fn mask_for(&self, fold: usize) -> MaskPlan {
        let mut m = MaskPlan::empty(self.n_layers());
        for l in 0..self.n_layers() {
            for &(i, j) in self.test_positives(l, fold) {
                m.hide(l, i, j).expect("edges are off-diagonal");
            }
        }
        m
    }
}

/// Uniform random partition of each layer's positive dyads.
pub fn make_folds(g: &MultiplexGraph, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(MltError::Domain("n_folds must be positive".into()));
    }
    let mut folds = Vec::with_capacity(g.n_layers());
    for l in 0..g.n_layers() {
        let mut pos: Vec<Dyad> = g.edges(l).collect();
        if pos.is_empty() {
            log::warn!("layer {l} has no positives; excluded from evaluation");
            folds.push(Vec::new());
            continue;
        }
        let k = n_folds.min(pos.len());
        if k < n_folds {
            log::warn!("layer {l} has {} positives; using {k} folds", pos.len());
        }
        pos.shuffle(&mut stream_rng(seed, Stream::Folds, l as u64));
        let mut parts = vec![Vec::new(); k];
        for (t, d) in pos.into_iter().enumerate() {
            parts[t % k].push(d);
        }
        folds.push(parts);
    }
    Ok(FoldPlan {
        n_folds,
        seed,
        folds,
    })
}

/// `n_sets` independent draws of `test_positives.len()` distinct non-edges
/// of `layer`.
pub fn negative_sets<R: Rng + ?Sized>(
    g: &MultiplexGraph,
    layer: usize,
    test_positives: &[Dyad],
    n_sets: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Dyad>>> {
    let n = g.n_nodes();
    let k = test_positives.len();
    let available = n * n.saturating_sub(1) - g.n_edges(layer);
    if available < k || available == 0 {
        return Err(MltError::InsufficientNonEdges {
            layer,
            available,
            needed: k,
        });
    }
    let dense = available <= 4 * k;
    let pool: Vec<Dyad> = if dense {
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && !g.has_edge(layer, i, j))
            .collect()
    } else {
        Vec::new()
    };
    let mut sets = Vec::with_capacity(n_sets);
    for _ in 0..n_sets {
        let set = if dense {
            let mut s: Vec<Dyad> = pool.iter().copied().choose_multiple(rng, k);
            s.shuffle(rng);
            s
        } else {
            let mut seen = HashSet::with_capacity(k);
            let mut s = Vec::with_capacity(k);
            while s.len() < k {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                if i != j && !g.has_edge(layer, i, j) && seen.insert((i, j)) {
                    s.push((i, j));
                }
            }
            s
        };
        sets.push(set);
    }
    Ok(sets)
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(MltError::Domain(
            "AUC needs positive and negative scores".into(),
        ));
    }
    if pos.iter().chain(neg).any(|x| x.is_nan()) {
        return Err(MltError::Domain("NaN score".into()));
    }
    Ok(())
}

/// Scores tagged by class, sorted by descending score.
fn ranked(pos: &[f64], neg: &[f64]) -> Vec<(f64, bool)> {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    all
}

/// Groups of tied scores in descending order as `(n_pos, n_neg)` counts.
fn tie_groups(pos: &[f64], neg: &[f64]) -> Vec<(usize, usize)> {
    let all = ranked(pos, neg);
    let mut groups = Vec::new();
    let mut k = 0;
    while k < all.len() {
        let mut g = (0, 0);
        let s = all[k].0;
        while k < all.len() && all[k].0 == s {
            if all[k].1 {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
            k += 1;
        }
        groups.push(g);
    }
    groups
}

/// Mann-Whitney statistic `#{pos > neg} + 1/2 #{pos == neg}`.
pub fn mann_whitney_u(pos: &[f64], neg: &[f64]) -> f64 {
    // sweep from the lowest score up, counting negatives already passed
    let mut u = 0.0;
    let mut below = 0usize;
    for (p, n) in tie_groups(pos, neg).into_iter().rev() {
        u += p as f64 * below as f64 + 0.5 * (p * n) as f64;
        below += n;
    }
    u
}

pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    Ok(mann_whitney_u(pos, neg) / (pos.len() as f64 * neg.len() as f64))
}

/// Average precision over the descending-score sweep, one threshold per
/// tie group.
pub fn pr_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut sum = 0.0;
    for (p, n) in tie_groups(pos, neg) {
        tp += p;
        fp += n;
        if p > 0 {
            sum += p as f64 * (tp as f64 / (tp + fp) as f64);
        }
    }
    // single division keeps a perfect ranking at exactly 1
    Ok(sum / pos.len() as f64)
}

/// ROC curve points `(fpr, tpr)` from (0, 0) to (1, 1).
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_scores(pos, neg)?;
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (p, n) in tie_groups(pos, neg) {
        tp += p;
        fp += n;
        pts.push((fp as f64 / nn, tp as f64 / np));
    }
    Ok(pts)
}

/// Precision-recall points `(recall, precision)`, one per tie group.
pub fn pr_curve(pos: &[f64], neg: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_scores(pos, neg)?;
    let np = pos.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut pts = Vec::new();
    for (p, n) in tie_groups(pos, neg) {
        tp += p;
        fp += n;
        pts.push((tp as f64 / np, tp as f64 / (tp + fp) as f64));
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p_two_sided: f64,
    pub df: f64,
    /// Zero sample variance with a nonzero mean: `t` is infinite.
    pub degenerate: bool,
}

/// One-sample t-test of paired differences against zero.
pub fn paired_t_test(diffs: &[f64]) -> Result<TTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(MltError::Domain(format!(
            "paired t-test needs n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p_two_sided: 1.0,
                df,
                degenerate: false,
            }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                p_two_sided: 0.0,
                df,
                degenerate: true,
            }
        });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| MltError::Domain(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        p_two_sided: p,
        df,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetric {
    pub fold: usize,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: Variant,
    pub roc_auc_mean: f64,
    pub pr_auc_mean: f64,
    pub folds: Vec<FoldMetric>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedComparison {
    /// Per-fold `full - bias` (or second minus first variant) differences.
    pub roc_diffs: Vec<f64>,
    pub pr_diffs: Vec<f64>,
    pub roc_mean_diff: f64,
    pub pr_mean_diff: f64,
    pub roc_t: Option<TTest>,
    pub pr_t: Option<TTest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub n_positives: usize,
    pub excluded: bool,
    pub variants: Vec<VariantMetrics>,
    pub paired: Option<PairedComparison>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFailure {
    pub fold: usize,
    pub variant: Variant,
    pub message: String,
}

/// Curve points of one fold, computed against its first negative set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRecord {
    pub layer: usize,
    pub variant: Variant,
    pub fold: usize,
    pub roc: Vec<(f64, f64)>,
    pub pr: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub network: String,
    pub n_folds: usize,
    pub n_neg_sets: usize,
    pub variants: Vec<Variant>,
    pub layers: Vec<LayerReport>,
    pub failures: Vec<FitFailure>,
    #[serde(skip)]
    pub curves: Vec<CurveRecord>,
    /// Fitted parameters per fold and variant (`fold_params[fold][v]`),
    /// kept only on request.
    #[serde(skip)]
    pub fold_params: Vec<Vec<Option<MltParams>>>,
}

impl MetricReport {
    pub fn layer_variant(&self, layer: usize, variant: Variant) -> Option<&VariantMetrics> {
        self.layers
            .get(layer)?
            .variants
            .iter()
            .find(|v| v.variant == variant)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Long format: `network,layer,variant,fold,metric,value`; fold `mean`
    /// rows carry the fold averages and `diff` rows the paired differences.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("network,layer,variant,fold,metric,value\n");
        for lr in &self.layers {
            for vm in &lr.variants {
                for f in &vm.folds {
                    out.push_str(&format!(
                        "{},{},{},{},roc_auc,{}\n",
                        self.network,
                        lr.layer + 1,
                        vm.variant,
                        f.fold,
                        f.roc_auc
                    ));
                    out.push_str(&format!(
                        "{},{},{},{},pr_auc,{}\n",
                        self.network,
                        lr.layer + 1,
                        vm.variant,
                        f.fold,
                        f.pr_auc
                    ));
                }
                out.push_str(&format!(
                    "{},{},{},mean,roc_auc,{}\n",
                    self.network,
                    lr.layer + 1,
                    vm.variant,
                    vm.roc_auc_mean
                ));
                out.push_str(&format!(
                    "{},{},{},mean,pr_auc,{}\n",
                    self.network,
                    lr.layer + 1,
                    vm.variant,
                    vm.pr_auc_mean
                ));
            }
            if let Some(pc) = &lr.paired {
                for (k, (r, p)) in pc.roc_diffs.iter().zip(&pc.pr_diffs).enumerate() {
                    out.push_str(&format!(
                        "{},{},diff,{k},roc_auc,{r}\n",
                        self.network,
                        lr.layer + 1
                    ));
                    out.push_str(&format!(
                        "{},{},diff,{k},pr_auc,{p}\n",
                        self.network,
                        lr.layer + 1
                    ));
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Curve points as `network,layer,variant,fold,curve,x,y`, where ROC
    /// rows hold `(fpr, tpr)` and PR rows `(recall, precision)`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("network,layer,variant,fold,curve,x,y\n");
        for c in &self.curves {
            for (name, pts) in [("roc", &c.roc), ("pr", &c.pr)] {
                for (x, y) in pts {
                    out.push_str(&format!(
                        "{},{},{},{},{name},{x},{y}\n",
                        self.network,
                        c.layer + 1,
                        c.variant,
                        c.fold
                    ));
                }
            }
        }
        out
    }
}

/// Cross-validation protocol sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_folds: usize,
    pub n_neg_sets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_folds: 10,
            n_neg_sets: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub n_neg_sets: usize,
    /// Keep fitted parameters of every fold in the report.
    pub keep_params: bool,
    /// Record ROC and PR curve points.
    pub curves: bool,
    pub network: String,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            n_neg_sets: 100,
            keep_params: false,
            curves: false,
            network: "network".into(),
        }
    }
}

struct FoldOutcome {
    /// `[variant][layer] -> (roc, pr)`
    metrics: Vec<Vec<Option<(f64, f64)>>>,
    params: Vec<Option<MltParams>>,
    failures: Vec<FitFailure>,
    curves: Vec<CurveRecord>,
}

/// Seed of the restart block used for one fold.
fn fold_seed(seed: u64, fold: usize) -> u64 {
    stream_rng(seed, Stream::Fit, fold as u64).gen()
}

fn run_fold(
    g: &MultiplexGraph,
    variants: &[Variant],
    config: &TrainConfig,
    plan: &FoldPlan,
    fold: usize,
    opts: &CvOptions,
) -> Result<FoldOutcome> {
    let mask = plan.mask_for(fold);
    let cfg = TrainConfig {
        seed: fold_seed(config.seed, fold),
        ..config.clone()
    };
    // negatives are shared by all variants so differences are paired
    let mut negatives = Vec::with_capacity(g.n_layers());
    for l in 0..g.n_layers() {
        let test = plan.test_positives(l, fold);
        if test.is_empty() {
            negatives.push(Vec::new());
            continue;
        }
        let mut rng = stream_rng(
            plan.seed,
            Stream::Negatives,
            (l * plan.n_folds + fold) as u64,
        );
        negatives.push(negative_sets(g, l, test, opts.n_neg_sets, &mut rng)?);
    }
    let mut metrics = Vec::with_capacity(variants.len());
    let mut params = Vec::with_capacity(variants.len());
    let mut failures = Vec::new();
    let mut curves = Vec::new();
    for &variant in variants {
        let fit = match multi_restart_fit(g, variant, &cfg, &mask) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("fold {fold} {variant}: {e}");
                failures.push(FitFailure {
                    fold,
                    variant,
                    message: e.to_string(),
                });
                metrics.push(vec![None; g.n_layers()]);
                params.push(None);
                continue;
            }
        };
        let mut per_layer = Vec::with_capacity(g.n_layers());
        for (l, sets) in negatives.iter().enumerate() {
            let test = plan.test_positives(l, fold);
            if test.is_empty() {
                per_layer.push(None);
                continue;
            }
            let r = log_odds_matrix(&fit.params, l);
            let pos: Vec<f64> = test.iter().map(|&(i, j)| r[[i, j]]).collect();
            let (mut roc, mut pr) = (0.0, 0.0);
            for set in sets {
                let neg: Vec<f64> = set.iter().map(|&(i, j)| r[[i, j]]).collect();
                roc += roc_auc(&pos, &neg)?;
                pr += pr_auc(&pos, &neg)?;
            }
            let k = sets.len() as f64;
            per_layer.push(Some((roc / k, pr / k)));
            if opts.curves {
                let neg: Vec<f64> = sets[0].iter().map(|&(i, j)| r[[i, j]]).collect();
                curves.push(CurveRecord {
                    layer: l,
                    variant,
                    fold,
                    roc: roc_curve(&pos, &neg)?,
                    pr: pr_curve(&pos, &neg)?,
                });
            }
        }
        metrics.push(per_layer);
        params.push(opts.keep_params.then_some(fit.params));
    }
    Ok(FoldOutcome {
        metrics,
        params,
        failures,
        curves,
    })
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Refits every variant per fold and scores held-out positives against
/// sampled non-edges.
pub fn evaluate_cv(
    g: &MultiplexGraph,
    variants: &[Variant],
    config: &TrainConfig,
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<MetricReport> {
    config.validate()?;
    if variants.is_empty() {
        return Err(MltError::Domain("no variants to evaluate".into()));
    }
    if plan.n_layers() != g.n_layers() {
        return Err(MltError::Shape(
            "fold plan does not match graph layers".into(),
        ));
    }
    if opts.n_neg_sets == 0 {
        return Err(MltError::Domain("n_neg_sets must be positive".into()));
    }
    let n_folds = (0..g.n_layers())
        .map(|l| plan.layer_folds(l).len())
        .max()
        .unwrap_or(0);
    let outcomes: Vec<FoldOutcome> = (0..n_folds)
        .into_par_iter()
        .map(|f| run_fold(g, variants, config, plan, f, opts))
        .collect::<Result<_>>()?;

    let mut layers = Vec::with_capacity(g.n_layers());
    for l in 0..g.n_layers() {
        let excluded = plan.is_excluded(l);
        let mut vms = Vec::new();
        for (vi, &variant) in variants.iter().enumerate() {
            let folds: Vec<FoldMetric> = outcomes
                .iter()
                .enumerate()
                .filter_map(|(f, o)| {
                    o.metrics[vi][l].map(|(roc, pr)| FoldMetric {
                        fold: f,
                        roc_auc: roc,
                        pr_auc: pr,
                    })
                })
                .collect();
            let rocs: Vec<f64> = folds.iter().map(|f| f.roc_auc).collect();
            let prs: Vec<f64> = folds.iter().map(|f| f.pr_auc).collect();
            vms.push(VariantMetrics {
                variant,
                roc_auc_mean: mean(&rocs),
                pr_auc_mean: mean(&prs),
                folds,
            });
        }
        let paired = if vms.len() >= 2 && !excluded {
            let base = vms
                .iter()
                .position(|v| v.variant == Variant::Bias)
                .unwrap_or(0);
            let other = vms
                .iter()
                .position(|v| v.variant == Variant::Full)
                .unwrap_or(if base == 0 { 1 } else { 0 });
            let (mut rd, mut pd) = (Vec::new(), Vec::new());
            for fb in &vms[base].folds {
                if let Some(fo) = vms[other].folds.iter().find(|f| f.fold == fb.fold) {
                    rd.push(fo.roc_auc - fb.roc_auc);
                    pd.push(fo.pr_auc - fb.pr_auc);
                }
            }
            Some(PairedComparison {
                roc_mean_diff: mean(&rd),
                pr_mean_diff: mean(&pd),
                roc_t: paired_t_test(&rd).ok(),
                pr_t: paired_t_test(&pd).ok(),
                roc_diffs: rd,
                pr_diffs: pd,
            })
        } else {
            None
        };
        layers.push(LayerReport {
            layer: l,
            n_positives: g.n_edges(l),
            excluded,
            variants: vms,
            paired,
        });
    }
    let failures = outcomes.iter().flat_map(|o| o.failures.clone()).collect();
    let curves = outcomes.iter().flat_map(|o| o.curves.clone()).collect();
    let fold_params = outcomes.into_iter().map(|o| o.params).collect();
    Ok(MetricReport {
        network: opts.network.clone(),
        n_folds,
        n_neg_sets: opts.n_neg_sets,
        variants: variants.to_vec(),
        layers,
        failures,
        curves,
        fold_params,
    })
}

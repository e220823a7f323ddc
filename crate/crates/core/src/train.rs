//! First-order fitting: AdamW with a reduce-on-plateau learning-rate
//! schedule, a bias-only warm-up phase and multiple random restarts.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MltError, Result};
use crate::graph::MultiplexGraph;
use crate::model::{interaction_matrix, sample_nodes, MaskPlan, MltParams, Observations, Variant};
use crate::rng::{stream_rng, Stream};
use crate::simplex::depth_for;

/// Node subsampling per optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleSize {
    #[default]
    Full,
    Nodes(usize),
}

impl Serialize for SampleSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleSize::Full => s.serialize_str("full"),
            SampleSize::Nodes(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SampleSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Nodes(usize),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Nodes(n) => Ok(SampleSize::Nodes(n)),
            Repr::Word(w) if w == "full" => Ok(SampleSize::Full),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "sample_size must be an integer or \"full\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    /// Reduce once the loss has failed to improve for more than this many
    /// consecutive steps.
    pub plateau_patience: usize,
    /// Relative improvement below which a step counts as no improvement.
    pub plateau_threshold: f64,
    pub lr_min: f64,
    pub warm_steps: usize,
    pub restarts: usize,
    pub sample_size: SampleSize,
    pub max_steps: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 0.1,
            weight_decay: 0.01,
            plateau_factor: 0.5,
            plateau_patience: 10,
            plateau_threshold: 1e-6,
            lr_min: 1e-7,
            warm_steps: 2000,
            restarts: 5,
            sample_size: SampleSize::Full,
            max_steps: 200_000,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_init", self.lr_init),
            ("lr_min", self.lr_min),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MltError::Spec(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(MltError::Spec("weight_decay must be nonnegative".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(MltError::Spec("plateau_factor must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.plateau_threshold) {
            return Err(MltError::Spec(
                "plateau_threshold must lie in [0, 1)".into(),
            ));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(MltError::Spec(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.restarts == 0 {
            return Err(MltError::Spec("restarts must be at least 1".into()));
        }
        if let SampleSize::Nodes(s) = self.sample_size {
            if s < 2 {
                return Err(MltError::Spec("sample_size must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Moment estimates of one AdamW parameter group.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One decoupled-weight-decay update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(MltError::Shape(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
            return Err(MltError::Divergence(format!(
                "gradient coordinate {k} is {} at step {}",
                grads[k],
                self.t + 1
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grads[k];
            params[k] *= 1.0 - lr * weight_decay;
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Reduce-on-plateau schedule in relative-threshold mode.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_steps: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            bad_steps: 0,
        }
    }

    /// Records one training loss. Reductions only happen when
    /// `may_reduce`; otherwise the bad-step count keeps accumulating.
    pub fn observe(&mut self, loss: f64, may_reduce: bool) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_steps = 0;
        } else {
            self.bad_steps += 1;
        }
        if may_reduce && self.bad_steps > self.patience {
            self.lr *= self.factor;
            self.bad_steps = 0;
        }
        self.lr
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: MltParams,
    /// Full-data loss at `params` under the training mask.
    pub final_loss: f64,
    pub steps: usize,
    pub restart_index: usize,
    pub loss_trace: Vec<f64>,
    pub final_lr: f64,
}

impl FitResult {
    /// Loss trace as `step,loss` CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (k, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, l));
        }
        out
    }

    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.trace_csv().as_bytes())?;
        Ok(())
    }
}

/// Random initial parameters for a restart seed.
pub fn initial_params(g: &MultiplexGraph, variant: Variant, seed: u64) -> Result<MltParams> {
    let depth = depth_for(g.n_nodes())?;
    let mut rng = stream_rng(seed, Stream::Fit, 0);
    Ok(MltParams::random(
        g.n_nodes(),
        g.n_layers(),
        depth,
        variant,
        &mut rng,
    ))
}

pub fn fit(
    g: &MultiplexGraph,
    variant: Variant,
    config: &TrainConfig,
    mask: &MaskPlan,
) -> Result<FitResult> {
    config.validate()?;
    let init = initial_params(g, variant, config.seed)?;
    fit_from(&Observations::new(g, mask), init, config)
}

/// Runs the training schedule from explicit initial parameters.
pub fn fit_from(obs: &Observations, init: MltParams, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    let n = obs.n_nodes();
    let mut params = init;
    let interacting = params.variant != Variant::Bias;
    let n_bias = params.n_bias_params();
    let n_rest = params.n_active() - n_bias;
    let mut bias_opt = AdamW::new(
        n_bias,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut rest_opt = AdamW::new(
        n_rest,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut sched = PlateauScheduler::new(
        config.lr_init,
        config.plateau_factor,
        config.plateau_patience,
        config.plateau_threshold,
    );
    let mut sub_rng = stream_rng(config.seed, Stream::Subsample, 0);
    let sample = match config.sample_size {
        SampleSize::Nodes(s) if s < n => Some(s),
        _ => None,
    };

    // interaction is constant while only biases move
    let frozen: Option<Vec<Array2<f64>>> =
        (interacting && sample.is_none() && config.warm_steps > 0).then(|| {
            (0..obs.n_layers())
                .map(|l| interaction_matrix(&params, l))
                .collect()
        });

    let mut trace = Vec::new();
    let mut step = 0;
    while step < config.max_steps && sched.lr >= config.lr_min {
        let warm = step < config.warm_steps;
        let (loss, grad) = match (sample, &frozen) {
            (None, Some(fz)) if warm => obs.bias_step(&params, fz),
            (None, _) => obs.nll_grad(&params, None)?,
            (Some(s), _) => {
                let nodes = sample_nodes(n, s, &mut sub_rng)?;
                obs.nll_grad(&params, Some(&nodes))?
            }
        };
        if !loss.is_finite() {
            return Err(MltError::Divergence(format!(
                "loss {loss} at step {}",
                step + 1
            )));
        }
        trace.push(loss);

        let mut flat = params.flatten();
        let gflat = grad.flatten();
        let (pb, pr) = flat.split_at_mut(n_bias);
        let (gb, gr) = gflat.split_at(n_bias);
        bias_opt.step(pb, gb, sched.lr, config.weight_decay)?;
        if !warm && n_rest > 0 {
            rest_opt.step(pr, gr, sched.lr, config.weight_decay)?;
        }
        params.assign_flat(&flat);
        sched.observe(loss, !warm);
        step += 1;
    }
    let final_loss = obs.nll(&params)?;
    if !final_loss.is_finite() {
        return Err(MltError::Divergence(format!("final loss {final_loss}")));
    }
    Ok(FitResult {
        params,
        final_loss,
        steps: step,
        restart_index: 0,
        loss_trace: trace,
        final_lr: sched.lr,
    })
}

/// Fits with seeds `seed..seed + restarts` and keeps the lowest final loss.
pub fn multi_restart_fit(
    g: &MultiplexGraph,
    variant: Variant,
    config: &TrainConfig,
    mask: &MaskPlan,
) -> Result<FitResult> {
    multi_restart_fit_with(g, config, mask, |seed| initial_params(g, variant, seed))
}

/// [`multi_restart_fit`] with a caller-supplied initializer keyed by seed.
pub fn multi_restart_fit_with<F>(
    g: &MultiplexGraph,
    config: &TrainConfig,
    mask: &MaskPlan,
    init: F,
) -> Result<FitResult>
where
    F: Fn(u64) -> Result<MltParams> + Sync,
{
    config.validate()?;
    let obs = Observations::new(g, mask);
    let runs: Vec<Result<FitResult>> = (0..config.restarts)
        .into_par_iter()
        .map(|k| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(k as u64),
                ..config.clone()
            };
            let mut res = fit_from(&obs, init(cfg.seed)?, &cfg)?;
            res.restart_index = k;
            Ok(res)
        })
        .collect();
    let mut best: Option<FitResult> = None;
    for run in runs {
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.final_loss < b.final_loss) {
                    best = Some(r);
                }
            }
            Err(e) => log::warn!("restart failed: {e}"),
        }
    }
    best.ok_or(MltError::AllRestartsFailed(config.restarts))
}

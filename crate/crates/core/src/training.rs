//! Optimization and experiment protocol: patient splits, Adam, minibatch
//! training with early stopping, hyperparameter grids and repeated
//! re-split evaluation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::{PaddedBatch, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::{action_matching, EvalReport};
use crate::model::{ActionModel, Model, ModelKind, ModelSpec, Trainable};
use crate::rng::{derive_seed, stream_rng, Stream};

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.70, 0.15, 0.15);
pub const K_GRID: [usize; 3] = [16, 32, 64];
pub const LAMBDA_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lambda: f64,
    /// Hidden dimension of the encoder.
    pub k: usize,
    pub seed: u64,
    pub split: (f64, f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 64,
            max_epochs: 500,
            patience: 10,
            lambda: 1e-4,
            k: 32,
            seed: 0,
            split: DEFAULT_SPLIT,
        }
    }
}

impl TrainConfig {
    /// Defaults with the learning rate used for `kind`.
    pub fn for_kind(kind: ModelKind) -> Self {
        Self { learning_rate: default_learning_rate(kind), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.k == 0 {
            return bad("batch_size, max_epochs, patience and k must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        check_fractions(self.split)
    }
}

pub fn default_learning_rate(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Blackbox => 1e-4,
        _ => 5e-4,
    }
}

fn check_fractions((a, b, c): (f64, f64, f64)) -> Result<()> {
    if [a, b, c].iter().any(|f| !(*f >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be non-negative and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Partition by patient id; trajectories sharing an id stay together.
/// Counts are `round(n·f_train)`, `round(n·f_val)` and the remainder.
pub fn split_patients(data: &[Trajectory], fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    check_fractions(fractions)?;
    if data.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Trajectory>> = HashMap::new();
    for tr in data {
        groups
            .entry(tr.id.as_str())
            .or_insert_with(|| {
                order.push(tr.id.as_str());
                Vec::new()
            })
            .push(tr);
    }
    let n = order.len();
    order.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let n_train = (n as f64 * fractions.0).round() as usize;
    let n_val = ((n as f64 * fractions.1).round() as usize).min(n - n_train.min(n));
    if n_train > n {
        return Err(Error::InvalidArgument(format!("{n} patients cannot fill the training split")));
    }
    let n_test = n - n_train - n_val;
    for (name, count, frac) in [("train", n_train, fractions.0), ("val", n_val, fractions.1), ("test", n_test, fractions.2)] {
        if frac > 0.0 && count == 0 {
            return Err(Error::InvalidArgument(format!("{n} patients leave the {name} split empty")));
        }
    }
    let take = |ids: &[&str]| -> Vec<Trajectory> { ids.iter().flat_map(|id| groups[id].iter().map(|t| (*t).clone())).collect() };
    Ok(Split {
        train: take(&order[..n_train]),
        val: take(&order[n_train..n_train + n_val]),
        test: take(&order[n_train + n_val..]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: i32,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected Adam update. Nothing is modified when any gradient
/// is non-finite.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64, hyper: AdamHyper) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), got: grads.len() });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.dim() != g.dim() {
            return Err(Error::ShapeMismatch { op: "adam", lhs: p.dim(), rhs: g.dim() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| Tensor::zeros(g.dim())).collect();
        state.v = state.m.clone();
    } else if state.m.len() != grads.len() {
        return Err(Error::DimensionMismatch { expected: state.m.len(), got: grads.len() });
    }
    state.step += 1;
    let c1 = 1.0 - hyper.beta1.powi(state.step);
    let c2 = 1.0 - hyper.beta2.powi(state.step);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        ndarray::Zip::from(&mut **p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + hyper.eps);
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult<M> {
    /// Weights from the epoch with the lowest validation loss.
    pub model: M,
    pub curve: Vec<EpochRecord>,
    pub epochs_run: usize,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Summary written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub model: ModelSpec,
    pub config: TrainConfig,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl<M> FitResult<M> {
    pub fn metadata(&self, model: ModelSpec, config: &TrainConfig) -> FitMetadata {
        FitMetadata {
            model,
            config: config.clone(),
            seed: config.seed,
            epochs_run: self.epochs_run,
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
        }
    }
}

/// `epoch,train_loss,val_loss` rows.
pub fn write_curve_csv(path: impl AsRef<Path>, curve: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,val_loss")?;
    for r in curve {
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
    }
    w.flush()?;
    Ok(())
}

/// Nested-mean cross-entropy of `model` over `data`, without the penalty.
pub fn data_loss<M: Trainable>(model: &M, data: &[Trajectory]) -> Result<f64> {
    let refs: Vec<&Trajectory> = data.iter().collect();
    let batch = PaddedBatch::new(&refs)?;
    let mut tape = Tape::new();
    let bound: Vec<_> = model.param_sets().iter().map(|p| p.bind(&mut tape)).collect();
    let obj = model.objective(&mut tape, &bound, &batch, 0.0)?;
    Ok(tape.scalar_value(obj.data))
}

/// One minibatch gradient step on the penalized objective; returns the
/// penalized batch loss.
fn train_batch<M: Trainable>(
    model: &mut M,
    batch: &PaddedBatch,
    lambda: f64,
    lr: f64,
    adam: &mut AdamState,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound: Vec<_> = model.param_sets().iter().map(|p| p.bind(&mut tape)).collect();
    let obj = model.objective(&mut tape, &bound, batch, lambda)?;
    let loss = tape.scalar_value(obj.total);
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    tape.backward(obj.total)?;
    let grads: Vec<Tensor> = bound.iter().flat_map(|b| b.vars().iter().map(|v| tape.grad(*v).clone())).collect();
    let mut sets = model.param_sets_mut();
    let mut params: Vec<&mut Tensor> = sets.iter_mut().flat_map(|s| s.tensors_mut().iter_mut()).collect();
    adam_step(&mut params, &grads, adam, lr, AdamHyper::default())?;
    Ok(loss)
}

/// Minibatch Adam with per-epoch reshuffling and early stopping on the
/// validation cross-entropy. The returned model carries the best epoch's
/// weights.
pub fn fit<M: Trainable>(model: M, train: &[Trajectory], val: &[Trajectory], config: &TrainConfig) -> Result<FitResult<M>> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let mut model = model;
    let mut adam = AdamState::new();
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut last_finite = None;
    let mut curve = Vec::new();
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut stream_rng(config.seed, Stream::Batch, epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&Trajectory> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = PaddedBatch::new(&refs)?;
            match train_batch(&mut model, &batch, config.lambda, config.learning_rate, &mut adam) {
                Ok(_) => {}
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, last_finite_epoch: last_finite }),
                Err(e) => return Err(e),
            }
        }
        let train_loss = data_loss(&model, train)?;
        let val_loss = data_loss(&model, val)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, last_finite_epoch: last_finite });
        }
        last_finite = Some(epoch);
        curve.push(EpochRecord { epoch, train_loss, val_loss });
        debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let epochs_run = curve.len();
    info!("stopped after {epochs_run} epochs; best epoch {best_epoch} with validation loss {best_val:.6}");
    Ok(FitResult { model: best, curve, epochs_run, best_epoch, best_val_loss: best_val })
}

/// Builds the model described by `spec` and trains it; logistic regression
/// is fitted directly on `train` and validated once.
pub fn train_model(spec: &ModelSpec, train: &[Trajectory], val: &[Trajectory], config: &TrainConfig) -> Result<FitResult<Model>> {
    config.validate()?;
    let mut model = Model::build(spec, config.seed)?;
    if spec.kind == ModelKind::Logreg {
        model.fit_direct(train)?;
        let (train_loss, val_loss) = (model_bce(&model, train)?, model_bce(&model, val)?);
        return Ok(FitResult {
            model,
            curve: vec![EpochRecord { epoch: 1, train_loss, val_loss }],
            epochs_run: 1,
            best_epoch: 1,
            best_val_loss: val_loss,
        });
    }
    fit(model, train, val, config)
}

/// Nested-mean cross-entropy computed from predicted probabilities.
pub fn model_bce<M: ActionModel + ?Sized>(model: &M, data: &[Trajectory]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let mut total = 0.0;
    for tr in data {
        let probs = model.action_probabilities(tr)?;
        let s: f64 = probs
            .iter()
            .zip(&tr.actions)
            .map(|(p, &a)| {
                let q = p.clamp(crate::autodiff::PROB_EPS, 1.0 - crate::autodiff::PROB_EPS);
                if a == 1 {
                    -q.ln()
                } else {
                    -(1.0 - q).ln()
                }
            })
            .sum();
        total += s / tr.len() as f64;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ks: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { ks: K_GRID.to_vec(), lambdas: LAMBDA_GRID.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub k: usize,
    pub lambda: f64,
    /// Mean best validation loss over seeds.
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    pub cells: Vec<GridCell>,
    /// Validation action-matching metrics of the selected cell over seeds.
    pub report: EvalReport,
    /// Fitted model of the selected cell for the first seed.
    #[serde(skip)]
    pub model: Option<Model>,
}

/// Exhaustive search over `grid × seeds` selecting the lowest mean
/// validation loss; ties go to the smaller `k`, then the smaller `lambda`.
pub fn grid_search(
    spec: &ModelSpec,
    train: &[Trajectory],
    val: &[Trajectory],
    base: &TrainConfig,
    grid: &Grid,
    seeds: &[u64],
) -> Result<GridResult> {
    if grid.ks.is_empty() || grid.lambdas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("grid and seed list must be non-empty".into()));
    }
    let mut jobs = Vec::new();
    for &k in &grid.ks {
        for &lambda in &grid.lambdas {
            for &seed in seeds {
                jobs.push(TrainConfig { k, lambda, seed, ..base.clone() });
            }
        }
    }
    type Job = (f64, BTreeMap<String, Option<f64>>, Option<Model>);
    let mut results: Vec<Job> = jobs
        .par_iter()
        .map(|cfg| {
            let s = ModelSpec { hidden_dim: cfg.k, ..*spec };
            let fit = train_model(&s, train, val, cfg)?;
            let metrics = action_matching(&fit.model, val)?;
            Ok((fit.best_val_loss, metrics, Some(fit.model)))
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut reports = Vec::new();
    for (cell_jobs, cell_results) in jobs.chunks(seeds.len()).zip(results.chunks(seeds.len())) {
        let val_loss = cell_results.iter().map(|r| r.0).sum::<f64>() / seeds.len() as f64;
        cells.push(GridCell { k: cell_jobs[0].k, lambda: cell_jobs[0].lambda, val_loss });
        reports.push(cell_results.iter().map(|r| r.1.clone()).collect::<Vec<_>>());
    }
    let best_idx = (0..cells.len())
        .min_by(|&a, &b| {
            let (x, y) = (&cells[a], &cells[b]);
            x.val_loss
                .total_cmp(&y.val_loss)
                .then(x.k.cmp(&y.k))
                .then(x.lambda.total_cmp(&y.lambda))
        })
        .expect("non-empty grid");
    let best = TrainConfig { k: cells[best_idx].k, lambda: cells[best_idx].lambda, ..base.clone() };
    let model = results[best_idx * seeds.len()].2.take();
    info!("grid selected k = {} lambda = {}", best.k, best.lambda);
    Ok(GridResult { best, cells, report: EvalReport::aggregate(&reports[best_idx]), model })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub report: EvalReport,
    pub runs: Vec<BTreeMap<String, Option<f64>>>,
    pub seeds: Vec<u64>,
}

/// Seeds of `runs` independent repetitions derived from `master`.
pub fn bootstrap_seeds(master: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|r| derive_seed(master, Stream::Bootstrap, r)).collect()
}

/// Repeats split, train and test evaluation with fresh seeds and reports
/// the mean and standard error of every metric.
pub fn bootstrap_eval(data: &[Trajectory], spec: &ModelSpec, config: &TrainConfig, runs: usize) -> Result<BootstrapResult> {
    bootstrap_eval_with_seeds(data, spec, config, &bootstrap_seeds(config.seed, runs))
}

/// [`bootstrap_eval`] with explicit per-run seeds. Recovery correlations
/// are included when the data carries ground truth.
pub fn bootstrap_eval_with_seeds(
    data: &[Trajectory],
    spec: &ModelSpec,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<BootstrapResult> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two runs".into()));
    }
    let labeled = data.iter().all(|t| t.truth.is_some());
    let runs: Vec<BTreeMap<String, Option<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..config.clone() };
            let split = split_patients(data, cfg.split, seed)?;
            let fit = train_model(spec, &split.train, &split.val, &cfg)?;
            let mut metrics = action_matching(&fit.model, &split.test)?;
            if labeled {
                metrics.extend(crate::metrics::recovery_values(&fit.model, &split.test)?);
            }
            Ok(metrics)
        })
        .collect::<Result<_>>()?;
    Ok(BootstrapResult { report: EvalReport::aggregate(&runs), runs, seeds: seeds.to_vec() })
}

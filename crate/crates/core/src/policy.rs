//! Interpretable observation-to-action maps.
//!
//! [`CprPolicy`] turns each emitted parameter vector into a logistic
//! policy over the current observation. [`CprGlobal`] adds a running bias
//! `μ_t = α⟨β_{t-1}, [x_{t-1}, a_{t-1}]⟩ + (1 − α)μ_{t-1}` with `μ_1 = 0`,
//! so every log-odds value expands exactly into per-feature contributions
//! from the current and all past steps.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{sigmoid_scalar, Tape, Var};
use crate::data::{PaddedBatch, Trajectory};
use crate::encoders::{CellKind, ContextEncoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::params::Bound;

/// Coefficients and intercept of one logistic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl PolicyParams {
    /// Splits an emitted `[coef..., intercept]` vector.
    pub fn from_emitted(v: &[f64]) -> Result<Self> {
        let (icpt, coef) = v
            .split_last()
            .ok_or_else(|| Error::InvalidArgument("empty parameter vector".into()))?;
        Ok(Self { coef: coef.to_vec(), intercept: *icpt })
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coef.len() {
            return Err(Error::DimensionMismatch { expected: self.coef.len(), got: x.len() });
        }
        Ok(self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.intercept)
    }
}

/// `σ(⟨coef, x⟩ + intercept)`.
pub fn predict(params: &PolicyParams, x: &[f64]) -> Result<f64> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation".into()));
    }
    Ok(sigmoid_scalar(params.logit(x)?))
}

pub fn feature_name(j: usize) -> String {
    format!("x{j}")
}

/// One step of [`cpr_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub params: PolicyParams,
    pub prob: f64,
}

/// Data and total loss nodes for one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    /// Nested-mean binary cross-entropy.
    pub data: Var,
    /// `data` plus the lasso penalty.
    pub total: Var,
}

pub(crate) fn sum_all(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut it = terms.iter();
    let first = *it
        .next()
        .ok_or_else(|| Error::InvalidArgument("no loss terms".into()))?;
    it.try_fold(first, |acc, v| tape.add(acc, *v))
}

fn broadcast_cols(w: &Array2<f64>, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((w.nrows(), cols), |(i, _)| w[[i, 0]])
}

/// Per-step log-odds and coefficient nodes of a contextual policy.
struct StepNodes {
    coef: Var,
    logit: Var,
}

fn contextual_logits(
    tape: &mut Tape,
    thetas: &[Var],
    batch: &PaddedBatch,
) -> Result<Vec<StepNodes>> {
    let d = batch.obs_dim;
    thetas
        .iter()
        .enumerate()
        .map(|(t, &theta)| {
            let coef = tape.slice_cols(theta, 0, d)?;
            let icpt = tape.slice_cols(theta, d, d + 1)?;
            let x = tape.leaf(batch.obs[t].clone());
            let cx = tape.mul(coef, x)?;
            let dot = tape.sum_cols(cx);
            let logit = tape.add(dot, icpt)?;
            Ok(StepNodes { coef, logit })
        })
        .collect()
}

/// Nested-mean BCE over the batch plus `lambda` times the matching mean
/// of `‖coef_t‖₁` (intercepts are not penalized).
fn policy_objective(
    tape: &mut Tape,
    steps: &[StepNodes],
    batch: &PaddedBatch,
    lambda: f64,
) -> Result<Objective> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut data_terms = Vec::with_capacity(steps.len());
    let mut pen_terms = Vec::new();
    for (t, s) in steps.iter().enumerate() {
        let p = tape.sigmoid(s.logit);
        let l = tape.bce(p, batch.actions[t].clone())?;
        let wl = tape.mul_const(l, batch.weights[t].clone())?;
        data_terms.push(tape.sum(wl));
        if lambda > 0.0 {
            let a = tape.abs(s.coef);
            let w = broadcast_cols(&batch.weights[t], batch.obs_dim);
            let wa = tape.mul_const(a, w)?;
            pen_terms.push(tape.sum(wa));
        }
    }
    let data = sum_all(tape, &data_terms)?;
    let total = if pen_terms.is_empty() {
        data
    } else {
        let pen = sum_all(tape, &pen_terms)?;
        let pen = tape.scale(pen, lambda);
        tape.add(data, pen)?
    };
    Ok(Objective { data, total })
}

/// Contextualized logistic policy generated by a recurrent encoder.
#[derive(Debug, Clone)]
pub struct CprPolicy {
    pub encoder: ContextEncoder,
}

impl CprPolicy {
    pub fn new<R: Rng>(cell: CellKind, hidden_dim: usize, obs_dim: usize, static_dim: usize, rng: &mut R) -> Result<Self> {
        let cfg = EncoderConfig::for_policy(cell, hidden_dim, obs_dim, static_dim);
        Ok(Self { encoder: ContextEncoder::new(cfg, rng)? })
    }

    pub fn forward(&self, traj: &Trajectory) -> Result<Vec<PolicyStep>> {
        cpr_forward(&self.encoder, traj)
    }

    pub fn objective(&self, tape: &mut Tape, p: &Bound, batch: &PaddedBatch, lambda: f64) -> Result<Objective> {
        let thetas = self.encoder.emit_batch(tape, p, batch)?;
        let steps = contextual_logits(tape, &thetas, batch)?;
        policy_objective(tape, &steps, batch, lambda)
    }
}

/// `θ_t` and `p_t = σ(⟨θ_t, x_t⟩)` for every step of `traj`.
pub fn cpr_forward(encoder: &ContextEncoder, traj: &Trajectory) -> Result<Vec<PolicyStep>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let d = encoder.config().obs_dim;
    if traj.obs_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: traj.obs_dim() });
    }
    let batch = PaddedBatch::new(&[traj])?;
    let mut tape = Tape::new();
    let p = encoder.bind(&mut tape);
    let thetas = encoder.emit_batch(&mut tape, &p, &batch)?;
    thetas
        .iter()
        .zip(&traj.obs)
        .map(|(&theta, x)| {
            let v: Vec<f64> = tape.value(theta).iter().copied().collect();
            let params = PolicyParams::from_emitted(&v)?;
            let prob = predict(&params, x)?;
            Ok(PolicyStep { params, prob })
        })
        .collect()
}

/// Loss of `encoder` over `trajectories` in one batch; see [`CprPolicy::objective`].
pub fn cpr_loss(encoder: &ContextEncoder, trajectories: &[&Trajectory], lambda: f64) -> Result<f64> {
    let policy = CprPolicy { encoder: encoder.clone() };
    let batch = PaddedBatch::new(trajectories)?;
    let mut tape = Tape::new();
    let p = encoder.bind(&mut tape);
    let obj = policy.objective(&mut tape, &p, &batch, lambda)?;
    Ok(tape.scalar_value(obj.total))
}

/// Running-bias state of a global policy at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBiasState {
    pub mu: f64,
    pub alpha: f64,
    /// `β_{t-1}`, the effects of `[x_{t-1}, a_{t-1}]`; `None` at `t = 1`.
    pub beta_prev: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStep {
    pub theta: PolicyParams,
    pub logodds: f64,
    pub prob: f64,
    pub bias: GlobalBiasState,
}

/// Output of [`global_forward`] together with the inputs it was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrace {
    pub trajectory_id: String,
    pub alpha: f64,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<u8>,
    pub steps: Vec<GlobalStep>,
}

/// Contextual policy plus a telescoping bias driven by a second encoder.
#[derive(Debug, Clone)]
pub struct CprGlobal {
    pub theta: ContextEncoder,
    pub beta: ContextEncoder,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

struct GlobalNodes {
    steps: Vec<StepNodes>,
    thetas: Vec<Var>,
    betas: Vec<Var>,
    mus: Vec<Var>,
}

impl CprGlobal {
    pub fn new<R: Rng>(
        cell: CellKind,
        hidden_dim: usize,
        obs_dim: usize,
        static_dim: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let theta = ContextEncoder::new(EncoderConfig::for_policy(cell, hidden_dim, obs_dim, static_dim), rng)?;
        // β weighs [x, a]: obs_dim + 1 outputs, no intercept.
        let beta = ContextEncoder::new(EncoderConfig::for_policy(cell, hidden_dim, obs_dim, static_dim), rng)?;
        Ok(Self { theta, beta, alpha })
    }

    fn nodes(&self, tape: &mut Tape, pt: &Bound, pb: &Bound, batch: &PaddedBatch) -> Result<GlobalNodes> {
        check_alpha(self.alpha)?;
        let thetas = self.theta.emit_batch(tape, pt, batch)?;
        let betas = self.beta.emit_batch(tape, pb, batch)?;
        let ctx = contextual_logits(tape, &thetas, batch)?;
        let mut steps = Vec::with_capacity(ctx.len());
        let mut mus = Vec::with_capacity(ctx.len());
        let mut mu = tape.leaf(Array2::zeros((batch.size, 1)));
        for (t, s) in ctx.into_iter().enumerate() {
            if t > 0 {
                let z = tape.leaf(batch.history_input(t - 1));
                let bz = tape.mul(betas[t - 1], z)?;
                let dot = tape.sum_cols(bz);
                let fresh = tape.scale(dot, self.alpha);
                let decayed = tape.scale(mu, 1.0 - self.alpha);
                mu = tape.add(fresh, decayed)?;
            }
            mus.push(mu);
            let logit = tape.add(s.logit, mu)?;
            steps.push(StepNodes { coef: s.coef, logit });
        }
        Ok(GlobalNodes { steps, thetas, betas, mus })
    }

    pub fn objective(
        &self,
        tape: &mut Tape,
        pt: &Bound,
        pb: &Bound,
        batch: &PaddedBatch,
        lambda: f64,
    ) -> Result<Objective> {
        let n = self.nodes(tape, pt, pb, batch)?;
        policy_objective(tape, &n.steps, batch, lambda)
    }

    pub fn forward(&self, traj: &Trajectory) -> Result<GlobalTrace> {
        global_forward(&self.theta, &self.beta, self.alpha, traj)
    }
}

pub fn global_forward(
    theta_encoder: &ContextEncoder,
    beta_encoder: &ContextEncoder,
    alpha: f64,
    traj: &Trajectory,
) -> Result<GlobalTrace> {
    check_alpha(alpha)?;
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let model = CprGlobal { theta: theta_encoder.clone(), beta: beta_encoder.clone(), alpha };
    let batch = PaddedBatch::new(&[traj])?;
    let mut tape = Tape::new();
    let pt = model.theta.bind(&mut tape);
    let pb = model.beta.bind(&mut tape);
    let n = model.nodes(&mut tape, &pt, &pb, &batch)?;
    let read = |v: Var| -> Vec<f64> { tape.value(v).iter().copied().collect() };
    let mut steps = Vec::with_capacity(traj.len());
    for t in 0..traj.len() {
        let theta = PolicyParams::from_emitted(&read(n.thetas[t]))?;
        let logodds = tape.scalar_value(n.steps[t].logit);
        steps.push(GlobalStep {
            theta,
            logodds,
            prob: sigmoid_scalar(logodds),
            bias: GlobalBiasState {
                mu: tape.scalar_value(n.mus[t]),
                alpha,
                beta_prev: (t > 0).then(|| read(n.betas[t - 1])),
            },
        });
    }
    Ok(GlobalTrace {
        trajectory_id: traj.id.clone(),
        alpha,
        obs: traj.obs.clone(),
        actions: traj.actions.clone(),
        steps,
    })
}

/// Linear effect of one input on the log-odds at `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    /// Step whose log-odds is explained (1-based).
    pub step: usize,
    /// Step the input was observed at (1-based).
    pub source_step: usize,
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub trajectory_id: String,
    pub logodds: Vec<f64>,
    pub contributions: Vec<Contribution>,
}

impl Explanation {
    pub fn total(&self, step: usize) -> f64 {
        self.contributions
            .iter()
            .filter(|c| c.step == step)
            .map(|c| c.value)
            .sum()
    }
}

/// Expands each global log-odds into the sum
/// `⟨θ_t, x_t⟩ + b_t + Σ_{m≥1} α(1−α)^{m−1} ⟨β_{t−m}, [x_{t−m}, a_{t−m}]⟩`.
pub fn explain_global(trace: &GlobalTrace) -> Explanation {
    let alpha = trace.alpha;
    let mut contributions = Vec::new();
    for (t0, step) in trace.steps.iter().enumerate() {
        let t = t0 + 1;
        for (j, (c, x)) in step.theta.coef.iter().zip(&trace.obs[t0]).enumerate() {
            contributions.push(Contribution { step: t, source_step: t, feature: feature_name(j), value: c * x });
        }
        contributions.push(Contribution {
            step: t,
            source_step: t,
            feature: "intercept".into(),
            value: step.theta.intercept,
        });
        for m in 1..=t0 {
            let s0 = t0 - m;
            let w = alpha * (1.0 - alpha).powi(m as i32 - 1);
            // β emitted for step s0 + 1 (0-based) weighs the inputs of step s0.
            let beta = trace.steps[s0 + 1].bias.beta_prev.as_ref().expect("t > 1 has β");
            let x = &trace.obs[s0];
            for (j, xv) in x.iter().enumerate() {
                contributions.push(Contribution {
                    step: t,
                    source_step: s0 + 1,
                    feature: feature_name(j),
                    value: w * beta[j] * xv,
                });
            }
            contributions.push(Contribution {
                step: t,
                source_step: s0 + 1,
                feature: "action".into(),
                value: w * beta[x.len()] * f64::from(trace.actions[s0]),
            });
        }
    }
    Explanation {
        trajectory_id: trace.trajectory_id.clone(),
        logodds: trace.steps.iter().map(|s| s.logodds).collect(),
        contributions,
    }
}

/// One row of the coefficient export.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub trajectory_id: String,
    pub t: usize,
    pub feature: String,
    pub coefficient: f64,
}

/// Rows for every coefficient and intercept of every step (t is 1-based).
pub fn coefficient_rows(trajectory_id: &str, params: &[PolicyParams]) -> Vec<CoefficientRow> {
    let mut out = Vec::new();
    for (t0, p) in params.iter().enumerate() {
        for (j, c) in p.coef.iter().enumerate() {
            out.push(CoefficientRow {
                trajectory_id: trajectory_id.into(),
                t: t0 + 1,
                feature: feature_name(j),
                coefficient: *c,
            });
        }
        out.push(CoefficientRow {
            trajectory_id: trajectory_id.into(),
            t: t0 + 1,
            feature: "intercept".into(),
            coefficient: p.intercept,
        });
    }
    out
}

/// Writes `trajectory_id,t,feature_name,coefficient` with shortest round-trip floats.
pub fn write_coefficients_csv<W: Write>(w: W, rows: &[CoefficientRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["trajectory_id", "t", "feature_name", "coefficient"])?;
    for r in rows {
        wr.write_record([r.trajectory_id.as_str(), &r.t.to_string(), &r.feature, &r.coefficient.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `trajectory_id,t,source_t,feature_name,contribution`.
pub fn write_contributions_csv<W: Write>(w: W, explanations: &[Explanation]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["trajectory_id", "t", "source_t", "feature_name", "contribution"])?;
    for e in explanations {
        for c in &e.contributions {
            wr.write_record([
                e.trajectory_id.as_str(),
                &c.step.to_string(),
                &c.source_step.to_string(),
                &c.feature,
                &c.value.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Writes `trajectory_id,t,logodds,probability`.
pub fn write_logodds_csv<W: Write>(w: W, traces: &[GlobalTrace]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["trajectory_id", "t", "logodds", "probability"])?;
    for tr in traces {
        for (t0, s) in tr.steps.iter().enumerate() {
            wr.write_record([
                tr.trajectory_id.as_str(),
                &(t0 + 1).to_string(),
                &s.logodds.to_string(),
                &s.prob.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

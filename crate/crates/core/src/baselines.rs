//! Comparator models: black-box recurrent classifiers with post-hoc
//! gradient coefficients, and pooled / condition-specific logistic
//! regression.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{row, sigmoid_scalar, Tape, Var};
use crate::data::{PaddedBatch, Trajectory};
use crate::encoders::{CellKind, EncoderState, Head, StateVars, Trunk};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::policy::{sum_all, Objective, PolicyParams};

/// Recurrent classifier reading `[x_t, a_{t-1}]` (with `a_0 := 0`) and
/// emitting one logit per step.
#[derive(Debug, Clone)]
pub struct BlackBoxPolicy {
    obs_dim: usize,
    params: ParamSet,
    trunk: Trunk,
    head: Head,
}

/// State just before a step: the previous recurrent state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub state: EncoderState,
    pub a_prev: f64,
}

/// Models whose per-step logit can be rebuilt on a tape as a function of
/// the current observation with everything else held fixed.
pub trait StepLogit {
    type Context;

    fn obs_dim(&self) -> usize;

    /// Context before each step of `traj`, in order.
    fn step_contexts(&self, traj: &Trajectory) -> Result<Vec<Self::Context>>;

    fn step_logit(&self, tape: &mut Tape, x: Var, ctx: &Self::Context) -> Result<Var>;
}

/// What [`extract_coeffs`] differentiates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientTarget {
    #[default]
    Logit,
    Probability,
}

impl BlackBoxPolicy {
    pub fn new<R: Rng>(cell: CellKind, hidden_dim: usize, obs_dim: usize, rng: &mut R) -> Result<Self> {
        if hidden_dim == 0 || obs_dim == 0 {
            return Err(Error::InvalidArgument("black-box dimensions must be positive".into()));
        }
        let mut params = ParamSet::new();
        let trunk = Trunk::new(&mut params, "trunk", cell, obs_dim + 1, hidden_dim, rng);
        let head = Head::new(&mut params, "head", hidden_dim, 1, rng);
        Ok(Self { obs_dim, params, trunk, head })
    }

    pub fn cell(&self) -> CellKind {
        self.trunk.cell
    }

    pub fn hidden_dim(&self) -> usize {
        self.trunk.hidden_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn input_at(batch: &PaddedBatch, t: usize) -> Array2<f64> {
        let prev = if t == 0 {
            Array2::zeros((batch.size, 1))
        } else {
            batch.actions[t - 1].clone()
        };
        ndarray::concatenate(ndarray::Axis(1), &[batch.obs[t].view(), prev.view()]).expect("rows")
    }

    /// Per-step logits (`B × 1`) and the states they were read from.
    fn logits(&self, tape: &mut Tape, p: &Bound, batch: &PaddedBatch) -> Result<(Vec<Var>, Vec<StateVars>)> {
        let mut state = self.trunk.zero_state(tape, batch.size);
        let mut logits = Vec::with_capacity(batch.max_len);
        let mut before = Vec::with_capacity(batch.max_len);
        for t in 0..batch.max_len {
            before.push(state);
            let u = tape.leaf(Self::input_at(batch, t));
            state = self.trunk.step(tape, p, state, u)?;
            logits.push(self.head.forward(tape, p, state.h)?);
        }
        Ok((logits, before))
    }

    pub fn objective(&self, tape: &mut Tape, p: &Bound, batch: &PaddedBatch) -> Result<Objective> {
        let (logits, _) = self.logits(tape, p, batch)?;
        let mut terms = Vec::with_capacity(logits.len());
        for (t, z) in logits.into_iter().enumerate() {
            let prob = tape.sigmoid(z);
            let l = tape.bce(prob, batch.actions[t].clone())?;
            let wl = tape.mul_const(l, batch.weights[t].clone())?;
            terms.push(tape.sum(wl));
        }
        let data = sum_all(tape, &terms)?;
        Ok(Objective { data, total: data })
    }
}

/// `p_t = σ(logit_t)` for every step.
pub fn blackbox_forward(model: &BlackBoxPolicy, traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if traj.obs_dim() != model.obs_dim {
        return Err(Error::DimensionMismatch { expected: model.obs_dim, got: traj.obs_dim() });
    }
    let batch = PaddedBatch::new(&[traj])?;
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let (logits, _) = model.logits(&mut tape, &p, &batch)?;
    Ok(logits.iter().map(|z| sigmoid_scalar(tape.scalar_value(*z))).collect())
}

impl StepLogit for BlackBoxPolicy {
    type Context = StepContext;

    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn step_contexts(&self, traj: &Trajectory) -> Result<Vec<StepContext>> {
        if traj.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        let batch = PaddedBatch::new(&[traj])?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let (_, before) = self.logits(&mut tape, &p, &batch)?;
        let read = |v: Var| -> Vec<f64> { tape.value(v).iter().copied().collect() };
        Ok(before
            .iter()
            .enumerate()
            .map(|(t, s)| StepContext {
                state: EncoderState { hidden: read(s.h), cell: s.c.map(read) },
                a_prev: if t == 0 { 0.0 } else { f64::from(traj.actions[t - 1]) },
            })
            .collect())
    }

    fn step_logit(&self, tape: &mut Tape, x: Var, ctx: &StepContext) -> Result<Var> {
        let p = self.params.bind(tape);
        let h = tape.leaf(row(&ctx.state.hidden));
        let c = ctx.state.cell.as_ref().map(|c| tape.leaf(row(c)));
        let a = tape.leaf(row(&[ctx.a_prev]));
        let u = tape.concat(&[x, a])?;
        let next = self.trunk.step(tape, &p, StateVars { h, c }, u)?;
        self.head.forward(tape, &p, next.h)
    }
}

/// Gradient of the step-`step` logit (or probability) with respect to the
/// current observation, holding the incoming recurrent state fixed.
/// `step` is a 0-based index.
pub fn extract_coeffs<M: StepLogit>(
    model: &M,
    traj: &Trajectory,
    step: usize,
    target: GradientTarget,
) -> Result<Vec<f64>> {
    let ctxs = model.step_contexts(traj)?;
    let ctx = ctxs.get(step).ok_or_else(|| {
        Error::InvalidArgument(format!("step {step} out of range for length {}", traj.len()))
    })?;
    coeffs_at(model, &traj.obs[step], ctx, target)
}

/// [`extract_coeffs`] for every step, sharing one forward pass.
pub fn extract_all_coeffs<M: StepLogit>(
    model: &M,
    traj: &Trajectory,
    target: GradientTarget,
) -> Result<Vec<Vec<f64>>> {
    let ctxs = model.step_contexts(traj)?;
    ctxs.iter()
        .zip(&traj.obs)
        .map(|(ctx, x)| coeffs_at(model, x, ctx, target))
        .collect()
}

fn coeffs_at<M: StepLogit>(model: &M, x: &[f64], ctx: &M::Context, target: GradientTarget) -> Result<Vec<f64>> {
    if x.len() != model.obs_dim() {
        return Err(Error::DimensionMismatch { expected: model.obs_dim(), got: x.len() });
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(row(x));
    let logit = model.step_logit(&mut tape, xv, ctx)?;
    let out = match target {
        GradientTarget::Logit => logit,
        GradientTarget::Probability => tape.sigmoid(logit),
    };
    tape.backward(out)?;
    Ok(tape.grad(xv).iter().copied().collect())
}

const LOGREG_MAX_ITER: usize = 20_000;
const LOGREG_TOL: f64 = 1e-9;

fn logreg_loss(rows: &[(&[f64], f64)], w: &[f64], b: f64) -> f64 {
    let n = rows.len() as f64;
    rows.iter()
        .map(|(x, y)| {
            let z: f64 = w.iter().zip(*x).map(|(a, v)| a * v).sum::<f64>() + b;
            // log(1 + e^z) − y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - y * z
        })
        .sum::<f64>()
        / n
}

fn logreg_grad(rows: &[(&[f64], f64)], w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, y) in rows {
        let z: f64 = w.iter().zip(*x).map(|(a, v)| a * v).sum::<f64>() + b;
        let r = sigmoid_scalar(z) - y;
        for (g, v) in gw.iter_mut().zip(*x) {
            *g += r * v / n;
        }
        gb += r / n;
    }
    (gw, gb)
}

/// Unregularized logistic regression by gradient descent with Armijo
/// backtracking. Stops when the gradient's max-norm falls below 1e-9 or
/// after a fixed iteration budget (separable data never converges).
pub fn fit_logreg(rows: &[(&[f64], f64)]) -> Result<PolicyParams> {
    let first = rows.first().ok_or(Error::NoTrajectories)?;
    let d = first.0.len();
    let pos = rows.iter().filter(|r| r.1 > 0.5).count();
    if pos == 0 || pos == rows.len() {
        return Err(Error::SingleClass(format!("{pos} positives out of {}", rows.len())));
    }
    let mean_sq = rows
        .iter()
        .map(|(x, _)| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / rows.len() as f64;
    let mut step = 4.0 / mean_sq;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut loss = logreg_loss(rows, &w, b);
    for _ in 0..LOGREG_MAX_ITER {
        let (gw, gb) = logreg_grad(rows, &w, b);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < LOGREG_TOL {
            break;
        }
        let gsq = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            let b_new = b - step * gb;
            let l_new = logreg_loss(rows, &w_new, b_new);
            if l_new <= loss - 0.5 * step * gsq {
                w = w_new;
                b = b_new;
                loss = l_new;
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Ok(PolicyParams { coef: w, intercept: b });
            }
        }
    }
    Ok(PolicyParams { coef: w, intercept: b })
}

fn pooled_rows(trajectories: &[Trajectory]) -> Vec<(&[f64], f64)> {
    trajectories
        .iter()
        .flat_map(|t| t.obs.iter().zip(&t.actions).map(|(x, a)| (x.as_slice(), f64::from(*a))))
        .collect()
}

/// One logistic regression over all steps of all trajectories.
pub fn fit_pooled_logreg(trajectories: &[Trajectory]) -> Result<PolicyParams> {
    fit_logreg(&pooled_rows(trajectories))
}

/// Maps the history available at a step to a discrete context tuple.
pub trait Discretizer {
    fn context(&self, traj: &Trajectory, step: usize) -> Vec<i64>;
}

impl<F: Fn(&Trajectory, usize) -> Vec<i64>> Discretizer for F {
    fn context(&self, traj: &Trajectory, step: usize) -> Vec<i64> {
        self(traj, step)
    }
}

/// Built-in context rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextRule {
    /// Previous action, `-1` at the first step.
    PreviousAction,
    /// Previous action plus each previous observation binned into
    /// `bins` equal-width cells over `[lo, hi]`.
    PreviousActionBinned { lo: f64, hi: f64, bins: usize },
}

impl Discretizer for ContextRule {
    fn context(&self, traj: &Trajectory, step: usize) -> Vec<i64> {
        let prev_a = if step == 0 { -1 } else { i64::from(traj.actions[step - 1]) };
        match *self {
            ContextRule::PreviousAction => vec![prev_a],
            ContextRule::PreviousActionBinned { lo, hi, bins } => {
                let mut key = vec![prev_a];
                if step == 0 {
                    key.extend(std::iter::repeat_n(-1, traj.obs_dim()));
                } else {
                    for &v in &traj.obs[step - 1] {
                        let u = ((v - lo) / (hi - lo) * bins as f64).floor();
                        key.push(u.clamp(0.0, bins as f64 - 1.0) as i64);
                    }
                }
                key
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionKey {
    pub t: usize,
    pub context: Vec<i64>,
}

/// One logistic regression per (timestep, context) key, with the pooled
/// model as fallback for unseen or single-class keys.
#[derive(Debug, Clone)]
pub struct ConditionSpecific<D> {
    pub discretizer: D,
    pub models: BTreeMap<ConditionKey, PolicyParams>,
    pub pooled: PolicyParams,
}

pub fn fit_condition_specific<D: Discretizer>(
    trajectories: &[Trajectory],
    discretizer: D,
) -> Result<ConditionSpecific<D>> {
    let pooled = fit_pooled_logreg(trajectories)?;
    let mut groups: BTreeMap<ConditionKey, Vec<(&[f64], f64)>> = BTreeMap::new();
    for tr in trajectories {
        for (t, (x, a)) in tr.obs.iter().zip(&tr.actions).enumerate() {
            let key = ConditionKey { t, context: discretizer.context(tr, t) };
            groups.entry(key).or_default().push((x.as_slice(), f64::from(*a)));
        }
    }
    let mut models = BTreeMap::new();
    for (key, rows) in groups {
        match fit_logreg(&rows) {
            Ok(p) => {
                models.insert(key, p);
            }
            Err(Error::SingleClass(_)) => {
                log::debug!("condition {key:?} has a single class; using pooled model");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ConditionSpecific { discretizer, models, pooled })
}

impl<D: Discretizer> ConditionSpecific<D> {
    pub fn params_for(&self, traj: &Trajectory, step: usize) -> &PolicyParams {
        let key = ConditionKey { t: step, context: self.discretizer.context(traj, step) };
        self.models.get(&key).unwrap_or(&self.pooled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn traj(id: &str, obs: Vec<Vec<f64>>, actions: Vec<u8>) -> Trajectory {
        Trajectory { id: id.into(), static_ctx: None, obs, actions, truth: None }
    }

    fn random_traj<R: Rng>(rng: &mut R, t: usize, d: usize) -> Trajectory {
        let obs = (0..t).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        traj("r", obs, (0..t).map(|_| rng.random_range(0..2u8)).collect())
    }

    #[test]
    fn zero_weights_constant_probability() {
        let mut rng = stream_rng(1, Stream::Init, 0);
        let mut m = BlackBoxPolicy::new(CellKind::Rnn, 4, 2, &mut rng).unwrap();
        m.params_mut().fill(0.0);
        let b2 = m.head.bias_id();
        m.params_mut().get_mut(b2).fill(0.7);
        let t = random_traj(&mut rng, 5, 2);
        for p in blackbox_forward(&m, &t).unwrap() {
            assert_eq!(p, sigmoid_scalar(0.7));
        }
        assert_eq!(extract_coeffs(&m, &t, 2, GradientTarget::Logit).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn first_step_sees_zero_previous_action() {
        let mut rng = stream_rng(1, Stream::Init, 0);
        let m = BlackBoxPolicy::new(CellKind::Lstm, 4, 1, &mut rng).unwrap();
        let t = traj("a", vec![vec![0.3], vec![-0.5]], vec![1, 0]);
        let ctx = m.step_contexts(&t).unwrap();
        assert_eq!(ctx[0].a_prev, 0.0);
        assert_eq!(ctx[1].a_prev, 1.0);
        assert_eq!(ctx[0].state.hidden, vec![0.0; 4]);
    }

    #[test]
    fn blackbox_is_causal() {
        let mut rng = stream_rng(2, Stream::Init, 0);
        let m = BlackBoxPolicy::new(CellKind::Rnn, 6, 2, &mut rng).unwrap();
        let a = random_traj(&mut rng, 6, 2);
        let mut b = a.clone();
        b.obs.swap(4, 5);
        b.actions.swap(3, 5);
        b.actions[4] ^= 1;
        let pa = blackbox_forward(&m, &a).unwrap();
        let pb = blackbox_forward(&m, &b).unwrap();
        assert_eq!(pa[..3], pb[..3]);
        assert!(blackbox_forward(&m, &traj("e", vec![], vec![])).is_err());
    }

    struct LinearProbe {
        w: Vec<f64>,
        b: f64,
    }

    impl StepLogit for LinearProbe {
        type Context = f64;

        fn obs_dim(&self) -> usize {
            self.w.len()
        }

        fn step_contexts(&self, traj: &Trajectory) -> Result<Vec<f64>> {
            Ok((0..traj.len()).map(|t| t as f64).collect())
        }

        fn step_logit(&self, tape: &mut Tape, x: Var, ctx: &f64) -> Result<Var> {
            let w = tape.leaf(Array2::from_shape_vec((self.w.len(), 1), self.w.clone()).unwrap());
            let z = tape.matmul(x, w)?;
            let c = tape.leaf(row(&[self.b + ctx]));
            tape.add(z, c)
        }
    }

    #[test]
    fn linear_model_coefficients_recovered_exactly() {
        let probe = LinearProbe { w: vec![0.3, -1.7, 2.25], b: 0.4 };
        let mut rng = stream_rng(3, Stream::Init, 0);
        let t = random_traj(&mut rng, 4, 3);
        for step in 0..4 {
            let c = extract_coeffs(&probe, &t, step, GradientTarget::Logit).unwrap();
            for (a, b) in c.iter().zip(&probe.w) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(extract_coeffs(&probe, &t, 4, GradientTarget::Logit).is_err());
    }

    #[test]
    fn coefficients_match_finite_differences() {
        let mut rng = stream_rng(4, Stream::Init, 0);
        for cell in [CellKind::Rnn, CellKind::Lstm] {
            let m = BlackBoxPolicy::new(cell, 5, 2, &mut rng).unwrap();
            let t = random_traj(&mut rng, 5, 2);
            let step = 3;
            let ctx = &m.step_contexts(&t).unwrap()[step];
            let logit_at = |x: &[f64]| {
                let mut tape = Tape::new();
                let xv = tape.leaf(row(x));
                let z = m.step_logit(&mut tape, xv, ctx).unwrap();
                tape.scalar_value(z)
            };
            let coeffs = extract_coeffs(&m, &t, step, GradientTarget::Logit).unwrap();
            let probs = extract_coeffs(&m, &t, step, GradientTarget::Probability).unwrap();
            let p = sigmoid_scalar(logit_at(&t.obs[step]));
            for j in 0..2 {
                let h = 1e-5;
                let mut up = t.obs[step].clone();
                up[j] += h;
                let mut dn = t.obs[step].clone();
                dn[j] -= h;
                let fd = (logit_at(&up) - logit_at(&dn)) / (2.0 * h);
                assert!((coeffs[j] - fd).abs() / fd.abs().max(1.0) < 1e-4);
                assert!((probs[j] - p * (1.0 - p) * coeffs[j]).abs() < 1e-12);
            }
            // logit from the step context equals the full forward pass
            let full = blackbox_forward(&m, &t).unwrap()[step];
            assert!((sigmoid_scalar(logit_at(&t.obs[step])) - full).abs() < 1e-14);
        }
    }

    #[test]
    fn separable_data_sign() {
        let t = traj(
            "s",
            vec![vec![-2.0], vec![-1.0], vec![-0.5], vec![0.5], vec![1.0], vec![2.0]],
            vec![0, 0, 0, 1, 1, 1],
        );
        let p = fit_pooled_logreg(&[t]).unwrap();
        assert!(p.coef[0] > 0.0);
        assert!(p.coef[0].is_finite());
    }

    #[test]
    fn single_class_rejected() {
        let t = traj("s", vec![vec![1.0], vec![2.0]], vec![1, 1]);
        assert!(matches!(fit_pooled_logreg(&[t]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn null_data_gives_near_zero_fit() {
        // Every observation appears once with each label, so x carries no
        // information about a and the maximum-likelihood fit is (0, 0).
        let mut rng = stream_rng(5, Stream::Simulation, 0);
        let trajs: Vec<_> = (0..500)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                traj("n", vec![vec![x], vec![x]], vec![0, 1])
            })
            .collect();
        let p = fit_pooled_logreg(&trajs).unwrap();
        assert!(p.intercept.abs() < 0.05, "{p:?}");
        assert!(p.coef[0].abs() < 0.05, "{p:?}");
    }

    #[test]
    fn recovers_known_logistic_parameters() {
        let mut rng = stream_rng(6, Stream::Simulation, 0);
        let obs: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let actions = obs
            .iter()
            .map(|x| u8::from(rng.random::<f64>() < sigmoid_scalar(2.0 * x[0] - 1.0)))
            .collect();
        let p = fit_pooled_logreg(&[traj("k", obs, actions)]).unwrap();
        assert!((p.coef[0] - 2.0).abs() < 0.1, "{p:?}");
        assert!((p.intercept + 1.0).abs() < 0.1, "{p:?}");
    }

    #[test]
    fn condition_specific_single_key_equals_pooled() {
        let mut rng = stream_rng(7, Stream::Simulation, 0);
        let trajs: Vec<_> = (0..200)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                let a = u8::from(rng.random::<f64>() < sigmoid_scalar(x));
                traj("o", vec![vec![x]], vec![a])
            })
            .collect();
        let cs = fit_condition_specific(&trajs, |_: &Trajectory, _| vec![0]).unwrap();
        assert_eq!(cs.models.len(), 1);
        assert_eq!(cs.models.values().next().unwrap(), &cs.pooled);
    }

    #[test]
    fn condition_specific_opposite_associations() {
        let mut rng = stream_rng(8, Stream::Simulation, 0);
        let trajs: Vec<_> = (0..400)
            .map(|i| {
                let x0 = rng.random_range(-2.0..2.0);
                let x1 = rng.random_range(-2.0..2.0);
                let a0 = (i % 2) as u8;
                let sign = if a0 == 1 { 2.0 } else { -2.0 };
                let a1 = u8::from(rng.random::<f64>() < sigmoid_scalar(sign * x1));
                traj("c", vec![vec![x0], vec![x1]], vec![a0, a1])
            })
            .collect();
        let cs = fit_condition_specific(&trajs, ContextRule::PreviousAction).unwrap();
        let pos = &cs.models[&ConditionKey { t: 1, context: vec![1] }];
        let neg = &cs.models[&ConditionKey { t: 1, context: vec![0] }];
        assert!(pos.coef[0] > 0.5 && neg.coef[0] < -0.5, "{pos:?} {neg:?}");
        // Unseen key (t = 5) falls back to the pooled model.
        let long = traj("u", vec![vec![0.0]; 6], vec![0; 6]);
        assert_eq!(cs.params_for(&long, 5), &cs.pooled);
    }

    #[test]
    fn binned_rule_keys() {
        let rule = ContextRule::PreviousActionBinned { lo: -2.0, hi: 2.0, bins: 4 };
        let t = traj("b", vec![vec![-1.9], vec![1.99], vec![0.1]], vec![1, 0, 1]);
        assert_eq!(rule.context(&t, 0), vec![-1, -1]);
        assert_eq!(rule.context(&t, 1), vec![1, 0]);
        assert_eq!(rule.context(&t, 2), vec![0, 3]);
    }
}

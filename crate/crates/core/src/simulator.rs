//! Synthetic decision processes with known per-step policies.
//!
//! Every family is one-dimensional (`d = 1`). Each trajectory draws from its
//! own derived stream, so trajectory `i` is identical regardless of `n`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid_scalar;
use crate::data::{StepTruth, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimFamily {
    /// Coefficient driven by a lagged observation/action pair and time.
    Heterogeneous,
    /// Coefficient `4·x_{t−1}` and intercept `(t−5)/4`.
    Homogeneous,
    /// Deterministic step rule at 0.5, reversed after a high observation.
    Threshold,
}

impl FromStr for SimFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heterogeneous" => Ok(Self::Heterogeneous),
            "homogeneous" => Ok(Self::Homogeneous),
            "threshold" => Ok(Self::Threshold),
            other => Err(Error::InvalidArgument(format!("unknown simulation family '{other}'"))),
        }
    }
}

impl fmt::Display for SimFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Heterogeneous => "heterogeneous",
            Self::Homogeneous => "homogeneous",
            Self::Threshold => "threshold",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub family: SimFamily,
    pub n: usize,
    pub t: usize,
    /// Lag of the heterogeneous family; ignored by the others.
    pub tau: usize,
    pub sigma_a: f64,
    pub sigma_theta: f64,
    pub seed: u64,
    pub holdout_frac: f64,
}

impl SimSpec {
    pub fn heterogeneous(seed: u64) -> Self {
        Self {
            family: SimFamily::Heterogeneous,
            n: 200,
            t: 15,
            tau: 4,
            sigma_a: 0.0,
            sigma_theta: 0.0,
            seed,
            holdout_frac: 0.15,
        }
    }

    pub fn homogeneous(seed: u64) -> Self {
        Self { family: SimFamily::Homogeneous, n: 2000, t: 9, ..Self::heterogeneous(seed) }
    }

    pub fn threshold(seed: u64) -> Self {
        Self { family: SimFamily::Threshold, ..Self::homogeneous(seed) }
    }

    pub fn defaults(family: SimFamily, seed: u64) -> Self {
        match family {
            SimFamily::Heterogeneous => Self::heterogeneous(seed),
            SimFamily::Homogeneous => Self::homogeneous(seed),
            SimFamily::Threshold => Self::threshold(seed),
        }
    }

    fn check(&self, family: SimFamily) -> Result<()> {
        if self.family != family {
            return Err(Error::InvalidArgument(format!("spec family is {}, expected {family}", self.family)));
        }
        if self.n == 0 || self.t == 0 {
            return Err(Error::InvalidArgument("n and t must be positive".into()));
        }
        if !(self.sigma_a >= 0.0 && self.sigma_theta >= 0.0) {
            return Err(Error::InvalidArgument("noise scales must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return Err(Error::InvalidArgument("holdout_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn trajectory_rng(&self, i: usize) -> ChaCha8Rng {
        stream_rng(self.seed, Stream::Simulation, i as u64)
    }
}

/// Dispatch on `spec.family`.
pub fn simulate(spec: &SimSpec) -> Result<Vec<Trajectory>> {
    match spec.family {
        SimFamily::Heterogeneous => simulate_heterogeneous(spec),
        SimFamily::Homogeneous => simulate_homogeneous(spec),
        SimFamily::Threshold => simulate_threshold(spec),
    }
}

fn trajectory_id(i: usize) -> String {
    format!("sim-{i:05}")
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// Heterogeneous family with steps `t = 1..=T`:
/// `θ_t = x_{t−τ}(2a_{t−τ}−1) + t/T + ε_θ`, `p_t = 1/(1+exp(−θ_t x_t + ε_a))`.
/// The lag term is zero while `t ≤ τ`.
pub fn simulate_heterogeneous(spec: &SimSpec) -> Result<Vec<Trajectory>> {
    spec.check(SimFamily::Heterogeneous)?;
    if spec.t <= spec.tau {
        return Err(Error::InvalidArgument(format!("T = {} must exceed tau = {}", spec.t, spec.tau)));
    }
    let horizon = spec.t as f64;
    Ok((0..spec.n)
        .map(|i| {
            let mut rng = spec.trajectory_rng(i);
            let mut obs = Vec::with_capacity(spec.t);
            let mut actions: Vec<u8> = Vec::with_capacity(spec.t);
            let mut truth = Vec::with_capacity(spec.t);
            for step in 1..=spec.t {
                let x: f64 = rng.random_range(-2.0..2.0);
                let eps_theta = spec.sigma_theta * rng.sample::<f64, _>(StandardNormal);
                let eps_a = spec.sigma_a * rng.sample::<f64, _>(StandardNormal);
                let lag = if step > spec.tau {
                    let j = step - spec.tau - 1;
                    obs[j] * (2.0 * f64::from(actions[j]) - 1.0)
                } else {
                    0.0
                };
                let theta = lag + step as f64 / horizon + eps_theta;
                let p = heterogeneous_probability(theta, x, eps_a);
                actions.push(bernoulli(&mut rng, p));
                obs.push(x);
                truth.push(StepTruth { theta: vec![theta], intercept: Some(-eps_a), p, eps_a: Some(eps_a) });
            }
            Trajectory {
                id: trajectory_id(i),
                static_ctx: None,
                obs: obs.into_iter().map(|x| vec![x]).collect(),
                actions,
                truth: Some(truth),
            }
        })
        .collect())
}

/// `1/(1+exp(−θx + ε_a))`.
pub fn heterogeneous_probability(theta: f64, x: f64, eps_a: f64) -> f64 {
    sigmoid_scalar(theta * x - eps_a)
}

/// Homogeneous family with steps `t = 0..T`: `p_t = σ(4x_{t−1}·x_t + (t−5)/4)`,
/// `x_{−1} = 0`.
pub fn simulate_homogeneous(spec: &SimSpec) -> Result<Vec<Trajectory>> {
    spec.check(SimFamily::Homogeneous)?;
    Ok((0..spec.n)
        .map(|i| {
            let mut rng = spec.trajectory_rng(i);
            let mut prev = 0.0;
            let mut obs = Vec::with_capacity(spec.t);
            let mut actions = Vec::with_capacity(spec.t);
            let mut truth = Vec::with_capacity(spec.t);
            for step in 0..spec.t {
                let x: f64 = rng.random_range(-1.0..1.0);
                let (w, b) = homogeneous_params(prev, step);
                let p = sigmoid_scalar(w * x + b);
                actions.push(bernoulli(&mut rng, p));
                obs.push(vec![x]);
                truth.push(StepTruth { theta: vec![w], intercept: Some(b), p, eps_a: None });
                prev = x;
            }
            Trajectory { id: trajectory_id(i), static_ctx: None, obs, actions, truth: Some(truth) }
        })
        .collect())
}

/// `(w, b) = (4·x_prev, (t−5)/4)`.
pub fn homogeneous_params(x_prev: f64, t: usize) -> (f64, f64) {
    (4.0 * x_prev, (t as f64 - 5.0) / 4.0)
}

/// Threshold family: act iff `x_t < 0.5`, reversed when `x_{t−1} ≥ 0.5`;
/// `x_{−1} = 0`.
pub fn simulate_threshold(spec: &SimSpec) -> Result<Vec<Trajectory>> {
    spec.check(SimFamily::Threshold)?;
    Ok((0..spec.n)
        .map(|i| {
            let mut rng = spec.trajectory_rng(i);
            let mut prev = 0.0;
            let mut obs = Vec::with_capacity(spec.t);
            let mut actions = Vec::with_capacity(spec.t);
            let mut truth = Vec::with_capacity(spec.t);
            for _ in 0..spec.t {
                let x: f64 = rng.random::<f64>();
                let a = threshold_action(prev, x);
                actions.push(a);
                obs.push(vec![x]);
                truth.push(StepTruth { theta: Vec::new(), intercept: None, p: f64::from(a), eps_a: None });
                prev = x;
            }
            Trajectory { id: trajectory_id(i), static_ctx: None, obs, actions, truth: Some(truth) }
        })
        .collect())
}

pub fn threshold_action(x_prev: f64, x: f64) -> u8 {
    let base = x < 0.5;
    u8::from(if x_prev >= 0.5 { !base } else { base })
}

/// Trajectory-level `(train, holdout)` partition with `round(n·frac)` held out.
pub fn split_holdout(
    trajectories: Vec<Trajectory>,
    frac: f64,
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::InvalidArgument("holdout fraction must lie in [0, 1)".into()));
    }
    let n = trajectories.len();
    let n_hold = (n as f64 * frac).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let mut hold = vec![false; n];
    for &i in &order[..n_hold] {
        hold[i] = true;
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (tr, h) in trajectories.into_iter().zip(hold) {
        if h {
            holdout.push(tr);
        } else {
            train.push(tr);
        }
    }
    Ok((train, holdout))
}

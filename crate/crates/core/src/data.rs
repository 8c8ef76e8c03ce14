//! Trajectories, the JSON Lines wire format, and padded minibatches.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Ground truth for one step of a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTruth {
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    pub p: f64,
    /// Decision-noise realization folded into `p`, when the process has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_a: Option<f64>,
}

/// One agent's observations and binary actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    #[serde(rename = "static", default, skip_serializing_if = "Option::is_none")]
    pub static_ctx: Option<Vec<f64>>,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<StepTruth>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.first().map_or(0, Vec::len)
    }

    pub fn static_dim(&self) -> usize {
        self.static_ctx.as_ref().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidRecord { id: self.id.clone(), reason };
        if self.obs.is_empty() {
            return Err(bad("trajectory has no steps".into()));
        }
        if self.actions.len() != self.obs.len() {
            return Err(bad(format!(
                "{} actions for {} observations",
                self.actions.len(),
                self.obs.len()
            )));
        }
        let d = self.obs_dim();
        if let Some(t) = self.obs.iter().position(|r| r.len() != d) {
            return Err(bad(format!("observation row {t} has length {}, expected {d}", self.obs[t].len())));
        }
        if self.obs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite observation".into()));
        }
        if let Some(a) = self.actions.iter().find(|&&a| a > 1) {
            return Err(bad(format!("action {a} not in {{0, 1}}")));
        }
        if let Some(s) = &self.static_ctx {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite static context".into()));
            }
        }
        if let Some(truth) = &self.truth {
            if truth.len() != self.obs.len() {
                return Err(bad(format!("{} truth entries for {} steps", truth.len(), self.obs.len())));
            }
        }
        Ok(())
    }
}

/// Validated trajectories sharing one observation dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    obs_dim: usize,
    static_dim: usize,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories.first().ok_or(Error::NoTrajectories)?;
        let (d, s) = (first.obs_dim(), first.static_dim());
        for t in &trajectories {
            t.validate()?;
            if t.obs_dim() != d {
                return Err(Error::InconsistentDim { first: d, other: t.obs_dim(), id: t.id.clone() });
            }
            if t.static_dim() != s {
                return Err(Error::InvalidRecord {
                    id: t.id.clone(),
                    reason: format!("static context length {} differs from {s}", t.static_dim()),
                });
            }
        }
        Ok(Self { trajectories, obs_dim: d, static_dim: s })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn static_dim(&self) -> usize {
        self.static_dim
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Trajectory = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: i + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Dataset::new(out)
}

pub fn save_trajectories(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step tensors for a batch of trajectories padded to the longest one.
///
/// `weights[t][i]` is `1 / (T_i · B)` while step `t` exists for trajectory
/// `i` and zero after it ends, so summing weighted per-step losses gives
/// the mean over trajectories of each trajectory's mean over its own steps.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub size: usize,
    pub max_len: usize,
    pub obs_dim: usize,
    pub obs: Vec<Tensor>,
    pub actions: Vec<Tensor>,
    pub weights: Vec<Tensor>,
    pub statics: Option<Tensor>,
}

impl PaddedBatch {
    pub fn new(trajs: &[&Trajectory]) -> Result<Self> {
        let first = trajs.first().ok_or(Error::NoTrajectories)?;
        let d = first.obs_dim();
        let s = first.static_dim();
        let b = trajs.len();
        let max_len = trajs.iter().map(|t| t.len()).max().unwrap_or(0);
        if trajs.iter().any(|t| t.is_empty()) {
            return Err(Error::EmptyTrajectory);
        }
        let mut obs = Vec::with_capacity(max_len);
        let mut actions = Vec::with_capacity(max_len);
        let mut weights = Vec::with_capacity(max_len);
        for step in 0..max_len {
            let mut x = Array2::zeros((b, d));
            let mut a = Array2::zeros((b, 1));
            let mut w = Array2::zeros((b, 1));
            for (i, t) in trajs.iter().enumerate() {
                if t.obs_dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: t.obs_dim() });
                }
                if step < t.len() {
                    for (j, v) in t.obs[step].iter().enumerate() {
                        x[[i, j]] = *v;
                    }
                    a[[i, 0]] = f64::from(t.actions[step]);
                    w[[i, 0]] = 1.0 / (t.len() as f64 * b as f64);
                }
            }
            obs.push(x);
            actions.push(a);
            weights.push(w);
        }
        let statics = if s > 0 {
            let mut m = Array2::zeros((b, s));
            for (i, t) in trajs.iter().enumerate() {
                let ctx = t.static_ctx.as_ref().ok_or_else(|| Error::InvalidRecord {
                    id: t.id.clone(),
                    reason: "missing static context".into(),
                })?;
                if ctx.len() != s {
                    return Err(Error::DimensionMismatch { expected: s, got: ctx.len() });
                }
                for (j, v) in ctx.iter().enumerate() {
                    m[[i, j]] = *v;
                }
            }
            Some(m)
        } else {
            None
        };
        Ok(Self { size: b, max_len, obs_dim: d, obs, actions, weights, statics })
    }

    /// `[x_t, a_t]` rows for step `t` (0-based).
    pub fn history_input(&self, t: usize) -> Tensor {
        ndarray::concatenate(ndarray::Axis(1), &[self.obs[t].view(), self.actions[t].view()])
            .expect("same row count")
    }
}

//! Model families behind one interface, plus checkpoint files.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::baselines::{blackbox_forward, extract_all_coeffs, fit_pooled_logreg, BlackBoxPolicy, GradientTarget};
use crate::data::{PaddedBatch, Trajectory};
use crate::encoders::CellKind;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet, TensorRecord};
use crate::policy::{predict, CprGlobal, CprPolicy, Objective, PolicyParams};
use crate::rng::{stream_rng, Stream};

/// Anything that yields per-step action probabilities and per-step
/// coefficient estimates for the observation features.
pub trait ActionModel {
    fn action_probabilities(&self, traj: &Trajectory) -> Result<Vec<f64>>;

    fn coefficients(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>>;
}

/// Models optimized by minibatch gradient descent on a tape.
pub trait Trainable: Clone {
    fn param_sets(&self) -> Vec<&ParamSet>;

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet>;

    /// `bound` holds one [`Bound`] per entry of [`Trainable::param_sets`].
    fn objective(&self, tape: &mut Tape, bound: &[Bound], batch: &PaddedBatch, lambda: f64) -> Result<Objective>;
}

impl ActionModel for CprPolicy {
    fn action_probabilities(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        Ok(self.forward(traj)?.into_iter().map(|s| s.prob).collect())
    }

    fn coefficients(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(traj)?.into_iter().map(|s| s.params.coef).collect())
    }
}

impl Trainable for CprPolicy {
    fn param_sets(&self) -> Vec<&ParamSet> {
        vec![self.encoder.params()]
    }

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        vec![self.encoder.params_mut()]
    }

    fn objective(&self, tape: &mut Tape, bound: &[Bound], batch: &PaddedBatch, lambda: f64) -> Result<Objective> {
        CprPolicy::objective(self, tape, &bound[0], batch, lambda)
    }
}

impl ActionModel for CprGlobal {
    fn action_probabilities(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        Ok(self.forward(traj)?.steps.into_iter().map(|s| s.prob).collect())
    }

    fn coefficients(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(traj)?.steps.into_iter().map(|s| s.theta.coef).collect())
    }
}

impl Trainable for CprGlobal {
    fn param_sets(&self) -> Vec<&ParamSet> {
        vec![self.theta.params(), self.beta.params()]
    }

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        vec![self.theta.params_mut(), self.beta.params_mut()]
    }

    fn objective(&self, tape: &mut Tape, bound: &[Bound], batch: &PaddedBatch, lambda: f64) -> Result<Objective> {
        CprGlobal::objective(self, tape, &bound[0], &bound[1], batch, lambda)
    }
}

impl ActionModel for BlackBoxPolicy {
    fn action_probabilities(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        blackbox_forward(self, traj)
    }

    fn coefficients(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        extract_all_coeffs(self, traj, GradientTarget::Logit)
    }
}

impl Trainable for BlackBoxPolicy {
    fn param_sets(&self) -> Vec<&ParamSet> {
        vec![self.params()]
    }

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        vec![self.params_mut()]
    }

    fn objective(&self, tape: &mut Tape, bound: &[Bound], batch: &PaddedBatch, _lambda: f64) -> Result<Objective> {
        BlackBoxPolicy::objective(self, tape, &bound[0], batch)
    }
}

impl ActionModel for PolicyParams {
    fn action_probabilities(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        traj.obs.iter().map(|x| predict(self, x)).collect()
    }

    fn coefficients(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.coef.clone(); traj.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Cpr,
    CprGlobal,
    Blackbox,
    Logreg,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpr" => Ok(ModelKind::Cpr),
            "cpr-global" => Ok(ModelKind::CprGlobal),
            "blackbox" => Ok(ModelKind::Blackbox),
            "logreg" => Ok(ModelKind::Logreg),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected cpr, cpr-global, blackbox or logreg)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Cpr => "cpr",
            ModelKind::CprGlobal => "cpr-global",
            ModelKind::Blackbox => "blackbox",
            ModelKind::Logreg => "logreg",
        })
    }
}

/// Architecture of a model, enough to rebuild it before loading weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub cell: CellKind,
    pub hidden_dim: usize,
    pub obs_dim: usize,
    pub static_dim: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Cpr(CprPolicy),
    Global(CprGlobal),
    BlackBox(BlackBoxPolicy),
    LogReg(PolicyParams),
}

impl Model {
    /// Freshly initialized model; weights come from the `Init` stream of `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Init, 0);
        Ok(match spec.kind {
            ModelKind::Cpr => Model::Cpr(CprPolicy::new(spec.cell, spec.hidden_dim, spec.obs_dim, spec.static_dim, &mut rng)?),
            ModelKind::CprGlobal => Model::Global(CprGlobal::new(
                spec.cell,
                spec.hidden_dim,
                spec.obs_dim,
                spec.static_dim,
                spec.alpha,
                &mut rng,
            )?),
            ModelKind::Blackbox => {
                if spec.static_dim > 0 {
                    return Err(Error::InvalidArgument("black-box model does not take static context".into()));
                }
                Model::BlackBox(BlackBoxPolicy::new(spec.cell, spec.hidden_dim, spec.obs_dim, &mut rng)?)
            }
            ModelKind::Logreg => Model::LogReg(PolicyParams { coef: vec![0.0; spec.obs_dim], intercept: 0.0 }),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Cpr(_) => ModelKind::Cpr,
            Model::Global(_) => ModelKind::CprGlobal,
            Model::BlackBox(_) => ModelKind::Blackbox,
            Model::LogReg(_) => ModelKind::Logreg,
        }
    }

    /// Closed-form-style fit for models without a trainable tape graph.
    pub fn fit_direct(&mut self, train: &[Trajectory]) -> Result<()> {
        match self {
            Model::LogReg(p) => {
                *p = fit_pooled_logreg(train)?;
                Ok(())
            }
            _ => Err(Error::InvalidArgument("model is trained by gradient descent".into())),
        }
    }

    fn logreg_params(p: &PolicyParams) -> ParamSet {
        let mut set = ParamSet::new();
        set.push("coef", Array2::from_shape_vec((1, p.coef.len()), p.coef.clone()).expect("row"));
        set.push("intercept", Array2::from_elem((1, 1), p.intercept));
        set
    }

    pub fn save_checkpoint(&self, spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
        let sets: Vec<Vec<TensorRecord>> = match self {
            Model::LogReg(p) => vec![Self::logreg_params(p).to_records()],
            other => other.param_sets().iter().map(|s| s.to_records()).collect(),
        };
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, spec: *spec, param_sets: sets };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Self, ModelSpec)> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        let mut model = Model::build(&ck.spec, 0)?;
        if let Model::LogReg(p) = &mut model {
            let mut set = Self::logreg_params(p);
            let recs = ck.param_sets.first().ok_or_else(|| Error::Checkpoint("missing tensors".into()))?;
            set.load_records(recs)?;
            p.coef = set.tensors()[0].iter().copied().collect();
            p.intercept = set.tensors()[1][[0, 0]];
            return Ok((model, ck.spec));
        }
        let mut sets = model.param_sets_mut();
        if sets.len() != ck.param_sets.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter sets, found {}",
                sets.len(),
                ck.param_sets.len()
            )));
        }
        for (set, recs) in sets.iter_mut().zip(&ck.param_sets) {
            set.load_records(recs)?;
        }
        Ok((model, ck.spec))
    }
}

const CHECKPOINT_FORMAT: &str = "cpr-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: ModelSpec,
    param_sets: Vec<Vec<TensorRecord>>,
}

impl ActionModel for Model {
    fn action_probabilities(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        match self {
            Model::Cpr(m) => m.action_probabilities(traj),
            Model::Global(m) => m.action_probabilities(traj),
            Model::BlackBox(m) => m.action_probabilities(traj),
            Model::LogReg(m) => m.action_probabilities(traj),
        }
    }

    fn coefficients(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        match self {
            Model::Cpr(m) => m.coefficients(traj),
            Model::Global(m) => m.coefficients(traj),
            Model::BlackBox(m) => m.coefficients(traj),
            Model::LogReg(m) => m.coefficients(traj),
        }
    }
}

impl Trainable for Model {
    fn param_sets(&self) -> Vec<&ParamSet> {
        match self {
            Model::Cpr(m) => m.param_sets(),
            Model::Global(m) => m.param_sets(),
            Model::BlackBox(m) => m.param_sets(),
            Model::LogReg(_) => Vec::new(),
        }
    }

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        match self {
            Model::Cpr(m) => m.param_sets_mut(),
            Model::Global(m) => m.param_sets_mut(),
            Model::BlackBox(m) => m.param_sets_mut(),
            Model::LogReg(_) => Vec::new(),
        }
    }

    fn objective(&self, tape: &mut Tape, bound: &[Bound], batch: &PaddedBatch, lambda: f64) -> Result<Objective> {
        match self {
            Model::Cpr(m) => Trainable::objective(m, tape, bound, batch, lambda),
            Model::Global(m) => Trainable::objective(m, tape, bound, batch, lambda),
            Model::BlackBox(m) => Trainable::objective(m, tape, bound, batch, lambda),
            Model::LogReg(_) => Err(Error::InvalidArgument("logistic regression has no tape objective".into())),
        }
    }
}

//! Recurrent history encoders and the one-hidden-layer emission head.
//!
//! A [`ContextEncoder`] consumes `[x_{t-1}, a_{t-1}]` one step at a time
//! and emits a parameter vector from its hidden state. The first emission
//! comes from the initial state, before any history has been seen.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{row, Tape, Tensor, Var};
use crate::data::PaddedBatch;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(CellKind::Rnn),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::InvalidArgument(format!("unknown cell kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
        })
    }
}

/// Tape handles for a batch of recurrent states.
#[derive(Debug, Clone, Copy)]
pub struct StateVars {
    pub h: Var,
    pub c: Option<Var>,
}

/// Vanilla RNN or LSTM cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trunk {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_in: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

impl Trunk {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        cell: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let width = match cell {
            CellKind::Rnn => hidden_dim,
            CellKind::Lstm => 4 * hidden_dim,
        };
        let fan_in = input_dim + hidden_dim;
        let w_in = params.push_uniform(format!("{prefix}.w_in"), input_dim, width, fan_in, rng);
        let w_hh = params.push_uniform(format!("{prefix}.w_hh"), hidden_dim, width, fan_in, rng);
        let b = params.push_uniform(format!("{prefix}.b"), 1, width, fan_in, rng);
        Self { cell, input_dim, hidden_dim, w_in, w_hh, b }
    }

    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> StateVars {
        let h = tape.leaf(Array2::zeros((batch, self.hidden_dim)));
        let c = match self.cell {
            CellKind::Rnn => None,
            CellKind::Lstm => Some(tape.leaf(Array2::zeros((batch, self.hidden_dim)))),
        };
        StateVars { h, c }
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, state: StateVars, input: Var) -> Result<StateVars> {
        let zi = tape.matmul(input, p.get(self.w_in))?;
        let zh = tape.matmul(state.h, p.get(self.w_hh))?;
        let z = tape.add(zi, zh)?;
        let z = tape.add(z, p.get(self.b))?;
        match self.cell {
            CellKind::Rnn => Ok(StateVars { h: tape.tanh(z), c: None }),
            CellKind::Lstm => {
                let k = self.hidden_dim;
                let c_prev = state
                    .c
                    .ok_or_else(|| Error::InvalidArgument("LSTM state without cell vector".into()))?;
                let zi = tape.slice_cols(z, 0, k)?;
                let zf = tape.slice_cols(z, k, 2 * k)?;
                let zg = tape.slice_cols(z, 2 * k, 3 * k)?;
                let zo = tape.slice_cols(z, 3 * k, 4 * k)?;
                let i = tape.sigmoid(zi);
                let f = tape.sigmoid(zf);
                let g = tape.tanh(zg);
                let o = tape.sigmoid(zo);
                let keep = tape.mul(f, c_prev)?;
                let write = tape.mul(i, g)?;
                let c = tape.add(keep, write)?;
                let tc = tape.tanh(c);
                let h = tape.mul(o, tc)?;
                Ok(StateVars { h, c: Some(c) })
            }
        }
    }
}

/// `out = W2 · tanh(W1 · h + b1) + b2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Head {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    pub out_dim: usize,
}

impl Head {
    pub fn new<R: Rng>(params: &mut ParamSet, prefix: &str, hidden_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let w1 = params.push_uniform(format!("{prefix}.w1"), hidden_dim, hidden_dim, hidden_dim, rng);
        let b1 = params.push_uniform(format!("{prefix}.b1"), 1, hidden_dim, hidden_dim, rng);
        let w2 = params.push_uniform(format!("{prefix}.w2"), hidden_dim, out_dim, hidden_dim, rng);
        let b2 = params.push_uniform(format!("{prefix}.b2"), 1, out_dim, hidden_dim, rng);
        Self { w1, b1, w2, b2, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, h: Var) -> Result<Var> {
        let z = tape.matmul(h, p.get(self.w1))?;
        let z = tape.add(z, p.get(self.b1))?;
        let z = tape.tanh(z);
        let out = tape.matmul(z, p.get(self.w2))?;
        tape.add(out, p.get(self.b2))
    }

    pub fn bias_id(&self) -> ParamId {
        self.b2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub cell: CellKind,
    pub hidden_dim: usize,
    pub obs_dim: usize,
    pub static_dim: usize,
    pub out_dim: usize,
}

impl EncoderConfig {
    /// Encoder for a logistic policy: `obs_dim` coefficients plus an intercept.
    pub fn for_policy(cell: CellKind, hidden_dim: usize, obs_dim: usize, static_dim: usize) -> Self {
        Self { cell, hidden_dim, obs_dim, static_dim, out_dim: obs_dim + 1 }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.obs_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument(format!("encoder dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Recurrent state of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub hidden: Vec<f64>,
    pub cell: Option<Vec<f64>>,
}

/// One consumed history element `[x_{t-1}, a_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStep {
    pub x_prev: Vec<f64>,
    pub a_prev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StaticMap {
    w: ParamId,
    b: ParamId,
}

/// Recurrent trunk plus emission head.
#[derive(Debug, Clone)]
pub struct ContextEncoder {
    config: EncoderConfig,
    params: ParamSet,
    trunk: Trunk,
    head: Head,
    static_map: Option<StaticMap>,
}

impl ContextEncoder {
    pub fn new<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let k = config.hidden_dim;
        let trunk = Trunk::new(&mut params, "trunk", config.cell, config.obs_dim + 1, k, rng);
        let head = Head::new(&mut params, "head", k, config.out_dim, rng);
        let static_map = (config.static_dim > 0).then(|| StaticMap {
            w: params.push_uniform("static.w", config.static_dim, k, config.static_dim, rng),
            b: params.push_uniform("static.b", 1, k, config.static_dim, rng),
        });
        Ok(Self { config, params, trunk, head, static_map })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.params.bind(tape)
    }

    /// Initial state for a batch; `statics` is `B × s` when the encoder
    /// takes static context.
    pub fn initial_state_vars(
        &self,
        tape: &mut Tape,
        p: &Bound,
        statics: Option<Var>,
        batch: usize,
    ) -> Result<StateVars> {
        let mut state = self.trunk.zero_state(tape, batch);
        match (&self.static_map, statics) {
            (None, None) => {}
            (Some(map), Some(s)) => {
                let z = tape.matmul(s, p.get(map.w))?;
                let z = tape.add(z, p.get(map.b))?;
                state.h = tape.tanh(z);
            }
            (Some(_), None) => {
                return Err(Error::InvalidArgument("encoder expects a static context".into()))
            }
            (None, Some(_)) => {
                return Err(Error::InvalidArgument("encoder takes no static context".into()))
            }
        }
        Ok(state)
    }

    pub fn step_vars(&self, tape: &mut Tape, p: &Bound, state: StateVars, input: Var) -> Result<StateVars> {
        self.trunk.step(tape, p, state, input)
    }

    pub fn emit_vars(&self, tape: &mut Tape, p: &Bound, h: Var) -> Result<Var> {
        self.head.forward(tape, p, h)
    }

    /// Emissions for every step of a padded batch: entry `t` is computed
    /// from the state after consuming steps `0..t` and has shape `B × out_dim`.
    pub fn emit_batch(&self, tape: &mut Tape, p: &Bound, batch: &PaddedBatch) -> Result<Vec<Var>> {
        let statics = batch.statics.clone().map(|s| tape.leaf(s));
        let mut state = self.initial_state_vars(tape, p, statics, batch.size)?;
        let mut out = Vec::with_capacity(batch.max_len);
        for t in 0..batch.max_len {
            if t > 0 {
                let input = tape.leaf(batch.history_input(t - 1));
                state = self.step_vars(tape, p, state, input)?;
            }
            out.push(self.emit_vars(tape, p, state.h)?);
        }
        Ok(out)
    }

    fn state_vars(&self, tape: &mut Tape, state: &EncoderState) -> Result<StateVars> {
        let k = self.config.hidden_dim;
        if state.hidden.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: state.hidden.len() });
        }
        let h = tape.leaf(row(&state.hidden));
        let c = match (self.config.cell, &state.cell) {
            (CellKind::Rnn, _) => None,
            (CellKind::Lstm, Some(c)) if c.len() == k => Some(tape.leaf(row(c))),
            (CellKind::Lstm, _) => {
                return Err(Error::InvalidArgument("LSTM state requires a cell vector of length k".into()))
            }
        };
        Ok(StateVars { h, c })
    }

    fn read_state(tape: &Tape, s: StateVars) -> EncoderState {
        EncoderState {
            hidden: tape.value(s.h).iter().copied().collect(),
            cell: s.c.map(|c| tape.value(c).iter().copied().collect()),
        }
    }

    pub fn init_state(&self, static_ctx: Option<&[f64]>) -> Result<EncoderState> {
        if let Some(s) = static_ctx {
            if s.len() != self.config.static_dim {
                return Err(Error::DimensionMismatch { expected: self.config.static_dim, got: s.len() });
            }
        }
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let statics = static_ctx.map(|s| tape.leaf(row(s)));
        let st = self.initial_state_vars(&mut tape, &p, statics, 1)?;
        Ok(Self::read_state(&tape, st))
    }

    pub fn step(&self, state: &EncoderState, input: &HistoryStep) -> Result<EncoderState> {
        if input.x_prev.len() != self.config.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.config.obs_dim, got: input.x_prev.len() });
        }
        if input.x_prev.iter().chain([&input.a_prev]).any(|v| v.is_nan()) {
            return Err(Error::NonFinite("NaN in encoder input".into()));
        }
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let st = self.state_vars(&mut tape, state)?;
        let mut u = input.x_prev.clone();
        u.push(input.a_prev);
        let u = tape.leaf(row(&u));
        let next = self.step_vars(&mut tape, &p, st, u)?;
        Ok(Self::read_state(&tape, next))
    }

    pub fn emit_params(&self, state: &EncoderState) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let st = self.state_vars(&mut tape, state)?;
        let out = self.emit_vars(&mut tape, &p, st.h)?;
        let v: Vec<f64> = tape.value(out).iter().copied().collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("emitted parameters".into()));
        }
        Ok(v)
    }

    /// Weight-by-name access, mainly for tests and inspection.
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.params.by_name(name)
    }
}

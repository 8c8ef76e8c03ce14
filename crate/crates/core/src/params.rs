//! Named parameter tensors and their JSON checkpoint form.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Tape handles for every tensor of one [`ParamSet`], in order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Adds a `rows × cols` tensor drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn push_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let t = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound));
        self.push(name, t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.leaf(t.clone())).collect())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.fill(value);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// All scalars in row-major order, tensor by tensor.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::DimensionMismatch {
                expected: self.num_scalars(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            for (dst, src) in t.iter_mut().zip(&flat[off..off + n]) {
                *dst = *src;
            }
            off += n;
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| TensorRecord {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
                values: t.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites tensors from checkpoint records; names and shapes must
    /// match the existing layout exactly.
    pub fn load_records(&mut self, records: &[TensorRecord]) -> Result<()> {
        if records.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.tensors.len(),
                records.len()
            )));
        }
        for ((name, t), rec) in self.names.iter().zip(&mut self.tensors).zip(records) {
            if &rec.name != name {
                return Err(Error::Checkpoint(format!(
                    "tensor name mismatch: expected {name}, found {}",
                    rec.name
                )));
            }
            if rec.shape != [t.nrows(), t.ncols()] || rec.values.len() != t.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: expected shape {:?}, found {:?}",
                    t.dim(),
                    rec.shape
                )));
            }
            *t = Array2::from_shape_vec((rec.shape[0], rec.shape[1]), rec.values.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }
}

/// [`crate::autodiff::grad_check`] over every scalar of a parameter set:
/// `loss` is rebuilt on a fresh tape for each central-difference probe.
pub fn grad_check_params<F>(params: &ParamSet, loss: F, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let b = p.bind(&mut tape);
        let l = loss(&mut tape, &b)?;
        let v = tape.scalar_value(l);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("loss = {v}")))
        }
    };

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let l = loss(&mut tape, &bound)?;
    tape.backward(l)?;
    let analytic: Vec<f64> = bound
        .vars()
        .iter()
        .flat_map(|v| tape.grad(*v).iter().copied().collect::<Vec<_>>())
        .collect();

    let flat = params.to_flat();
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for (i, ad) in analytic.iter().enumerate() {
        let mut shifted = flat.clone();
        shifted[i] = flat[i] + step;
        probe.set_flat(&shifted)?;
        let up = eval(&probe)?;
        shifted[i] = flat[i] - step;
        probe.set_flat(&shifted)?;
        let down = eval(&probe)?;
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((ad - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}

/// One named tensor in a checkpoint: shape plus row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

//! Plain-text `key = value` run configuration.
//!
//! Lines are `key = value`; blank lines and `#` comments are ignored.
//! Unknown and repeated keys are rejected. Keys left unset resolve to
//! their defaults with a logged notice.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use sha2::{Digest, Sha256};

use crate::encoders::CellKind;
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::simulator::{SimFamily, SimSpec};
use crate::training::{default_learning_rate, Grid, TrainConfig};

/// Every key accepted in a run configuration.
pub const KEYS: &[&str] = &[
    "seed",
    "family",
    "n",
    "t",
    "tau",
    "sigma_a",
    "sigma_theta",
    "holdout_frac",
    "model",
    "cell",
    "k",
    "alpha",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "lambda",
    "split_train",
    "split_val",
    "split_test",
    "grid_k",
    "grid_lambda",
    "grid_seeds",
    "runs",
    "data",
    "checkpoint",
    "out_dir",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected key = value, got {line:?}"),
            })?;
            let key = k.trim();
            if cfg.values.contains_key(key) {
                return Err(Error::Parse { line: i + 1, reason: format!("duplicate key {key:?}") });
            }
            cfg.set(key, v.trim()).map_err(|e| Error::Parse { line: i + 1, reason: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets or overrides one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::InvalidArgument(format!("unknown configuration key {key:?}")));
        }
        if value.is_empty() {
            return Err(Error::InvalidArgument(format!("empty value for {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Explicitly set keys.
    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// `key=value` lines in key order.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::InvalidArgument(format!("{key} = {v:?}: {e}"))))
            .transpose()
    }

    fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        Ok(match self.parsed(key)? {
            Some(v) => v,
            None => {
                info!("{key} not set; using default {default}");
                default
            }
        })
    }

    fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<T>().map_err(|e| Error::InvalidArgument(format!("{key} = {v:?}: {e}"))))
                    .collect()
            })
            .transpose()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_or("seed", 0)
    }

    pub fn family(&self) -> Result<SimFamily> {
        self.get_or("family", SimFamily::Heterogeneous)
    }

    pub fn sim_spec(&self) -> Result<SimSpec> {
        let d = SimSpec::defaults(self.family()?, self.seed()?);
        Ok(SimSpec {
            n: self.get_or("n", d.n)?,
            t: self.get_or("t", d.t)?,
            tau: self.get_or("tau", d.tau)?,
            sigma_a: self.get_or("sigma_a", d.sigma_a)?,
            sigma_theta: self.get_or("sigma_theta", d.sigma_theta)?,
            holdout_frac: self.get_or("holdout_frac", d.holdout_frac)?,
            ..d
        })
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.get_or("model", ModelKind::Cpr)
    }

    pub fn cell(&self) -> Result<CellKind> {
        self.get_or("cell", CellKind::Rnn)
    }

    pub fn alpha(&self) -> Result<f64> {
        self.get_or("alpha", 0.5)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::for_kind(self.model_kind()?);
        let split = (
            self.get_or("split_train", d.split.0)?,
            self.get_or("split_val", d.split.1)?,
            self.get_or("split_test", d.split.2)?,
        );
        let cfg = TrainConfig {
            learning_rate: self.get_or("learning_rate", default_learning_rate(self.model_kind()?))?,
            batch_size: self.get_or("batch_size", d.batch_size)?,
            max_epochs: self.get_or("max_epochs", d.max_epochs)?,
            patience: self.get_or("patience", d.patience)?,
            lambda: self.get_or("lambda", d.lambda)?,
            k: self.get_or("k", d.k)?,
            seed: self.seed()?,
            split,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        let d = Grid::default();
        Ok(Grid {
            ks: self.list("grid_k")?.unwrap_or(d.ks),
            lambdas: self.list("grid_lambda")?.unwrap_or(d.lambdas),
        })
    }

    /// Seeds for grid cells; defaults to the master seed alone.
    pub fn grid_seeds(&self) -> Result<Vec<u64>> {
        Ok(match self.list("grid_seeds")? {
            Some(s) => s,
            None => vec![self.seed()?],
        })
    }

    pub fn runs(&self) -> Result<usize> {
        self.get_or("runs", 10)
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.values
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::InvalidArgument(format!("missing required setting {key:?}")))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.get_or("out_dir", String::from("out"))?))
    }
}

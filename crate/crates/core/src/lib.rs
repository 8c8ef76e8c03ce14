//! Contextualized policy recovery.
//!
//! Recurrent context encoders read an agent's observation/action history
//! and emit, at every timestep, the coefficients of a logistic policy over
//! the current observation. The crate bundles everything needed to train
//! and check such models offline: a small reverse-mode autodiff kernel,
//! RNN/LSTM encoders, the contextual and globally-telescoping policies,
//! black-box and logistic-regression baselines, synthetic decision
//! processes with known ground truth, evaluation metrics, and file I/O.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod data;
pub mod encoders;
pub mod error;
pub mod metrics;
pub mod model;
pub mod params;
pub mod policy;
pub mod rng;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};

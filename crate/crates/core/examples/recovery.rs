//! Parameter recovery on the heterogeneous process: trains the contextual
//! policy and the black-box baseline on one seed and prints held-out
//! correlations with the true coefficients and probabilities.
//!
//! `cargo run --release --example recovery -- [seed] [k] [lambda] [cell]`

use std::time::Instant;

use cpr::encoders::CellKind;
use cpr::metrics::{recovery_values, PEARSON_COEFFICIENT, PEARSON_PROBABILITY};
use cpr::model::{ModelKind, ModelSpec};
use cpr::simulator::{simulate_heterogeneous, split_holdout, SimSpec};
use cpr::training::{split_patients, train_model, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let k: usize = args.get(2).map_or(Ok(32), |s| s.parse())?;
    let lambda: f64 = args.get(3).map_or(Ok(1e-4), |s| s.parse())?;
    let cell: CellKind = args.get(4).map_or(Ok(CellKind::Rnn), |s| s.parse())?;

    let mut sim = SimSpec::heterogeneous(seed);
    if let Ok(v) = std::env::var("N") {
        sim.n = v.parse()?;
    }
    let (rest, holdout) = split_holdout(simulate_heterogeneous(&sim)?, sim.holdout_frac, seed)?;
    let split = split_patients(&rest, (0.85, 0.15, 0.0), seed)?;
    let kinds: Vec<ModelKind> = match std::env::var("KINDS") {
        Ok(v) => v.split(',').map(|s| s.parse()).collect::<Result<_, _>>()?,
        Err(_) => vec![ModelKind::Cpr, ModelKind::Blackbox],
    };
    for kind in kinds {
        let start = Instant::now();
        let spec = ModelSpec { kind, cell, hidden_dim: k, obs_dim: 1, static_dim: 0, alpha: 0.5 };
        let mut cfg = TrainConfig { k, lambda, seed, ..TrainConfig::for_kind(kind) };
        if let Ok(v) = std::env::var("PATIENCE") {
            cfg.patience = v.parse()?;
        }
        if let Ok(v) = std::env::var("EPOCHS") {
            cfg.max_epochs = v.parse()?;
        }
        if let Ok(v) = std::env::var("LR_SCALE") {
            cfg.learning_rate *= v.parse::<f64>()?;
        }
        let fit = train_model(&spec, &split.train, &split.val, &cfg)?;
        let r = recovery_values(&fit.model, &holdout)?;
        if std::env::var("CURVE").is_ok() {
            for e in fit.curve.iter().step_by(50) {
                println!("  {} {:.4} {:.4}", e.epoch, e.train_loss, e.val_loss);
            }
        }
        println!(
            "{kind}: epochs {} best val {:.4} coef r {:?} prob r {:?} ({:.1}s)",
            fit.epochs_run,
            fit.best_val_loss,
            r[PEARSON_COEFFICIENT],
            r[PEARSON_PROBABILITY],
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

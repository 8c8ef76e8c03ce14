use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use cpr::config::RunConfig;
use cpr::data::{load_dataset, save_trajectories, Dataset};
use cpr::metrics::{action_matching, recovery_values, EvalReport};
use cpr::model::{ActionModel, Model, ModelSpec};
use cpr::policy::{
    coefficient_rows, explain_global, feature_name, write_coefficients_csv, write_contributions_csv,
    write_logodds_csv, CoefficientRow,
};
use cpr::simulator::simulate;
use cpr::training::{bootstrap_eval, grid_search, split_patients, train_model, write_curve_csv};

#[derive(Parser, Debug)]
#[command(name = "cpr", version, about = "Train and inspect contextual policy models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand; each override mirrors a config key.
#[derive(Args, Debug, Default)]
struct Common {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// Any configuration key, as key=value; may repeat
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    t: Option<String>,
    #[arg(long, global = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    sigma_a: Option<String>,
    #[arg(long, global = true)]
    sigma_theta: Option<String>,
    #[arg(long, global = true)]
    holdout_frac: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    cell: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    learning_rate: Option<String>,
    #[arg(long, global = true)]
    batch_size: Option<String>,
    #[arg(long, global = true)]
    max_epochs: Option<String>,
    #[arg(long, global = true)]
    patience: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    #[arg(long, global = true)]
    runs: Option<String>,
    /// Trajectory JSONL input
    #[arg(long, global = true)]
    data: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let pairs = [
            ("seed", &self.seed),
            ("out_dir", &self.out_dir),
            ("family", &self.family),
            ("n", &self.n),
            ("t", &self.t),
            ("tau", &self.tau),
            ("sigma_a", &self.sigma_a),
            ("sigma_theta", &self.sigma_theta),
            ("holdout_frac", &self.holdout_frac),
            ("model", &self.model),
            ("cell", &self.cell),
            ("k", &self.k),
            ("alpha", &self.alpha),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("lambda", &self.lambda),
            ("runs", &self.runs),
            ("data", &self.data),
            ("checkpoint", &self.checkpoint),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }

    fn run_config(&self) -> cpr::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::new(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| cpr::Error::InvalidArgument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic trajectories with ground truth
    Simulate,
    /// Split a dataset by patient and train a model
    Train,
    /// Score a checkpoint on a dataset
    Evaluate,
    /// Export per-step policy coefficients
    Explain {
        /// Also export the telescoped history contributions of a global model
        #[arg(long)]
        global: bool,
    },
    /// Select hidden size and penalty on the validation split
    GridSearch,
    /// Repeated re-split training and test evaluation
    Bootstrap,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Explain { .. } => "explain",
            Command::GridSearch => "grid-search",
            Command::Bootstrap => "bootstrap",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a std::collections::BTreeMap<String, String>,
    version: &'static str,
    outputs: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let path = cfg.path("data")?;
    load_dataset(&path).with_context(|| format!("loading {}", path.display()))
}

fn model_spec(cfg: &RunConfig, data: &Dataset) -> anyhow::Result<ModelSpec> {
    Ok(ModelSpec {
        kind: cfg.model_kind()?,
        cell: cfg.cell()?,
        hidden_dim: cfg.train_config()?.k,
        obs_dim: data.obs_dim(),
        static_dim: data.static_dim(),
        alpha: cfg.alpha()?,
    })
}

fn coefficient_export(model: &Model, data: &Dataset) -> anyhow::Result<Vec<CoefficientRow>> {
    let mut rows = Vec::new();
    for tr in data.trajectories() {
        match model {
            Model::Cpr(m) => {
                let params: Vec<_> = m.forward(tr)?.into_iter().map(|s| s.params).collect();
                rows.extend(coefficient_rows(&tr.id, &params));
            }
            Model::Global(m) => {
                let params: Vec<_> = m.forward(tr)?.steps.into_iter().map(|s| s.theta).collect();
                rows.extend(coefficient_rows(&tr.id, &params));
            }
            Model::LogReg(p) => rows.extend(coefficient_rows(&tr.id, &vec![p.clone(); tr.len()])),
            Model::BlackBox(_) => {
                for (t0, coefs) in model.coefficients(tr)?.into_iter().enumerate() {
                    for (j, c) in coefs.into_iter().enumerate() {
                        rows.push(CoefficientRow { trajectory_id: tr.id.clone(), t: t0 + 1, feature: feature_name(j), coefficient: c });
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn run(cmd: &Command, cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    match cmd {
        Command::Simulate => {
            let spec = cfg.sim_spec()?;
            let trajs = simulate(&spec)?;
            let path = out.join("trajectories.jsonl");
            save_trajectories(&path, &trajs)?;
            info!("wrote {} {} trajectories", trajs.len(), spec.family);
            outputs.push(path);
        }
        Command::Train => {
            let data = load(cfg)?;
            let spec = model_spec(cfg, &data)?;
            let tc = cfg.train_config()?;
            let split = split_patients(data.trajectories(), tc.split, tc.seed)?;
            for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
                let p = out.join(format!("{name}.jsonl"));
                save_trajectories(&p, part)?;
                outputs.push(p);
            }
            let fit = train_model(&spec, &split.train, &split.val, &tc)?;
            let ck = out.join("checkpoint.json");
            fit.model.save_checkpoint(&spec, &ck)?;
            let curves = out.join("curves.csv");
            write_curve_csv(&curves, &fit.curve)?;
            let meta = out.join("fit.json");
            write_json(&meta, &fit.metadata(spec, &tc))?;
            outputs.extend([ck, curves, meta]);
        }
        Command::Evaluate => {
            let data = load(cfg)?;
            let (model, _) = Model::load_checkpoint(cfg.path("checkpoint")?)?;
            let mut values = action_matching(&model, data.trajectories())?;
            if data.trajectories().iter().all(|t| t.truth.is_some()) {
                values.extend(recovery_values(&model, data.trajectories())?);
            }
            let path = out.join("eval.json");
            write_json(&path, &EvalReport::single(&values))?;
            outputs.push(path);
        }
        Command::Explain { global } => {
            let data = load(cfg)?;
            let (model, _) = Model::load_checkpoint(cfg.path("checkpoint")?)?;
            let path = out.join("coefficients.csv");
            write_coefficients_csv(BufWriter::new(File::create(&path)?), &coefficient_export(&model, &data)?)?;
            outputs.push(path);
            if *global {
                let Model::Global(g) = &model else {
                    bail!(cpr::Error::InvalidArgument("--global requires a cpr-global checkpoint".into()));
                };
                let traces = data.trajectories().iter().map(|t| g.forward(t)).collect::<cpr::Result<Vec<_>>>()?;
                let explanations: Vec<_> = traces.iter().map(explain_global).collect();
                let contrib = out.join("contributions.csv");
                write_contributions_csv(BufWriter::new(File::create(&contrib)?), &explanations)?;
                let logodds = out.join("logodds.csv");
                write_logodds_csv(BufWriter::new(File::create(&logodds)?), &traces)?;
                outputs.extend([contrib, logodds]);
            }
        }
        Command::GridSearch => {
            let data = load(cfg)?;
            let spec = model_spec(cfg, &data)?;
            let tc = cfg.train_config()?;
            let split = split_patients(data.trajectories(), tc.split, tc.seed)?;
            let result = grid_search(&spec, &split.train, &split.val, &tc, &cfg.grid()?, &cfg.grid_seeds()?)?;
            let path = out.join("grid.json");
            write_json(&path, &result)?;
            outputs.push(path);
        }
        Command::Bootstrap => {
            let data = load(cfg)?;
            let spec = model_spec(cfg, &data)?;
            let result = bootstrap_eval(data.trajectories(), &spec, &cfg.train_config()?, cfg.runs()?)?;
            let path = out.join("bootstrap.json");
            write_json(&path, &result)?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<cpr::Error>(),
        Some(cpr::Error::InvalidArgument(_) | cpr::Error::Parse { .. })
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let cfg = match cli.common.run_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = (|| -> anyhow::Result<()> {
        let out = cfg.out_dir()?;
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let outputs = run(&cli.command, &cfg, &out)?;
        let manifest = Manifest {
            command: cli.command.name(),
            seed: cfg.seed()?,
            config_hash: cfg.hash(),
            config: cfg.values(),
            version: env!("CARGO_PKG_VERSION"),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        write_json(&out.join(format!("{}.manifest.json", cli.command.name())), &manifest)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}

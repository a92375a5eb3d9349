//! `rflab`: synthetic corpora, training, evaluation sweeps, ablations and
//! attention figures.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! failures while running.

mod ablate;
mod attn;
mod config;
mod eval;
mod gen;
mod output;
mod plot;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "rflab", version, about = "Radio map estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set train.max_steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Corpus directory (overrides `data.root` and `RFLAB_DATA_ROOT`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic corpus into the dataset layout.
    SynthGen(gen::SynthGenArgs),
    /// Train a model (or fine-tune a checkpoint) on the train split.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint and the IDW baseline on one split.
    Eval(eval::EvalArgs),
    /// RMSE against the number of observation points.
    SweepObs(eval::SweepArgs),
    /// Train and evaluate every cell of the ablation grid.
    Ablate(ablate::AblateArgs),
    /// Export per-observation attention heatmaps for one scene.
    AttnExport(attn::AttnArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err
        .chain()
        .filter_map(|e| e.downcast_ref::<rflab::Error>())
        .any(rflab::Error::is_validation);
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::SynthGen(a) => gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run_eval(a),
        Command::SweepObs(a) => eval::run_sweep(a),
        Command::Ablate(a) => ablate::run(a),
        Command::AttnExport(a) => attn::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

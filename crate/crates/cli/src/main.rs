//! `stcnn`: generate or convert trajectory data, train models, sample
//! forecasts, evaluate and plot.

mod config;
mod data;
mod error;
mod evaluate;
mod models;
mod plot;
mod sample;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stcnn_core::data::SynthKind;
use stcnn_core::GridSpec;

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "stcnn", version, about = "Grid trajectory forecasting with spatio-temporal convolutions")]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// `key=value` settings file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid size as HxW.
    #[arg(long, global = true)]
    grid: Option<GridSpec>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic trajectory file.
    Generate(data::GenerateArgs),
    /// Convert raw MNIST pen-stroke sequence files.
    ConvertMnistseq(data::ConvertArgs),
    /// Assign trajectories to cross-validation folds.
    Split(data::SplitArgs),
    /// Fit a model and write its checkpoint and loss curve.
    Train(train::TrainArgs),
    /// Draw forecasts for every segment of a trajectory file.
    Sample(sample::SampleArgs),
    /// Score models on test folds.
    Evaluate(evaluate::EvaluateArgs),
    /// Render a one-step heatmap and a forecast overlay.
    Plot(plot::PlotArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Generate(_) => "generate",
            Self::ConvertMnistseq(_) => "convert-mnistseq",
            Self::Split(_) => "split",
            Self::Train(_) => "train",
            Self::Sample(_) => "sample",
            Self::Evaluate(_) => "evaluate",
            Self::Plot(_) => "plot",
        }
    }
}

/// Settings shared by every command, resolved against the config file.
pub struct Common {
    pub seed: u64,
    pub out: PathBuf,
}

pub fn common(cfg: &mut RunConfig, g: &Global) -> CliResult<Common> {
    let seed = cfg.value("seed", g.seed, 0)?;
    let out = cfg.value::<String>("out", g.out.as_ref().map(|p| p.display().to_string()), ".".into())?;
    let out = PathBuf::from(out);
    std::fs::create_dir_all(&out)?;
    Ok(Common { seed, out })
}

pub fn grid(cfg: &mut RunConfig, g: &Global, default: GridSpec) -> CliResult<GridSpec> {
    cfg.value("grid", g.grid, default)
}

pub fn parse_kind(s: &str) -> Result<SynthKind, String> {
    s.parse().map_err(|e: stcnn_core::Error| e.to_string())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.command.name(), cli.global.config.as_deref())?;
    let g = &cli.global;
    match &cli.command {
        Command::Generate(a) => data::generate(&mut cfg, g, a),
        Command::ConvertMnistseq(a) => data::convert(&mut cfg, g, a),
        Command::Split(a) => data::split(&mut cfg, g, a),
        Command::Train(a) => train::run(&mut cfg, g, a),
        Command::Sample(a) => sample::run(&mut cfg, g, a),
        Command::Evaluate(a) => evaluate::run(&mut cfg, g, a),
        Command::Plot(a) => plot::run(&mut cfg, g, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

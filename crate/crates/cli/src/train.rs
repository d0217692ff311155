use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use stcnn_core::baselines::{grid_search, LstmConfig, LstmGaussian};
use stcnn_core::checkpoint::Checkpoint;
use stcnn_core::data::Dataset;
use stcnn_core::metrics::cross_entropy;
use stcnn_core::trainer::{split_validation, train_from, write_loss_csv, TrainConfig, TrainReport, TrainState, Trainable};
use stcnn_core::{ArchConfig, GridSpec, Stcnn};

use crate::config::RunConfig;
use crate::error::{require_file, CliError, CliResult};
use crate::models::{fold_list, fold_path, load_folds};
use crate::{common, grid, Global};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Trajectory file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// stcnn or lstm.
    #[arg(long)]
    model: Option<String>,
    /// Fold file; each selected fold trains on the other folds.
    #[arg(long)]
    folds: Option<PathBuf>,
    /// Train only this fold (default: every fold).
    #[arg(long)]
    fold: Option<usize>,
    /// Window length.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Save the training state every this many steps.
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Model checkpoint path template, relative to --out; `{fold}` expands to
    /// the fold number.
    #[arg(long)]
    checkpoint: Option<String>,
    /// Training-state checkpoint to continue from (template as above).
    #[arg(long)]
    resume: Option<String>,
    /// STCNN architecture override `key=value` (repeatable).
    #[arg(long = "arch", value_name = "KEY=VALUE")]
    arch: Vec<String>,
    /// LSTM override `key=value`: hidden, train_sigma, train_lambda.
    #[arg(long = "lstm", value_name = "KEY=VALUE")]
    lstm: Vec<String>,
}

enum Kind {
    Stcnn(ArchConfig),
    Lstm(LstmConfig),
}

fn arch_config(cfg: &mut RunConfig, a: &TrainArgs, s: usize, grid: GridSpec) -> CliResult<ArchConfig> {
    let pairs = cfg.prefixed("arch", &a.arch)?;
    if let Some(k) = ["s", "grid"].into_iter().find(|k| pairs.contains_key(*k)) {
        return Err(CliError::Usage(format!("set {k} with --{k}, not arch.{k}")));
    }
    let mut arch = ArchConfig {
        s,
        grid,
        ..ArchConfig::default()
    };
    arch.apply_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    arch.validate()?;
    Ok(arch)
}

fn lstm_config(cfg: &mut RunConfig, a: &TrainArgs, s: usize, grid: GridSpec) -> CliResult<LstmConfig> {
    let mut c = LstmConfig {
        s,
        grid,
        ..LstmConfig::default()
    };
    for (k, v) in cfg.prefixed("lstm", &a.lstm)? {
        let bad = || CliError::Usage(format!("invalid lstm.{k}={v}"));
        match k.as_str() {
            "hidden" => c.hidden = v.parse().map_err(|_| bad())?,
            "train_sigma" => c.train_sigma = v.parse().map_err(|_| bad())?,
            "train_lambda" => c.train_lambda = v.parse().map_err(|_| bad())?,
            _ => return Err(CliError::Usage(format!("unknown LSTM setting lstm.{k}"))),
        }
    }
    Ok(c)
}

fn under(out: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        out.join(p)
    }
}

pub fn run(cfg: &mut RunConfig, g: &Global, a: &TrainArgs) -> CliResult<()> {
    let data = PathBuf::from(cfg.required("data", a.data.as_ref().map(|p| p.display().to_string()))?);
    let model = cfg.value("model", a.model.clone(), "stcnn".to_string())?;
    let folds_file = cfg.optional("folds", a.folds.as_ref().map(|p| p.display().to_string()))?;
    let fold = cfg.optional("fold", a.fold)?;
    let s = cfg.value("s", a.s, 4)?;
    let grid = grid(cfg, g, GridSpec::default())?;
    let c = common(cfg, g)?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: cfg.value("epochs", a.epochs, d.epochs)?,
        batch_size: cfg.value("batch_size", a.batch_size, d.batch_size)?,
        step_size: cfg.value("step_size", a.step_size, d.step_size)?,
        seed: c.seed,
        checkpoint_every: cfg.value("checkpoint_every", a.checkpoint_every, 0)?,
        checkpoint_path: None,
        validation_fraction: cfg.value("validation_fraction", a.validation_fraction, d.validation_fraction)?,
        max_steps: cfg.optional("max_steps", a.max_steps)?,
        eval_initial: true,
    };
    let default_ckpt = if folds_file.is_some() { "model-{fold}.ckpt" } else { "model.ckpt" };
    let ckpt = cfg.value("checkpoint", a.checkpoint.clone(), default_ckpt.to_string())?;
    let resume = cfg.optional("resume", a.resume.clone())?;
    let kind = match model.as_str() {
        "stcnn" => Kind::Stcnn(arch_config(cfg, a, s, grid)?),
        "lstm" => Kind::Lstm(lstm_config(cfg, a, s, grid)?),
        other => return Err(CliError::Usage(format!("unknown model {other:?} (stcnn, lstm)"))),
    };
    if fold.is_some() && folds_file.is_none() {
        return Err(CliError::Usage("--fold needs --folds".into()));
    }
    cfg.finish()?;
    tc.validate()?;
    require_file(&data)?;
    let ds = Dataset::load(&data, grid)?;
    let runs: Vec<(Option<usize>, Dataset)> = match &folds_file {
        Some(f) => {
            let folds = load_folds(Path::new(f), &ds)?;
            fold_list(&folds, fold)?
                .into_iter()
                .map(|k| (Some(k), ds.subset(&folds.train(k))))
                .collect()
        }
        None => vec![(None, ds)],
    };
    for (fold, set) in runs {
        let ckpt_path = under(&c.out, fold_path(&ckpt, fold));
        let state_path = ckpt_path.with_extension("state");
        if let Some(parent) = ckpt_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut tc = tc.clone();
        tc.checkpoint_path = Some(state_path.clone());
        let seed = tc.seed.wrapping_add(fold.unwrap_or(0) as u64);
        tc.seed = seed;
        let (fit, val) = split_validation(&set, tc.validation_fraction, seed);
        let resume = resume.as_ref().map(|r| under(&c.out, fold_path(r, fold)));
        let label = fold.map_or_else(|| "all data".to_string(), |f| format!("fold {f}"));
        log::info!(
            "training {model} on {label}: {} fit, {} validation trajectories",
            fit.len(),
            val.as_ref().map_or(0, Dataset::len)
        );
        let (report, checkpoint) = match &kind {
            Kind::Stcnn(arch) => {
                let mut m = Stcnn::new(arch.clone(), seed)?;
                let report = fit_model(&mut m, &fit, val.as_ref(), &tc, resume.as_deref())?;
                (report, m.to_checkpoint())
            }
            Kind::Lstm(lc) => {
                let mut m = LstmGaussian::new(lc.clone(), seed)?;
                let report = fit_model(&mut m, &fit, val.as_ref(), &tc, resume.as_deref())?;
                let held_out = val.as_ref().unwrap_or(&fit);
                let search = grid_search(|sigma, lambda| {
                    let mut probe = m.clone();
                    probe.set_output(sigma, lambda)?;
                    Ok(cross_entropy(&probe, held_out)?.per_step)
                })?;
                m.set_output(search.sigma, search.lambda)?;
                log::info!("output sigma={} lambda={} (nll {:.4})", search.sigma, search.lambda, search.nll);
                (report, m.to_checkpoint())
            }
        };
        checkpoint.save(&ckpt_path)?;
        let loss_path = ckpt_path.with_extension("loss.csv");
        let mut w = BufWriter::new(File::create(&loss_path)?);
        write_loss_csv(&mut w, &report.curve)?;
        w.flush()?;
        println!(
            "{label}: {} steps, best epoch {}, checkpoint {}, loss curve {}",
            report.steps,
            report.best_epoch.map_or_else(|| "n/a".into(), |e| e.to_string()),
            ckpt_path.display(),
            loss_path.display()
        );
    }
    cfg.write_sidecar(&c.out)?;
    Ok(())
}

fn fit_model<M: Trainable>(
    m: &mut M,
    fit: &Dataset,
    val: Option<&Dataset>,
    tc: &TrainConfig,
    resume: Option<&Path>,
) -> CliResult<TrainReport> {
    let state = match resume {
        Some(p) => {
            require_file(p)?;
            let c = Checkpoint::load(p)?;
            let params = c
                .store("params")
                .ok_or_else(|| CliError::runtime(format!("{}: no parameters", p.display())))?;
            if !same_shapes(params, m.params()) {
                return Err(CliError::Usage(format!(
                    "{} does not match the configured model",
                    p.display()
                )));
            }
            let mut restored = params.clone();
            restored.set_seed(m.params().seed());
            *m.params_mut() = restored;
            Some(TrainState::from_checkpoint(&c, m.params())?)
        }
        None => None,
    };
    Ok(train_from(m, fit, val, tc, state)?)
}

fn same_shapes(a: &stcnn_core::tensor::ParameterStore, b: &stcnn_core::tensor::ParameterStore) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
}

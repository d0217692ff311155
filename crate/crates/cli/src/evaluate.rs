use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use stcnn_core::baselines::{grid_search, MeanPointModel, ShotgunConfig, UniformModel};
use stcnn_core::data::Dataset;
use stcnn_core::evaluate::{evaluate, Method, Protocol};
use stcnn_core::metrics::{compare_report, cross_entropy, default_marks, MetricsReport};
use stcnn_core::GridSpec;

use crate::config::RunConfig;
use crate::error::{require_file, CliError, CliResult};
use crate::models::{check_grid, fold_list, fold_path, load_folds, Loaded};
use crate::{common, grid, Global};

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Trajectory file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Fold file; without one the whole file is a single test fold.
    #[arg(long)]
    folds: Option<PathBuf>,
    /// Evaluate only this fold.
    #[arg(long)]
    fold: Option<usize>,
    /// `uniform`, `shotgun`, `mean-point=CKPT` or `NAME=CKPT` (repeatable);
    /// `{fold}` in a path expands to the fold number.
    #[arg(long = "model", value_name = "SPEC")]
    models: Vec<String>,
    /// Observed segment length.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Forecasts drawn per test segment.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    oracle_fraction: Option<f64>,
    /// Comma-separated 1-based steps (default: quarters of the horizon).
    #[arg(long)]
    marks: Option<String>,
    /// Mean-point spread; fitted on the training folds when absent.
    #[arg(long)]
    mean_sigma: Option<f64>,
    #[arg(long)]
    mean_lambda: Option<f64>,
}

enum Spec {
    Uniform,
    Shotgun,
    MeanPoint(String),
    Checkpoint(String, String),
}

impl Spec {
    fn parse(s: &str) -> CliResult<Self> {
        match s.split_once('=') {
            None if s == "uniform" => Ok(Self::Uniform),
            None if s == "shotgun" => Ok(Self::Shotgun),
            Some(("mean-point", p)) => Ok(Self::MeanPoint(p.into())),
            Some((name, p)) if !name.is_empty() && !p.is_empty() => Ok(Self::Checkpoint(name.into(), p.into())),
            _ => Err(CliError::Usage(format!(
                "bad model spec {s:?} (uniform, shotgun, mean-point=CKPT, NAME=CKPT)"
            ))),
        }
    }

    fn name(&self) -> &str {
        match self {
            Self::Uniform => "uniform",
            Self::Shotgun => "shotgun",
            Self::MeanPoint(_) => "mean-point",
            Self::Checkpoint(n, _) => n,
        }
    }
}

fn load_checked(path: &Path, grid: GridSpec, s: usize) -> CliResult<Loaded> {
    let l = Loaded::load(path)?;
    check_grid(l.model(), grid, &path.display().to_string())?;
    if l.model().window_len() != s {
        return Err(CliError::Usage(format!(
            "{} conditions on {} points but s={s}",
            path.display(),
            l.model().window_len()
        )));
    }
    Ok(l)
}

pub fn run(cfg: &mut RunConfig, g: &Global, a: &EvaluateArgs) -> CliResult<()> {
    let data = PathBuf::from(cfg.required("data", a.data.as_ref().map(|p| p.display().to_string()))?);
    let folds_file = cfg.optional("folds", a.folds.as_ref().map(|p| p.display().to_string()))?;
    let fold = cfg.optional("fold", a.fold)?;
    let specs = cfg
        .list("models", a.models.clone())
        .iter()
        .map(|s| Spec::parse(s))
        .collect::<CliResult<Vec<_>>>()?;
    if specs.is_empty() {
        return Err(CliError::Usage("missing --model (or models= in the config file)".into()));
    }
    let s = cfg.value("s", a.s, 4)?;
    let horizon = cfg.value("horizon", a.horizon, 10)?;
    let samples = cfg.value("samples", a.samples, 100)?;
    let oracle_fraction = cfg.value("oracle_fraction", a.oracle_fraction, 0.1)?;
    let marks_text = cfg.value(
        "marks",
        a.marks.clone(),
        default_marks(horizon).iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
    )?;
    let marks = marks_text
        .split(',')
        .map(|m| m.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("invalid marks={marks_text}")))?;
    if samples == 0 || horizon == 0 || marks.iter().any(|&m| m == 0 || m > horizon) {
        return Err(CliError::Usage(
            "samples and horizon must be positive and marks within 1..=horizon".into(),
        ));
    }
    if !(oracle_fraction > 0.0 && oracle_fraction <= 1.0) || oracle_fraction * (samples as f64) < 1.0 - 1e-9 {
        return Err(CliError::Usage(format!(
            "oracle_fraction={oracle_fraction} keeps no forecast out of {samples}"
        )));
    }
    let mean_sigma = cfg.optional("mean_sigma", a.mean_sigma)?;
    let mean_lambda = cfg.optional("mean_lambda", a.mean_lambda)?;
    let grid = grid(cfg, g, GridSpec::default())?;
    let c = common(cfg, g)?;
    cfg.finish()?;
    if fold.is_some() && folds_file.is_none() {
        return Err(CliError::Usage("--fold needs --folds".into()));
    }
    require_file(&data)?;
    let ds = Dataset::load(&data, grid)?;
    let protocol = Protocol {
        s,
        horizon,
        samples,
        oracle_fraction,
        marks,
        seed: c.seed,
    };
    let runs: Vec<(usize, Dataset, Option<Dataset>)> = match &folds_file {
        Some(f) => {
            let folds = load_folds(Path::new(f), &ds)?;
            fold_list(&folds, fold)?
                .into_iter()
                .map(|k| (k, ds.subset(&folds.test(k)), Some(ds.subset(&folds.train(k)))))
                .collect()
        }
        None => vec![(0, ds, None)],
    };
    let shotgun = ShotgunConfig::default();
    let mut reports = Vec::new();
    for (fold, test, train) in &runs {
        let fold_arg = folds_file.as_ref().map(|_| *fold);
        for spec in &specs {
            let report = match spec {
                Spec::Uniform => {
                    let u = UniformModel::new(grid, s);
                    evaluate(&Method::Model(&u), spec.name(), *fold, test, &protocol)?
                }
                Spec::Shotgun => evaluate(&Method::Shotgun(&shotgun), spec.name(), *fold, test, &protocol)?,
                Spec::Checkpoint(name, p) => {
                    let l = load_checked(&fold_path(p, fold_arg), grid, s)?;
                    evaluate(&Method::Model(l.model()), name, *fold, test, &protocol)?
                }
                Spec::MeanPoint(p) => {
                    let l = load_checked(&fold_path(p, fold_arg), grid, s)?;
                    let inner = l.model();
                    let (sigma, lambda) = match (mean_sigma, mean_lambda, train) {
                        (Some(sg), Some(lm), _) => (sg, lm),
                        (_, _, Some(train)) => {
                            let r = grid_search(|sigma, lambda| {
                                Ok(cross_entropy(&MeanPointModel { inner, sigma, lambda }, train)?.per_step)
                            })?;
                            log::info!("fold {fold}: mean-point sigma={} lambda={}", r.sigma, r.lambda);
                            (r.sigma, r.lambda)
                        }
                        _ => {
                            return Err(CliError::Usage(
                                "mean-point needs --folds to fit its spread, or --mean-sigma and --mean-lambda".into(),
                            ))
                        }
                    };
                    let mp = MeanPointModel { inner, sigma, lambda };
                    evaluate(&Method::MeanPoint { model: &mp, sampler: inner }, spec.name(), *fold, test, &protocol)?
                }
            };
            reports.push(report);
        }
    }
    let metrics = c.out.join("metrics.csv");
    std::fs::write(&metrics, metrics_csv(&reports))?;
    let folds_run = runs.len();
    if folds_run >= 2 {
        let cmp = compare_report(&reports)?;
        std::fs::write(c.out.join("report.csv"), cmp.to_csv())?;
        let table = cmp.to_table();
        std::fs::write(c.out.join("report.txt"), &table)?;
        print!("{table}");
    } else {
        let text = single_fold_table(&reports);
        std::fs::write(c.out.join("report.txt"), &text)?;
        print!("{text}");
    }
    cfg.write_sidecar(&c.out)?;
    println!("per-fold metrics written to {}", metrics.display());
    Ok(())
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.6}"))
}

fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from("model,fold,metric,value\n");
    for r in reports {
        for (metric, v) in r.values() {
            let _ = writeln!(s, "{},{},{metric},{}", r.model, r.fold, fmt_value(v));
        }
    }
    s
}

fn single_fold_table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "{} (fold {}, {} segments)", r.model, r.fold, r.segments);
        for (metric, v) in r.values() {
            let _ = writeln!(s, "  {metric:<14} {}", fmt_value(v));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert!(matches!(Spec::parse("uniform").unwrap(), Spec::Uniform));
        assert!(matches!(Spec::parse("shotgun").unwrap(), Spec::Shotgun));
        assert!(matches!(Spec::parse("mean-point=a.ckpt").unwrap(), Spec::MeanPoint(p) if p == "a.ckpt"));
        match Spec::parse("stcnn-T=runs/m-{fold}.ckpt").unwrap() {
            Spec::Checkpoint(n, p) => assert_eq!((n.as_str(), p.as_str()), ("stcnn-T", "runs/m-{fold}.ckpt")),
            _ => panic!("expected checkpoint spec"),
        }
        assert!(Spec::parse("lstm").is_err());
        assert!(Spec::parse("=x").is_err());
    }

    #[test]
    fn undefined_values_are_spelled_out() {
        let r = MetricsReport {
            model: "shotgun".into(),
            ..MetricsReport::default()
        };
        let csv = metrics_csv(&[r]);
        assert!(csv.contains("shotgun,0,nll_per_step,undefined"));
    }
}

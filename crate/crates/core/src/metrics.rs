//! Cross-entropy, L2 and top-k% oracle errors, and fold comparison tables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::grid::Point;
use crate::provider::GridModel;
use crate::{Error, Result};

/// Continuous `(row, col)` location.
pub type Coord = [f64; 2];

pub fn to_coords(points: &[Point]) -> Vec<Coord> {
    points.iter().map(|p| p.coord()).collect()
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Running per-window and per-trajectory negative log-likelihoods.
#[derive(Clone, Debug, Default)]
pub struct NllAccumulator {
    windows: usize,
    sum: f64,
    sum_sq: f64,
    per_traj: Vec<f64>,
}

impl NllAccumulator {
    pub fn add(&mut self, nll: f64) {
        self.windows += 1;
        self.sum += nll;
        self.sum_sq += nll * nll;
    }

    pub fn add_trajectory(&mut self, nlls: &[f64]) {
        nlls.iter().for_each(|&v| self.add(v));
        self.per_traj.push(nlls.iter().sum());
    }

    pub fn summary(&self) -> NllSummary {
        let n = self.windows as f64;
        let mean = self.sum / n;
        let se = if self.windows > 1 {
            ((self.sum_sq - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        let (per_traj, per_traj_se) = mean_se(&self.per_traj);
        NllSummary {
            windows: self.windows,
            trajectories: self.per_traj.len(),
            per_step: mean,
            per_step_se: se,
            per_traj,
            per_traj_se,
        }
    }
}

/// Cross-entropy estimate in nats under both normalisations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NllSummary {
    pub windows: usize,
    pub trajectories: usize,
    pub per_step: f64,
    pub per_step_se: f64,
    /// Mean over trajectories of the summed window NLLs.
    pub per_traj: f64,
    pub per_traj_se: f64,
}

/// Monte-Carlo cross-entropy `-E_P log Q` over every window of every test
/// trajectory long enough to hold one. Errors if the model emits mass that
/// is not normalised.
pub fn cross_entropy(model: &dyn GridModel, data: &Dataset) -> Result<NllSummary> {
    let s = model.window_len();
    let per: Vec<Option<Vec<f64>>> = data
        .trajectories
        .par_iter()
        .map(|t| {
            if t.len() < s + 1 {
                return Ok(None);
            }
            let cond = model.condition(data.reference(t)?)?;
            let dists = model.predict_sequence(&t.points, &cond)?;
            dists
                .iter()
                .zip(&t.points[s..])
                .map(|(d, p)| {
                    d.check_normalized()?;
                    d.nll(*p)
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect::<Result<_>>()?;
    let mut acc = NllAccumulator::default();
    for v in per.iter().flatten() {
        acc.add_trajectory(v);
    }
    if acc.windows == 0 {
        return Err(Error::EmptyDataset(format!(
            "no trajectory has the {} points one window needs",
            s + 1
        )));
    }
    Ok(acc.summary())
}

/// `{T/4, T/2, 3T/4, T}` rounded to steps, without duplicates.
pub fn default_marks(horizon: usize) -> Vec<usize> {
    let mut m: Vec<usize> = (1..=4)
        .map(|k| ((k * horizon + 2) / 4).max(1))
        .collect();
    m.dedup();
    m
}

/// Full-horizon mean and per-mark errors in pixels. Marks are 1-based steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct L2Errors {
    pub full: f64,
    pub at_marks: Vec<(usize, f64)>,
}

fn check_marks(marks: &[usize], horizon: usize) -> Result<()> {
    match marks.iter().find(|&&m| m == 0 || m > horizon) {
        Some(m) => Err(Error::Metrics(format!("time mark {m} outside 1..={horizon}"))),
        None => Ok(()),
    }
}

fn distances(sample: &[Coord], truth: &[Point]) -> Result<Vec<f64>> {
    if sample.len() != truth.len() {
        return Err(Error::Metrics(format!(
            "sample has {} steps, truth has {}",
            sample.len(),
            truth.len()
        )));
    }
    Ok(sample
        .iter()
        .zip(truth)
        .map(|(a, b)| {
            let [r, c] = b.coord();
            ((a[0] - r).powi(2) + (a[1] - c).powi(2)).sqrt()
        })
        .collect())
}

fn mean_over(dists: &[Vec<f64>], marks: &[usize]) -> L2Errors {
    let k = dists.len() as f64;
    let t = dists[0].len() as f64;
    L2Errors {
        full: dists.iter().map(|d| d.iter().sum::<f64>() / t).sum::<f64>() / k,
        at_marks: marks
            .iter()
            .map(|&m| (m, dists.iter().map(|d| d[m - 1]).sum::<f64>() / k))
            .collect(),
    }
}

/// Mean Euclidean error of the samples against the ground truth.
pub fn avg_l2(samples: &[Vec<Coord>], truth: &[Point], marks: &[usize]) -> Result<L2Errors> {
    if samples.is_empty() {
        return Err(Error::Metrics("no samples".into()));
    }
    check_marks(marks, truth.len())?;
    let d = samples
        .iter()
        .map(|s| distances(s, truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_over(&d, marks))
}

/// Errors of the `ceil(fraction · K)` samples closest to the truth, ranked
/// by full-horizon L2.
pub fn oracle_topk(samples: &[Vec<Coord>], truth: &[Point], fraction: f64, marks: &[usize]) -> Result<L2Errors> {
    let k = samples.len();
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Metrics(format!("oracle fraction {fraction} outside (0, 1]")));
    }
    let kept = (fraction * k as f64 - 1e-9).ceil() as usize;
    if (fraction * k as f64) < 1.0 - 1e-9 || kept == 0 {
        return Err(Error::Metrics(format!(
            "{k} samples keep none at fraction {fraction}"
        )));
    }
    check_marks(marks, truth.len())?;
    let d = samples
        .iter()
        .map(|s| distances(s, truth))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<(f64, usize)> = d.iter().map(|v| v.iter().sum::<f64>()).zip(0..).collect();
    order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let best: Vec<Vec<f64>> = order[..kept].iter().map(|&(_, i)| d[i].clone()).collect();
    Ok(mean_over(&best, marks))
}

/// Average of per-segment errors.
pub fn mean_errors(per_segment: &[L2Errors]) -> Option<L2Errors> {
    let first = per_segment.first()?;
    let n = per_segment.len() as f64;
    Some(L2Errors {
        full: per_segment.iter().map(|e| e.full).sum::<f64>() / n,
        at_marks: (0..first.at_marks.len())
            .map(|j| {
                (
                    first.at_marks[j].0,
                    per_segment.iter().map(|e| e.at_marks[j].1).sum::<f64>() / n,
                )
            })
            .collect(),
    })
}

/// Scores of one model on one test fold.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub fold: usize,
    /// `None` when the method is not a distribution.
    pub nll: Option<NllSummary>,
    pub avg_l2: Option<L2Errors>,
    pub oracle: Option<L2Errors>,
    pub segments: usize,
    pub samples_per_segment: usize,
}

impl MetricsReport {
    /// Flat `(metric, value)` pairs in table order; `None` marks an
    /// undefined value.
    pub fn values(&self) -> Vec<(String, Option<f64>)> {
        let mut v = vec![
            ("nll_per_step".to_string(), self.nll.map(|n| n.per_step)),
            ("nll_per_traj".to_string(), self.nll.map(|n| n.per_traj)),
            ("l2_full".to_string(), self.avg_l2.as_ref().map(|e| e.full)),
        ];
        if let Some(e) = &self.avg_l2 {
            v.extend(e.at_marks.iter().map(|(m, x)| (format!("l2@{m}"), Some(*x))));
        }
        if let Some(e) = &self.oracle {
            v.extend(e.at_marks.iter().map(|(m, x)| (format!("oracle@{m}"), Some(*x))));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRow {
    pub model: String,
    /// `per_fold[f][c]` is column `c` on fold `folds[f]`.
    pub per_fold: Vec<Vec<Option<f64>>>,
    /// Mean and fold standard error per column; `None` if any fold lacks it.
    pub aggregate: Vec<Option<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub folds: Vec<usize>,
    pub columns: Vec<String>,
    pub rows: Vec<ModelRow>,
}

/// Groups per-fold reports by model. Every model must cover the same folds,
/// and there must be at least two.
pub fn compare_report(reports: &[MetricsReport]) -> Result<Comparison> {
    let mut models: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    if models.is_empty() {
        return Err(Error::Metrics("no reports to compare".into()));
    }
    let folds_of = |m: &str| {
        let mut f: Vec<usize> = reports.iter().filter(|r| r.model == m).map(|r| r.fold).collect();
        f.sort();
        f
    };
    let folds = folds_of(models[0]);
    if folds.len() < 2 {
        return Err(Error::Metrics(format!("need at least 2 folds, got {}", folds.len())));
    }
    if folds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Metrics(format!("model {:?} reports a fold twice", models[0])));
    }
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        for (c, _) in r.values() {
            if !columns.contains(&c) {
                columns.push(c);
            }
        }
    }
    let mut rows = Vec::new();
    for m in &models {
        if folds_of(m) != folds {
            return Err(Error::Metrics(format!(
                "model {m:?} covers folds {:?}, {:?} covers {folds:?}",
                folds_of(m),
                models[0]
            )));
        }
        let per_fold: Vec<Vec<Option<f64>>> = folds
            .iter()
            .map(|&f| {
                let r = reports.iter().find(|r| r.model == *m && r.fold == f).expect("fold present");
                let vals = r.values();
                columns
                    .iter()
                    .map(|c| vals.iter().find(|(k, _)| k == c).and_then(|(_, v)| *v))
                    .collect()
            })
            .collect();
        let aggregate = (0..columns.len())
            .map(|c| {
                let v: Option<Vec<f64>> = per_fold.iter().map(|row| row[c]).collect();
                v.map(|v| mean_se(&v))
            })
            .collect();
        rows.push(ModelRow {
            model: m.to_string(),
            per_fold,
            aggregate,
        });
    }
    Ok(Comparison { folds, columns, rows })
}

impl Comparison {
    /// `model,fold,metric,value,se`; aggregate rows use fold `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,fold,metric,value,se\n");
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
        for r in &self.rows {
            for (fi, f) in self.folds.iter().enumerate() {
                for (c, name) in self.columns.iter().enumerate() {
                    let _ = writeln!(out, "{},{f},{name},{},", r.model, fmt(r.per_fold[fi][c]));
                }
            }
            for (c, name) in self.columns.iter().enumerate() {
                let (m, s) = r.aggregate[c].map_or((None, None), |(m, s)| (Some(m), Some(s)));
                let _ = writeln!(out, "{},all,{name},{},{}", r.model, fmt(m), fmt(s));
            }
        }
        out
    }

    /// Aligned table: one row per model and fold plus a `mean ± se` row.
    pub fn to_table(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut head = vec!["model".to_string(), "fold".to_string()];
        head.extend(self.columns.iter().cloned());
        grid.push(head);
        let cell = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
        for r in &self.rows {
            for (fi, f) in self.folds.iter().enumerate() {
                let mut row = vec![r.model.clone(), f.to_string()];
                row.extend(r.per_fold[fi].iter().map(|v| cell(*v)));
                grid.push(row);
            }
            let mut row = vec![r.model.clone(), "mean".to_string()];
            row.extend(r.aggregate.iter().map(|a| {
                a.map_or("undefined".to_string(), |(m, s)| format!("{m:.3} ± {s:.3}"))
            }));
            grid.push(row);
        }
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:>w$}", w = *w))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn row(&self, model: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

//! The evaluation protocol: cross-entropy over test windows, and sampled
//! forecasts from each test trajectory's first `s` points scored by L2 and
//! the top-k% oracle.

use crate::baselines::{mean_path, shotgun_forecast, ShotgunConfig};
use crate::data::{Dataset, Trajectory};
use crate::forecast::{sample_batch, ForecastSample};
use crate::grid::Point;
use crate::metrics::{avg_l2, cross_entropy, mean_errors, oracle_topk, to_coords, Coord, L2Errors, MetricsReport};
use crate::provider::GridModel;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    /// Observed segment length.
    pub s: usize,
    /// Forecast steps scored by the L2 metrics.
    pub horizon: usize,
    /// Samples drawn per segment.
    pub samples: usize,
    pub oracle_fraction: f64,
    /// 1-based steps at which errors are reported.
    pub marks: Vec<usize>,
    pub seed: u64,
}

impl Protocol {
    /// Seed of the sample batch drawn for segment `index`.
    pub fn segment_seed(&self, index: usize) -> u64 {
        self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// `(trajectory index, segment, truth)` for every trajectory long enough.
    pub fn segments<'a>(&self, data: &'a Dataset) -> Vec<(usize, &'a [Point], &'a [Point])> {
        data.trajectories
            .iter()
            .enumerate()
            .filter(|(_, t)| t.len() >= self.s + self.horizon)
            .map(|(i, t): (usize, &Trajectory)| (i, &t.points[..self.s], &t.points[self.s..self.s + self.horizon]))
            .collect()
    }
}

/// How a method produces forecasts.
pub enum Method<'a> {
    /// A distribution provider, sampled autoregressively.
    Model(&'a dyn GridModel),
    /// Distribution `model` for cross-entropy; its L2 path is the per-step
    /// mean of `sampler`'s forecasts.
    MeanPoint { model: &'a dyn GridModel, sampler: &'a dyn GridModel },
    /// Ten extrapolations; no likelihood.
    Shotgun(&'a ShotgunConfig),
}

/// Sampled forecasts for every protocol segment of `data`.
pub fn draw_samples(model: &dyn GridModel, data: &Dataset, protocol: &Protocol) -> Result<Vec<Vec<ForecastSample>>> {
    protocol
        .segments(data)
        .into_iter()
        .enumerate()
        .map(|(k, (i, seg, _))| {
            let cond = model.condition(data.reference(&data.trajectories[i])?)?;
            sample_batch(model, seg, protocol.horizon, protocol.samples, &cond, protocol.segment_seed(k))
        })
        .collect()
}

pub fn evaluate(method: &Method, name: &str, fold: usize, test: &Dataset, protocol: &Protocol) -> Result<MetricsReport> {
    let segments = protocol.segments(test);
    let paths: Vec<Vec<Vec<Coord>>> = match method {
        Method::Model(m) => draw_samples(*m, test, protocol)?
            .into_iter()
            .map(|b| b.iter().map(|s| to_coords(&s.points)).collect())
            .collect(),
        Method::MeanPoint { sampler, .. } => draw_samples(*sampler, test, protocol)?
            .iter()
            .map(|b| mean_path(b).map(|p| vec![p]))
            .collect::<Result<_>>()?,
        Method::Shotgun(cfg) => segments
            .iter()
            .map(|(_, seg, _)| {
                shotgun_forecast(seg, protocol.horizon, &test.grid, cfg)
                    .map(|f| f.hypotheses.iter().map(|h| to_coords(h)).collect())
            })
            .collect::<Result<_>>()?,
    };
    let nll = match method {
        Method::Model(m) | Method::MeanPoint { model: m, .. } => Some(cross_entropy(*m, test)?),
        Method::Shotgun(_) => None,
    };
    let (avg, oracle) = if segments.is_empty() {
        (None, None)
    } else {
        let l2: Vec<L2Errors> = paths
            .iter()
            .zip(&segments)
            .map(|(p, (_, _, truth))| avg_l2(p, truth, &protocol.marks))
            .collect::<Result<_>>()?;
        let oracle = if matches!(method, Method::MeanPoint { .. }) {
            None
        } else {
            let o: Vec<L2Errors> = paths
                .iter()
                .zip(&segments)
                .map(|(p, (_, _, truth))| oracle_topk(p, truth, protocol.oracle_fraction, &protocol.marks))
                .collect::<Result<_>>()?;
            mean_errors(&o)
        };
        (mean_errors(&l2), oracle)
    };
    if nll.is_none() && avg.is_none() {
        return Err(Error::EmptyDataset(format!(
            "no test trajectory has {} points",
            protocol.s + protocol.horizon
        )));
    }
    Ok(MetricsReport {
        model: name.to_string(),
        fold,
        nll,
        avg_l2: avg,
        oracle,
        segments: segments.len(),
        samples_per_segment: paths.first().map_or(0, |p| p.len()),
    })
}

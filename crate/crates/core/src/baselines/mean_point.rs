use crate::baselines::gaussian::gaussian_grid;
use crate::data::ReferenceImage;
use crate::distribution::GridDistribution;
use crate::forecast::ForecastSample;
use crate::grid::{GridSpec, Point};
use crate::metrics::Coord;
use crate::provider::{Conditioning, GridModel};
use crate::{Error, Result};

/// Per-step average of sampled forecasts: the single path that minimises
/// expected squared L2 error.
pub fn mean_path(samples: &[ForecastSample]) -> Result<Vec<Coord>> {
    let first = samples.first().ok_or_else(|| Error::Metrics("no samples to average".into()))?;
    let k = samples.len() as f64;
    let mut out = vec![[0.0; 2]; first.points.len()];
    for s in samples {
        if s.points.len() != out.len() {
            return Err(Error::Metrics("samples differ in horizon".into()));
        }
        for (o, p) in out.iter_mut().zip(&s.points) {
            o[0] += p.row as f64 / k;
            o[1] += p.col as f64 / k;
        }
    }
    Ok(out)
}

/// Distribution view of the mean-point predictor: a discretised Gaussian at
/// the expected next location under `inner`.
pub struct MeanPointModel<'a> {
    pub inner: &'a dyn GridModel,
    pub sigma: f64,
    pub lambda: f64,
}

impl GridModel for MeanPointModel<'_> {
    fn name(&self) -> &str {
        "mean-point"
    }

    fn grid(&self) -> GridSpec {
        self.inner.grid()
    }

    fn window_len(&self) -> usize {
        self.inner.window_len()
    }

    fn condition(&self, reference: Option<&ReferenceImage>) -> Result<Conditioning> {
        self.inner.condition(reference)
    }

    fn predict(&self, frames: &[Point], cond: &Conditioning) -> Result<GridDistribution> {
        let mu = self.inner.predict(frames, cond)?.expectation();
        gaussian_grid(self.grid(), mu, self.sigma, self.lambda)
    }

    fn predict_sequence(&self, points: &[Point], cond: &Conditioning) -> Result<Vec<GridDistribution>> {
        self.inner
            .predict_sequence(points, cond)?
            .iter()
            .map(|d| gaussian_grid(self.grid(), d.expectation(), self.sigma, self.lambda))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::FixedModel;

    #[test]
    fn averages_per_step() {
        let mk = |r| ForecastSample {
            points: vec![Point::new(r, 0), Point::new(r, 2)],
            log_prob: 0.0,
            stream: 0,
        };
        assert_eq!(mean_path(&[mk(1), mk(3)]).unwrap(), vec![[2.0, 0.0], [2.0, 2.0]]);
    }

    #[test]
    fn gaussian_sits_on_the_expectation() {
        let g = GridSpec::new(1, 5).unwrap();
        let inner = FixedModel::new(
            GridDistribution::from_mass(g, vec![0.5, 0.0, 0.0, 0.0, 0.5]).unwrap(),
            1,
        );
        let m = MeanPointModel {
            inner: &inner,
            sigma: 0.5,
            lambda: 0.0,
        };
        let d = m.predict(&[Point::new(0, 0)], &Conditioning::NONE).unwrap();
        assert_eq!(d.argmax(), Point::new(0, 2));
    }
}

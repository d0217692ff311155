//! Deterministic linear extrapolation in ten variants.

use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpeedMode {
    Stop,
    /// Exponentially weighted average of step lengths with this weight on
    /// the history: `0` keeps only the latest step, `1` only the first.
    Ewa(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotgunConfig {
    /// Heading offsets in degrees, extrapolated at `angle_speed`.
    pub angle_offsets: Vec<f64>,
    pub angle_speed: SpeedMode,
    /// Speed variants, extrapolated along the unmodified heading.
    pub speed_modes: Vec<SpeedMode>,
}

impl Default for ShotgunConfig {
    fn default() -> Self {
        Self {
            angle_offsets: vec![0.0, 8.0, -8.0, 15.0, -15.0],
            angle_speed: SpeedMode::Ewa(1.0),
            speed_modes: vec![
                SpeedMode::Stop,
                SpeedMode::Ewa(0.0),
                SpeedMode::Ewa(0.3),
                SpeedMode::Ewa(0.7),
                SpeedMode::Ewa(1.0),
            ],
        }
    }
}

impl ShotgunConfig {
    pub fn hypotheses(&self) -> Vec<(f64, SpeedMode)> {
        let mut h: Vec<(f64, SpeedMode)> = self.angle_offsets.iter().map(|&a| (a, self.angle_speed)).collect();
        h.extend(self.speed_modes.iter().map(|&m| (0.0, m)));
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotgunForecast {
    pub hypotheses: Vec<Vec<Point>>,
    /// The segment never moved, so every hypothesis is the stop variant.
    pub stationary: bool,
}

/// `e_1 = m_1`, `e_k = alpha · e_{k-1} + (1 - alpha) · m_k` over the step
/// lengths `m` in time order.
pub fn ewa_speed(magnitudes: &[f64], alpha: f64) -> f64 {
    let mut it = magnitudes.iter();
    let Some(&first) = it.next() else {
        return 0.0;
    };
    it.fold(first, |e, &m| alpha * e + (1.0 - alpha) * m)
}

pub fn shotgun_forecast(
    segment: &[Point],
    horizon: usize,
    grid: &GridSpec,
    config: &ShotgunConfig,
) -> Result<ShotgunForecast> {
    if segment.len() < 2 {
        return Err(Error::TooShort {
            what: "shotgun segment",
            need: 2,
            got: segment.len(),
        });
    }
    let last = *segment.last().expect("non-empty");
    let steps: Vec<(f64, f64)> = segment
        .windows(2)
        .map(|w| ((w[1].row - w[0].row) as f64, (w[1].col - w[0].col) as f64))
        .collect();
    let magnitudes: Vec<f64> = steps.iter().map(|(r, c)| r.hypot(*c)).collect();
    let count = config.angle_offsets.len() + config.speed_modes.len();
    let Some(&(hr, hc)) = steps.iter().rev().find(|(r, c)| *r != 0.0 || *c != 0.0) else {
        return Ok(ShotgunForecast {
            hypotheses: vec![vec![last; horizon]; count],
            stationary: true,
        });
    };
    let norm = hr.hypot(hc);
    let (ur, uc) = (hr / norm, hc / norm);
    let hypotheses = config
        .hypotheses()
        .into_iter()
        .map(|(deg, mode)| {
            let speed = match mode {
                SpeedMode::Stop => 0.0,
                SpeedMode::Ewa(a) => ewa_speed(&magnitudes, a),
            };
            let (s, c) = deg.to_radians().sin_cos();
            let (vr, vc) = ((ur * c - uc * s) * speed, (ur * s + uc * c) * speed);
            (1..=horizon)
                .map(|j| grid.snap(last.row as f64 + vr * j as f64, last.col as f64 + vc * j as f64))
                .collect()
        })
        .collect();
    Ok(ShotgunForecast {
        hypotheses,
        stationary: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg() -> Vec<Point> {
        vec![Point::new(10, 10), Point::new(12, 10), Point::new(14, 10)]
    }

    #[test]
    fn ten_hypotheses_with_exact_straight_one() {
        let g = GridSpec::default();
        let f = shotgun_forecast(&seg(), 2, &g, &ShotgunConfig::default()).unwrap();
        assert_eq!(f.hypotheses.len(), 10);
        assert_eq!(f.hypotheses[0], vec![Point::new(16, 10), Point::new(18, 10)]);
        assert_eq!(f.hypotheses[5], vec![Point::new(14, 10); 2]);
    }

    #[test]
    fn stationary_segment_stops_everywhere() {
        let g = GridSpec::default();
        let f = shotgun_forecast(&[Point::new(3, 3); 4], 3, &g, &ShotgunConfig::default()).unwrap();
        assert!(f.stationary);
        assert_eq!(f.hypotheses, vec![vec![Point::new(3, 3); 3]; 10]);
    }

    #[test]
    fn ewa_limits() {
        let m = [1.0, 2.0, 4.0];
        assert_eq!(ewa_speed(&m, 0.0), 4.0);
        assert_eq!(ewa_speed(&m, 1.0), 1.0);
        assert!((ewa_speed(&m, 0.5) - 2.75).abs() < 1e-12);
    }

    #[test]
    fn clamps_at_boundary() {
        let g = GridSpec::new(16, 16).unwrap();
        let f = shotgun_forecast(&seg(), 2, &g, &ShotgunConfig::default()).unwrap();
        assert!(f.hypotheses.iter().flatten().all(|p| g.contains(*p)));
        assert_eq!(f.hypotheses[0], vec![Point::new(15, 10); 2]);
    }
}

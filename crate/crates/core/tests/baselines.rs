use proptest::prelude::*;
use stcnn_core::baselines::{ewa_speed, gaussian_grid, mean_path, shotgun_forecast, ShotgunConfig};
use stcnn_core::data::linear_path;
use stcnn_core::forecast::ForecastSample;
use stcnn_core::{GridSpec, Point};

fn velocity() -> impl Strategy<Value = (i32, i32)> {
    (-2..=2i32, -2..=2i32).prop_filter("moving", |v| *v != (0, 0))
}

proptest! {
    #[test]
    fn straight_hypothesis_is_exact_on_linear_motion(r in 30..70i32, c in 30..70i32, v in velocity(), horizon in 1usize..10) {
        let grid = GridSpec::new(100, 100).unwrap();
        let full = linear_path(Point::new(r, c), v, 4 + horizon);
        let f = shotgun_forecast(&full[..4], horizon, &grid, &ShotgunConfig::default()).unwrap();
        prop_assert_eq!(f.hypotheses.len(), 10);
        prop_assert_eq!(&f.hypotheses[0], &full[4..].to_vec());
        prop_assert_eq!(&f.hypotheses[9], &full[4..].to_vec());
        prop_assert!(f.hypotheses[5].iter().all(|p| *p == full[3]));
    }

    #[test]
    fn shotgun_is_translation_equivariant(
        pts in prop::collection::vec((-2..=2i32, -2..=2i32), 3),
        shift in (-20..20i32, -20..20i32),
        horizon in 1usize..8,
    ) {
        let grid = GridSpec::new(200, 200).unwrap();
        let mut seg = vec![Point::new(100, 100)];
        for (dr, dc) in pts {
            let last = *seg.last().unwrap();
            seg.push(last.offset(dr, dc));
        }
        let moved: Vec<Point> = seg.iter().map(|p| p.offset(shift.0, shift.1)).collect();
        let a = shotgun_forecast(&seg, horizon, &grid, &ShotgunConfig::default()).unwrap();
        let b = shotgun_forecast(&moved, horizon, &grid, &ShotgunConfig::default()).unwrap();
        prop_assert_eq!(a.stationary, b.stationary);
        for (ha, hb) in a.hypotheses.iter().zip(&b.hypotheses) {
            let shifted: Vec<Point> = ha.iter().map(|p| p.offset(shift.0, shift.1)).collect();
            prop_assert_eq!(&shifted, hb);
        }
    }

    #[test]
    fn hypotheses_stay_on_the_grid(seg in prop::collection::vec((0..6i32, 0..6i32), 2..5), horizon in 1usize..12) {
        let grid = GridSpec::new(6, 6).unwrap();
        let seg: Vec<Point> = seg.into_iter().map(|(r, c)| Point::new(r, c)).collect();
        let f = shotgun_forecast(&seg, horizon, &grid, &ShotgunConfig::default()).unwrap();
        for h in &f.hypotheses {
            prop_assert_eq!(h.len(), horizon);
            prop_assert!(h.iter().all(|p| grid.contains(*p)));
        }
    }

    #[test]
    fn ewa_stays_within_observed_speeds(m in prop::collection::vec(0.0..5.0f64, 1..10), alpha in 0.0..=1.0f64) {
        let e = ewa_speed(&m, alpha);
        let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.iter().cloned().fold(0.0, f64::max);
        prop_assert!(e >= lo - 1e-12 && e <= hi + 1e-12);
    }

    #[test]
    fn gaussian_grid_is_normalised_with_mode_at_mean(r in 0..12i32, c in 0..12i32, sigma in 0.3..4.0f64, lambda in 0.0..0.5f64) {
        let grid = GridSpec::new(12, 12).unwrap();
        let d = gaussian_grid(grid, [r as f64, c as f64], sigma, lambda).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        prop_assert_eq!(d.argmax(), Point::new(r, c));
        let floor = lambda / 144.0;
        prop_assert!(d.mass().iter().all(|&p| p >= floor - 1e-15));
    }

    #[test]
    fn mean_path_is_no_worse_than_average_sample(paths in prop::collection::vec(prop::collection::vec((0..20i32, 0..20i32), 4), 1..12), truth in prop::collection::vec((0..20i32, 0..20i32), 4)) {
        let samples: Vec<ForecastSample> = paths
            .iter()
            .enumerate()
            .map(|(i, p)| ForecastSample {
                points: p.iter().map(|&(r, c)| Point::new(r, c)).collect(),
                log_prob: 0.0,
                stream: i as u64,
            })
            .collect();
        let mean = mean_path(&samples).unwrap();
        for (t, &(tr, tc)) in truth.iter().enumerate() {
            let d = |a: f64, b: f64| ((a - tr as f64).powi(2) + (b - tc as f64).powi(2)).sqrt();
            let avg = samples.iter().map(|s| d(s.points[t].row as f64, s.points[t].col as f64)).sum::<f64>() / samples.len() as f64;
            prop_assert!(d(mean[t][0], mean[t][1]) <= avg + 1e-9);
        }
    }
}

use proptest::prelude::*;
use stcnn_core::data::{Dataset, Trajectory};
use stcnn_core::metrics::{avg_l2, compare_report, cross_entropy, mean_se, oracle_topk, MetricsReport, NllSummary};
use stcnn_core::provider::FixedModel;
use stcnn_core::{GridDistribution, GridSpec, Point};

fn coords(max: usize, t: usize) -> impl Strategy<Value = Vec<Vec<[f64; 2]>>> {
    prop::collection::vec(prop::collection::vec((0.0..20.0f64, 0.0..20.0f64).prop_map(|(a, b)| [a, b]), t), 1..max)
}

/// Two-point trajectories whose targets occur `counts[i]` times in cell `i`.
fn empirical(grid: GridSpec, counts: &[usize]) -> Dataset {
    let mut ts = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        for k in 0..c {
            ts.push(Trajectory::new(format!("c{i}-{k}"), vec![Point::new(0, 0), grid.point(i)]));
        }
    }
    Dataset::new(grid, ts)
}

fn normalise(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

proptest! {
    #[test]
    fn smaller_oracle_fraction_never_increases_error(samples in coords(30, 5), truth in prop::collection::vec((0..20i32, 0..20i32), 5)) {
        let truth: Vec<Point> = truth.into_iter().map(|(r, c)| Point::new(r, c)).collect();
        let marks = [1, 3, 5];
        let all = avg_l2(&samples, &truth, &marks).unwrap();
        let whole = oracle_topk(&samples, &truth, 1.0, &marks).unwrap();
        prop_assert!((all.full - whole.full).abs() < 1e-9);
        let mut prev = whole.full;
        for f in [0.5, 0.25, 1.0 / samples.len() as f64] {
            let o = oracle_topk(&samples, &truth, f.max(1.0 / samples.len() as f64), &marks).unwrap();
            prop_assert!(o.full <= prev + 1e-9);
            prev = o.full;
        }
    }

    #[test]
    fn single_sample_error_is_mean_euclidean_distance(sample in coords(2, 4), truth in prop::collection::vec((0..20i32, 0..20i32), 4)) {
        let truth: Vec<Point> = truth.into_iter().map(|(r, c)| Point::new(r, c)).collect();
        let e = avg_l2(&sample, &truth, &[2, 4]).unwrap();
        let d: Vec<f64> = sample[0].iter().zip(&truth).map(|(a, p)| ((a[0] - p.row as f64).powi(2) + (a[1] - p.col as f64).powi(2)).sqrt()).collect();
        prop_assert!((e.full - d.iter().sum::<f64>() / 4.0).abs() < 1e-9);
        prop_assert!((e.at_marks[0].1 - d[1]).abs() < 1e-12);
        prop_assert!((e.at_marks[1].1 - d[3]).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_closed_form_and_gibbs(counts in prop::collection::vec(0usize..12, 6), q in prop::collection::vec(0.01..1.0f64, 6)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let grid = GridSpec::new(2, 3).unwrap();
        let data = empirical(grid, &counts);
        let n: usize = counts.iter().sum();
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let q = normalise(&q);
        let ce = cross_entropy(&FixedModel::new(GridDistribution::from_mass(grid, q.clone()).unwrap(), 1), &data).unwrap();
        let oracle: f64 = p.iter().zip(&q).map(|(pi, qi)| -pi * qi.ln()).sum();
        prop_assert!((ce.per_step - oracle).abs() < 1e-9);
        prop_assert!((ce.per_traj - oracle).abs() < 1e-9);
        let safe: Vec<f64> = p.iter().map(|x| x.max(1e-300)).collect();
        let self_ce = cross_entropy(&FixedModel::new(GridDistribution::from_mass(grid, normalise(&safe)).unwrap(), 1), &data).unwrap();
        prop_assert!(self_ce.per_step <= ce.per_step + 1e-9);
    }

    #[test]
    fn mean_and_standard_error(v in prop::collection::vec(-50.0..50.0f64, 2..40)) {
        let (m, se) = mean_se(&v);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((m - mean).abs() < 1e-9);
        prop_assert!((se - (var / n).sqrt()).abs() < 1e-9);
    }
}

fn nll(v: f64) -> NllSummary {
    NllSummary {
        windows: 10,
        trajectories: 2,
        per_step: v,
        per_step_se: 0.0,
        per_traj: 2.0 * v,
        per_traj_se: 0.0,
    }
}

#[test]
fn comparison_uses_fold_standard_error() {
    let folds = [1.0, 1.5, 2.5];
    let mut reports: Vec<MetricsReport> = folds
        .iter()
        .enumerate()
        .map(|(k, &v)| MetricsReport {
            model: "a".into(),
            fold: k,
            nll: Some(nll(v)),
            ..MetricsReport::default()
        })
        .collect();
    reports.extend((0..3).map(|k| MetricsReport {
        model: "shotgun".into(),
        fold: k,
        ..MetricsReport::default()
    }));
    let cmp = compare_report(&reports).unwrap();
    let col = cmp.column("nll_per_step").unwrap();
    let row = cmp.row("a").unwrap();
    let (mean, sd) = (5.0 / 3.0, ((4.0f64 / 9.0 + 1.0 / 36.0 + 25.0 / 36.0) / 2.0).sqrt());
    let (m, se) = row.aggregate[col].unwrap();
    assert!((m - mean).abs() < 1e-12);
    assert!((se - sd / 3f64.sqrt()).abs() < 1e-12);
    assert!(cmp.row("shotgun").unwrap().aggregate[col].is_none());
    assert!(cmp.to_csv().contains("shotgun,all,nll_per_step,undefined"));
}

#[test]
fn uniform_cross_entropy_is_log_cells_on_any_data() {
    let grid = GridSpec::new(5, 7).unwrap();
    let data = empirical(grid, &[3, 0, 1, 0, 0, 9, 2]);
    let ce = cross_entropy(&FixedModel::new(GridDistribution::uniform(grid), 1), &data).unwrap();
    assert!((ce.per_step - 35f64.ln()).abs() < 1e-12);
    assert_eq!(ce.windows, 15);
    assert_eq!(ce.trajectories, 15);
}

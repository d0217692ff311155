use proptest::prelude::*;
use rand::Rng;
use stcnn_core::checkpoint::Checkpoint;
use stcnn_core::forecast::{sample_batch, score_continuation, stream_rng};
use stcnn_core::provider::FixedModel;
use stcnn_core::{ArchConfig, Conditioning, GridDistribution, GridModel, GridSpec, Point, Stcnn};

fn arch(h: usize) -> ArchConfig {
    ArchConfig {
        grid: GridSpec::new(h, h).unwrap(),
        enc_channels: vec![4],
        latent_channels: 6,
        latent_convs: 1,
        dec_channels: vec![4],
        ..ArchConfig::default()
    }
}

fn model(h: usize, seed: u64) -> Stcnn {
    let mut m = Stcnn::new(arch(h), seed).unwrap();
    m.perturb(0.5, seed ^ 0xABCD);
    m
}

fn path(h: i32, len: usize, seed: u64) -> Vec<Point> {
    let mut rng = stream_rng(seed, 0);
    (0..len).map(|_| Point::new(rng.gen_range(0..h), rng.gen_range(0..h))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sequence_matches_step_by_step(seed in any::<u64>(), len in 5usize..12) {
        let m = model(8, seed);
        let pts = path(8, len, seed);
        let cond = Conditioning::NONE;
        let seq = m.predict_sequence(&pts, &cond).unwrap();
        prop_assert_eq!(seq.len(), len - 4);
        for (t, d) in seq.iter().enumerate() {
            let step = m.predict(&pts[t..t + 4], &cond).unwrap();
            prop_assert_eq!(d.mass(), step.mass());
        }
    }

    #[test]
    fn every_prediction_is_a_distribution(seed in any::<u64>()) {
        let m = model(8, seed);
        let d = m.predict(&path(8, 4, seed), &Conditioning::NONE).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        prop_assert!(d.mass().iter().all(|&p| p > 0.0));
    }
}

#[test]
fn two_step_continuations_sum_to_one() {
    let m = model(4, 5);
    let grid = m.grid();
    let seg = path(4, 4, 6);
    let cond = Conditioning::NONE;
    let mut total = 0.0;
    for a in 0..grid.cells() {
        for b in 0..grid.cells() {
            let lp = score_continuation(&m, &seg, &[grid.point(a), grid.point(b)], &cond).unwrap();
            total += lp.exp();
        }
    }
    assert!((total - 1.0).abs() < 1e-9, "total {total}");
}

#[test]
fn chain_rule_is_the_product_of_window_masses() {
    let m = model(8, 9);
    let cond = Conditioning::NONE;
    let pts = path(8, 9, 10);
    let mut oracle = 0.0;
    for t in 4..pts.len() {
        oracle += m.predict(&pts[t - 4..t], &cond).unwrap().prob(pts[t]).ln();
    }
    let lp = score_continuation(&m, &pts[..4], &pts[4..], &cond).unwrap();
    assert!((lp - oracle).abs() < 1e-9);
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let m = model(8, 21);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    m.to_checkpoint().save(&p).unwrap();
    let back = Stcnn::from_checkpoint(&Checkpoint::load(&p).unwrap()).unwrap();
    assert_eq!(back.arch(), m.arch());
    assert!(back.params().bit_eq(m.params()));
    let seg = path(8, 4, 22);
    let cond = Conditioning::NONE;
    assert_eq!(m.predict(&seg, &cond).unwrap().mass(), back.predict(&seg, &cond).unwrap().mass());
}

#[test]
fn sampled_first_steps_follow_the_distribution() {
    let grid = GridSpec::new(2, 3).unwrap();
    let want = [0.05, 0.1, 0.15, 0.2, 0.25, 0.25];
    let m = FixedModel::new(GridDistribution::from_mass(grid, want.to_vec()).unwrap(), 1);
    let n = 40_000;
    let samples = sample_batch(&m, &[Point::new(0, 0)], 1, n, &Conditioning::NONE, 8).unwrap();
    let mut counts = [0usize; 6];
    for s in &samples {
        counts[grid.index(s.points[0]).unwrap()] += 1;
        assert!((s.log_prob - want[grid.index(s.points[0]).unwrap()].ln()).abs() < 1e-12);
    }
    for (c, p) in counts.iter().zip(want) {
        let f = *c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 5.0 * se, "freq {f} vs {p}");
    }
}

#[test]
fn sample_batches_are_seeded_and_streamed() {
    let m = model(8, 31);
    let seg = path(8, 4, 32);
    let cond = Conditioning::NONE;
    let a = sample_batch(&m, &seg, 5, 6, &cond, 99).unwrap();
    let b = sample_batch(&m, &seg, 5, 6, &cond, 99).unwrap();
    assert_eq!(a, b);
    let c = sample_batch(&m, &seg, 5, 3, &cond, 99).unwrap();
    assert_eq!(&a[..3], &c[..]);
    for s in &a {
        let lp = score_continuation(&m, &seg, &s.points, &cond).unwrap();
        assert!((lp - s.log_prob).abs() < 1e-9);
    }
}

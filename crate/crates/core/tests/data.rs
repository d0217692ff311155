use proptest::prelude::*;
use stcnn_core::data::{
    collect_windows, fork_branch, parse_trajectories, split_folds, synthesize, windows, write_trajectories, Dataset,
    SynthConfig, SynthKind, Trajectory,
};
use stcnn_core::{GridSpec, Point};

fn points(h: i32, w: i32, max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0..h, 0..w).prop_map(|(r, c)| Point::new(r, c)), 1..max)
}

proptest! {
    #[test]
    fn trajectory_text_round_trips(sets in prop::collection::vec(points(28, 28, 30), 0..8)) {
        let grid = GridSpec::default();
        let ts: Vec<Trajectory> = sets.into_iter().enumerate().map(|(i, p)| Trajectory::new(format!("t{i}"), p)).collect();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &ts).unwrap();
        prop_assert_eq!(parse_trajectories(buf.as_slice(), &grid).unwrap(), ts);
    }

    #[test]
    fn windows_are_consecutive_slices(pts in points(10, 10, 40), s in 1usize..6) {
        let t = Trajectory::new("a", pts.clone());
        let ws = windows(&t, 3, s);
        prop_assert_eq!(ws.len(), pts.len().saturating_sub(s));
        for (k, w) in ws.iter().enumerate() {
            prop_assert_eq!(w.offset, k);
            prop_assert_eq!(w.trajectory, 3);
            prop_assert_eq!(&w.frames[..], &pts[k..k + s]);
            prop_assert_eq!(w.target, pts[k + s]);
        }
    }

    #[test]
    fn short_trajectories_are_skipped(lens in prop::collection::vec(1usize..12, 1..10), s in 1usize..6) {
        let ts: Vec<Trajectory> = lens
            .iter()
            .map(|&n| Trajectory::new("x", (0..n as i32).map(|i| Point::new(0, i)).collect()))
            .collect();
        let set = collect_windows(&ts, s);
        prop_assert_eq!(set.skipped, lens.iter().filter(|&&n| n <= s).count());
        prop_assert_eq!(set.windows.len(), lens.iter().map(|&n| n.saturating_sub(s)).sum::<usize>());
    }

    #[test]
    fn fold_test_sets_partition_every_index(n in 2usize..200, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let f = split_folds(n, k, seed).unwrap();
        let mut all: Vec<usize> = (0..k).flat_map(|i| f.test(i)).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes = f.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for i in 0..k {
            prop_assert_eq!(f.train(i).len() + f.test(i).len(), n);
        }
    }

    #[test]
    fn synthetic_data_stays_on_grid(kind in prop::sample::select(SynthKind::ALL.to_vec()), seed in any::<u64>()) {
        let grid = GridSpec::new(16, 20).unwrap();
        let out = synthesize(&SynthConfig::new(kind, 20, grid, seed)).unwrap();
        prop_assert_eq!(out.trajectories.len(), 20);
        for t in &out.trajectories {
            t.validate(&grid).unwrap();
            prop_assert!(t.len() >= 5);
        }
    }
}

#[test]
fn fork_branches_are_balanced() {
    let out = synthesize(&SynthConfig::new(SynthKind::Fork, 10_000, GridSpec::default(), 77)).unwrap();
    let (mut up, mut down) = (0usize, 0usize);
    for t in &out.trajectories {
        assert_eq!(t.len(), 16, "fork branch truncated at the edge");
        match fork_branch(&t.points) {
            Some(-1) => up += 1,
            Some(1) => down += 1,
            _ => {}
        }
    }
    let share = up as f64 / (up + down) as f64;
    assert!((share - 0.5).abs() < 0.02, "up share {share}");
    assert!(up + down > 9_500);
}

#[test]
fn dataset_with_scenes_round_trips_on_disk() {
    let grid = GridSpec::new(12, 12).unwrap();
    let mut c = SynthConfig::new(SynthKind::Fork, 30, grid, 3);
    c.length = 8;
    c.scenes = 3;
    let out = synthesize(&c).unwrap();
    let ds = Dataset::new(grid, out.trajectories).with_references(out.references);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path, grid).unwrap();
    assert_eq!(back.trajectories, ds.trajectories);
    for t in &ds.trajectories {
        let a = ds.reference(t).unwrap().unwrap();
        let b = back.reference(t).unwrap().unwrap();
        assert_eq!(a.id, b.id);
        let worst = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y).abs()).fold(0f32, f32::max);
        assert!(worst <= 0.5 / 255.0 + 1e-6);
    }
}

#[test]
fn off_grid_points_are_rejected_on_load() {
    let grid = GridSpec::new(4, 4).unwrap();
    assert!(parse_trajectories("a 0,0 4,1\n".as_bytes(), &grid).is_err());
    assert!(parse_trajectories("a 0,0 1,1\n".as_bytes(), &grid).is_ok());
}

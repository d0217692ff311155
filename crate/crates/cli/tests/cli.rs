use std::path::Path;
use std::process::{Command, Output};

fn stcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stcnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = stcnn(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    stcnn(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        ok(&["generate", "--kind", "fork", "--count", "1000", "--seed", "7", "--out", s(out)]);
    }
    let fa = std::fs::read(a.join("trajectories.txt")).unwrap();
    let fb = std::fs::read(b.join("trajectories.txt")).unwrap();
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
    let settings = |dir: &Path| {
        std::fs::read_to_string(dir.join("run_config.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("out="))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(settings(&a), settings(&b));
}

#[test]
fn generate_zero_count_writes_empty_file() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--kind", "linear", "--count", "0", "--out", s(d.path())]);
    assert_eq!(std::fs::read(d.path().join("trajectories.txt")).unwrap(), b"");
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&["generate", "--kind", "spiral", "--out", s(d.path())]), 2);
    assert_eq!(code(&["generate", "--out", s(d.path())]), 2);
    assert_eq!(code(&["split", "--data", s(&d.path().join("missing.txt")), "--out", s(d.path())]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    let cfg = d.path().join("c.txt");
    std::fs::write(&cfg, "kind=linear\ncoutn=3\n").unwrap();
    assert_eq!(code(&["generate", "--config", s(&cfg), "--out", s(d.path())]), 2);
}

#[test]
fn malformed_data_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("bad.txt");
    std::fs::write(&data, "t0 1,1 2;2\n").unwrap();
    assert_eq!(code(&["split", "--data", s(&data), "--out", s(d.path())]), 1);
}

#[test]
fn uniform_evaluation_prints_log_cells() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--kind", "linear", "--count", "20", "--seed", "3", "--out", s(d.path())]);
    let data = d.path().join("trajectories.txt");
    let out = ok(&[
        "evaluate", "--data", s(&data), "--model", "uniform", "--horizon", "4", "--samples", "10", "--out",
        s(&d.path().join("eval")),
    ]);
    assert_eq!(code(&["evaluate", "--data", s(&data), "--model", "uniform", "--samples", "5", "--out", s(d.path())]), 2);
    let want = format!("{:.6}", (28.0f64 * 28.0).ln());
    let line = out.lines().find(|l| l.contains("nll_per_step")).unwrap();
    assert!(line.contains(&want), "{out}");
}

#[test]
fn sample_with_zero_forecasts_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let root = d.path();
    ok(&["generate", "--kind", "linear", "--count", "3", "--grid", "8x8", "--length", "6", "--out", s(root)]);
    let data = root.join("trajectories.txt");
    ok(&[
        "train", "--data", s(&data), "--grid", "8x8", "--epochs", "1", "--arch", "enc_channels=4",
        "--arch", "dec_channels=4", "--arch", "latent_channels=4", "--validation-fraction", "0", "--out", s(root),
    ]);
    let ckpt = root.join("model.ckpt");
    assert_eq!(code(&["sample", "--checkpoint", s(&ckpt), "--segments", s(&data), "--samples", "0", "--out", s(root)]), 2);
    assert_eq!(code(&["sample", "--checkpoint", s(&root.join("none.ckpt")), "--segments", s(&data), "--out", s(root)]), 2);
}

#[test]
fn full_pipeline_with_folds_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let root = d.path();
    let data_dir = root.join("data");
    ok(&[
        "generate", "--kind", "fork", "--count", "40", "--grid", "8x8", "--length", "8", "--scenes", "2", "--seed", "5",
        "--out", s(&data_dir),
    ]);
    let data = data_dir.join("trajectories.txt");
    assert!(data_dir.join("images").join("scene0.ppm").is_file());
    ok(&["split", "--data", s(&data), "--grid", "8x8", "--folds", "2", "--seed", "1", "--out", s(&data_dir)]);
    let folds = data_dir.join("folds.txt");
    let train_args = |out: &Path| {
        vec![
            "train".to_string(), "--data".into(), s(&data).into(), "--folds".into(), s(&folds).into(), "--grid".into(),
            "8x8".into(), "--epochs".into(), "2".into(), "--batch-size".into(), "8".into(), "--arch".into(),
            "enc_channels=4".into(), "--arch".into(), "dec_channels=4".into(), "--arch".into(), "latent_channels=4".into(),
            "--seed".into(), "9".into(), "--out".into(), s(out).into(),
        ]
    };
    let runs = root.join("runs");
    let args = train_args(&runs);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    for f in 0..2 {
        assert!(runs.join(format!("model-{f}.ckpt")).is_file());
        let csv = std::fs::read_to_string(runs.join(format!("model-{f}.loss.csv"))).unwrap();
        assert!(csv.starts_with("epoch,split,mean_nll_per_step,sum_nll_per_traj\n"));
    }
    let sidecar = runs.join("run_config.txt");
    let again = root.join("again");
    ok(&["train", "--config", s(&sidecar), "--out", s(&again)]);
    assert_eq!(
        std::fs::read(runs.join("model-1.ckpt")).unwrap(),
        std::fs::read(again.join("model-1.ckpt")).unwrap()
    );

    let lstm = root.join("lstm");
    ok(&[
        "train", "--model", "lstm", "--data", s(&data), "--folds", s(&folds), "--grid", "8x8", "--epochs", "1",
        "--lstm", "hidden=8", "--out", s(&lstm),
    ]);

    let samples = root.join("samples");
    ok(&[
        "sample", "--checkpoint", s(&runs.join("model-0.ckpt")), "--segments", s(&data), "--horizon", "3", "--samples",
        "4", "--seed", "2", "--out", s(&samples),
    ]);
    let forecasts = std::fs::read_to_string(samples.join("forecasts.txt")).unwrap();
    assert_eq!(forecasts.lines().count(), 40 * 4);

    let stcnn_spec = format!("stcnn={}", s(&runs.join("model-{fold}.ckpt")));
    let mean_spec = format!("mean-point={}", s(&runs.join("model-{fold}.ckpt")));
    let lstm_spec = format!("lstm={}", s(&lstm.join("model-{fold}.ckpt")));
    let eval = root.join("eval");
    let table = ok(&[
        "evaluate", "--data", s(&data), "--folds", s(&folds), "--grid", "8x8", "--horizon", "4", "--samples", "10",
        "--model", "uniform", "--model", "shotgun", "--model", &stcnn_spec, "--model", &mean_spec, "--model", &lstm_spec,
        "--out", s(&eval),
    ]);
    assert!(table.contains("shotgun") && table.contains("mean-point") && table.contains("lstm"), "{table}");
    let report = std::fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report.contains("shotgun,all,nll_per_step,undefined"), "{report}");

    let plots = root.join("plots");
    ok(&[
        "plot", "--checkpoint", s(&runs.join("model-0.ckpt")), "--segments", s(&data), "--horizon", "3", "--scale", "2",
        "--out", s(&plots),
    ]);
    let heat = std::fs::read(plots.join("heatmap.pgm")).unwrap();
    assert!(heat.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(heat.len(), b"P5\n16 16\n255\n".len() + 256);
    let overlay = std::fs::read(plots.join("overlay.ppm")).unwrap();
    assert!(overlay.starts_with(b"P6\n16 16\n255\n"));
    assert!(overlay.windows(3).any(|w| w == [255, 255, 0]));
    assert!(plots.join("run_config.txt").is_file());

    let from_file = root.join("plots2");
    ok(&[
        "plot", "--forecasts", s(&samples.join("forecasts.txt")), "--segments", s(&data), "--grid", "8x8", "--out",
        s(&from_file),
    ]);
    assert!(from_file.join("heatmap.pgm").is_file());
}

#[test]
fn convert_mnistseq_writes_trajectories() {
    let d = tempfile::tempdir().unwrap();
    let raw = d.path().join("digit.txt");
    std::fs::write(&raw, "5 6 0 0\n1 0 0 0\n0 1 0 0\n1 1 1 1\n").unwrap();
    ok(&["convert-mnistseq", "--input", s(&raw), "--out", s(d.path())]);
    let t = std::fs::read_to_string(d.path().join("trajectories.txt")).unwrap();
    assert_eq!(t.lines().count(), 1);
    assert!(t.starts_with("digit-0 6,5 "), "{t}");
}

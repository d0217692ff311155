use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use stcnn_core::data::Dataset;
use stcnn_core::forecast::{sample_batch, write_forecasts};

use crate::config::RunConfig;
use crate::error::{require_file, CliError, CliResult};
use crate::models::{check_grid, Loaded};
use crate::{common, grid, Global};

pub const FORECASTS: &str = "forecasts.txt";

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Trajectory file; the first `s` points of each entry are its segment.
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Forecast steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Forecasts per segment.
    #[arg(long)]
    samples: Option<usize>,
}

pub fn run(cfg: &mut RunConfig, g: &Global, a: &SampleArgs) -> CliResult<()> {
    let ckpt = PathBuf::from(cfg.required("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))?);
    let segments = PathBuf::from(cfg.required("segments", a.segments.as_ref().map(|p| p.display().to_string()))?);
    let horizon = cfg.value("horizon", a.horizon, 10)?;
    let k = cfg.value("samples", a.samples, 10)?;
    if k == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    if horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let loaded = Loaded::load(&ckpt)?;
    let model = loaded.model();
    let grid = grid(cfg, g, model.grid())?;
    let c = common(cfg, g)?;
    cfg.finish()?;
    check_grid(model, grid, "the checkpoint")?;
    require_file(&segments)?;
    let data = Dataset::load(&segments, grid)?;
    let s = model.window_len();
    let path = c.out.join(FORECASTS);
    let mut w = BufWriter::new(File::create(&path)?);
    for (i, t) in data.trajectories.iter().enumerate() {
        if t.len() < s {
            return Err(CliError::runtime(format!(
                "segment {:?} has {} points, the model needs {s}",
                t.id,
                t.len()
            )));
        }
        let cond = model.condition(data.reference(t)?)?;
        let seed = c.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let samples = sample_batch(model, &t.points[..s], horizon, k, &cond, seed)?;
        write_forecasts(&mut w, &t.id, &samples)?;
    }
    w.flush()?;
    cfg.write_sidecar(&c.out)?;
    println!(
        "{k} forecasts of {horizon} steps for {} segments written to {}",
        data.len(),
        path.display()
    );
    Ok(())
}

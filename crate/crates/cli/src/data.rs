use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use stcnn_core::data::{convert_mnistseq, split_folds, synthesize, Dataset, SynthConfig, SynthKind, Trajectory};
use stcnn_core::GridSpec;

use crate::config::RunConfig;
use crate::error::{require_file, CliResult};
use crate::{common, grid, parse_kind, Global};

pub const TRAJECTORIES: &str = "trajectories.txt";
pub const FOLDS: &str = "folds.txt";

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// linear, fork, circle or jumpy.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<SynthKind>,
    #[arg(long)]
    count: Option<usize>,
    /// Points per trajectory before boundary truncation.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    /// Fork: straight points before a turn may happen.
    #[arg(long)]
    approach: Option<usize>,
    /// Fork: per-step turn probability.
    #[arg(long)]
    hazard: Option<f64>,
    /// Fork: number of scene images to write and link.
    #[arg(long)]
    scenes: Option<usize>,
}

pub fn generate(cfg: &mut RunConfig, g: &Global, a: &GenerateArgs) -> CliResult<()> {
    let d = SynthConfig::new(SynthKind::Linear, 0, GridSpec::default(), 0);
    let kind = cfg.required("kind", a.kind)?;
    let count = cfg.value("count", a.count, 100)?;
    let grid = grid(cfg, g, GridSpec::default())?;
    let c = common(cfg, g)?;
    let config = SynthConfig {
        kind,
        count,
        grid,
        seed: c.seed,
        length: cfg.value("length", a.length, d.length)?,
        min_len: cfg.value("min_len", a.min_len, d.min_len)?,
        approach: cfg.value("approach", a.approach, d.approach)?,
        hazard: cfg.value("hazard", a.hazard, d.hazard)?,
        scenes: cfg.value("scenes", a.scenes, d.scenes)?,
    };
    cfg.finish()?;
    let out = synthesize(&config)?;
    let path = c.out.join(TRAJECTORIES);
    Dataset::new(grid, out.trajectories)
        .with_references(out.references)
        .save(&path)?;
    cfg.write_sidecar(&c.out)?;
    println!("wrote {count} {kind} trajectories to {}", path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Raw sequence files with `dx dy eos eod` lines.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<String>,
}

pub fn convert(cfg: &mut RunConfig, g: &Global, a: &ConvertArgs) -> CliResult<()> {
    let inputs = cfg.list("inputs", a.inputs.clone());
    if inputs.is_empty() {
        return Err(crate::error::CliError::Usage("missing --input (or inputs= in the config file)".into()));
    }
    let grid = grid(cfg, g, GridSpec::default())?;
    let c = common(cfg, g)?;
    cfg.finish()?;
    let mut all: Vec<Trajectory> = Vec::new();
    for input in &inputs {
        let path = PathBuf::from(input);
        require_file(&path)?;
        let stem = path.file_stem().map_or_else(|| "seq".into(), |s| s.to_string_lossy().into_owned());
        let (trajs, stats) = convert_mnistseq(BufReader::new(File::open(&path)?), &grid, &format!("{stem}-"))?;
        if stats.clamped > 0 {
            log::warn!("{input}: {} points clamped to the grid", stats.clamped);
        }
        println!(
            "{input}: {} digits, {} kept, {} skipped, {} clamped points",
            stats.digits,
            trajs.len(),
            stats.skipped,
            stats.clamped
        );
        all.extend(trajs);
    }
    let path = c.out.join(TRAJECTORIES);
    Dataset::new(grid, all).save(&path)?;
    cfg.write_sidecar(&c.out)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
}

pub fn split(cfg: &mut RunConfig, g: &Global, a: &SplitArgs) -> CliResult<()> {
    let data = PathBuf::from(cfg.required("data", a.data.as_ref().map(|p| p.display().to_string()))?);
    let k = cfg.value("folds", a.folds, 5)?;
    let grid = grid(cfg, g, GridSpec::default())?;
    let c = common(cfg, g)?;
    cfg.finish()?;
    require_file(&data)?;
    let ds = Dataset::load(&data, grid)?;
    let folds = split_folds(ds.len(), k, c.seed)?;
    let path = c.out.join(FOLDS);
    let mut w = BufWriter::new(File::create(&path)?);
    folds.write(&mut w, &ds.trajectories)?;
    w.flush()?;
    cfg.write_sidecar(&c.out)?;
    println!("fold sizes {:?} written to {}", folds.sizes(), path.display());
    Ok(())
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use stcnn_core::data::{write_pixmap, Dataset, ReferenceImage, Trajectory};
use stcnn_core::forecast::{parse_forecasts, sample_batch};
use stcnn_core::{GridDistribution, GridSpec, Point};

use crate::config::RunConfig;
use crate::error::{require_file, CliError, CliResult};
use crate::models::{check_grid, Loaded};
use crate::{common, grid, Global};

pub const HEATMAP: &str = "heatmap.pgm";
pub const OVERLAY: &str = "overlay.ppm";
const YELLOW: [u8; 3] = [255, 255, 0];
const RED: [u8; 3] = [255, 0, 0];

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Model whose one-step distribution is drawn; forecasts are sampled
    /// from it unless --forecasts is given.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Forecast file written by `sample`.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// Trajectory file holding the segment.
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Segment id (default: the first entry).
    #[arg(long)]
    id: Option<String>,
    /// Segment length when no checkpoint fixes it.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Pixels per grid cell.
    #[arg(long)]
    scale: Option<usize>,
}

/// Grey levels `255 · mass / max mass`, row-major.
pub fn heatmap_bytes(d: &GridDistribution) -> Vec<u8> {
    let max = d.mass().iter().cloned().fold(0.0, f64::max);
    d.mass()
        .iter()
        .map(|&m| if max > 0.0 { (255.0 * m / max).round() as u8 } else { 0 })
        .collect()
}

/// RGB background from the reference image (grey replicated), or black.
pub fn background(grid: &GridSpec, reference: Option<&ReferenceImage>) -> Vec<u8> {
    let n = grid.cells();
    match reference {
        None => vec![0; 3 * n],
        Some(img) => (0..n)
            .flat_map(|i| {
                let px = &img.pixels[i * img.channels..(i + 1) * img.channels];
                let c = |k: usize| (255.0 * px[k.min(img.channels - 1)]).round() as u8;
                [c(0), c(1), c(2)]
            })
            .collect(),
    }
}

pub fn paint(rgb: &mut [u8], grid: &GridSpec, points: &[Point], colour: [u8; 3]) {
    for p in points {
        if let Some(i) = grid.index(*p) {
            rgb[3 * i..3 * i + 3].copy_from_slice(&colour);
        }
    }
}

/// Nearest-neighbour enlargement by `k` in both directions.
pub fn upscale(bytes: &[u8], grid: &GridSpec, channels: usize, k: usize) -> Vec<u8> {
    let (h, w) = (grid.height, grid.width);
    let mut out = Vec::with_capacity(bytes.len() * k * k);
    for r in 0..h * k {
        for c in 0..w * k {
            let i = ((r / k) * w + c / k) * channels;
            out.extend_from_slice(&bytes[i..i + channels]);
        }
    }
    out
}

/// Share of forecasts whose first step lands in each cell.
fn first_step_frequencies(grid: GridSpec, forecasts: &[Vec<Point>]) -> CliResult<GridDistribution> {
    let mut mass = vec![0f64; grid.cells()];
    for f in forecasts {
        let i = f
            .first()
            .and_then(|p| grid.index(*p))
            .ok_or_else(|| CliError::runtime("forecast point outside the grid"))?;
        mass[i] += 1.0;
    }
    let n = forecasts.len() as f64;
    mass.iter_mut().for_each(|m| *m /= n);
    Ok(GridDistribution::from_mass(grid, mass)?)
}

fn write_image(path: &PathBuf, grid: &GridSpec, channels: usize, bytes: &[u8], scale: usize) -> CliResult<()> {
    let big = upscale(bytes, grid, channels, scale);
    let mut w = BufWriter::new(File::create(path)?);
    write_pixmap(&mut w, grid.width * scale, grid.height * scale, channels, &big)?;
    w.flush()?;
    Ok(())
}

fn pick<'a>(data: &'a Dataset, id: Option<&str>) -> CliResult<&'a Trajectory> {
    match id {
        Some(id) => data
            .trajectories
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CliError::Usage(format!("no segment with id {id:?}"))),
        None => data
            .trajectories
            .first()
            .ok_or_else(|| CliError::Usage("segment file is empty".into())),
    }
}

pub fn run(cfg: &mut RunConfig, g: &Global, a: &PlotArgs) -> CliResult<()> {
    let ckpt = cfg.optional("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))?;
    let forecasts = cfg.optional("forecasts", a.forecasts.as_ref().map(|p| p.display().to_string()))?;
    let segments = PathBuf::from(cfg.required("segments", a.segments.as_ref().map(|p| p.display().to_string()))?);
    let id = cfg.optional("id", a.id.clone())?;
    let horizon = cfg.value("horizon", a.horizon, 10)?;
    let k = cfg.value("samples", a.samples, 10)?;
    let scale = cfg.value("scale", a.scale, 1)?;
    if ckpt.is_none() && forecasts.is_none() {
        return Err(CliError::Usage("plot needs --checkpoint or --forecasts".into()));
    }
    if k == 0 || horizon == 0 || scale == 0 {
        return Err(CliError::Usage("samples, horizon and scale must be positive".into()));
    }
    let loaded = ckpt.as_ref().map(|p| Loaded::load(p.as_ref())).transpose()?;
    let model = loaded.as_ref().map(Loaded::model);
    let s = match model {
        Some(m) => {
            let s = m.window_len();
            cfg.note("s", s);
            s
        }
        None => cfg.value("s", a.s, 4)?,
    };
    let grid = grid(cfg, g, model.map_or_else(GridSpec::default, |m| m.grid()))?;
    let c = common(cfg, g)?;
    cfg.finish()?;
    if let Some(m) = model {
        check_grid(m, grid, "the checkpoint")?;
    }
    require_file(&segments)?;
    let data = Dataset::load(&segments, grid)?;
    let t = pick(&data, id.as_deref())?;
    if t.len() < s {
        return Err(CliError::runtime(format!("segment {:?} has {} points, need {s}", t.id, t.len())));
    }
    let segment = &t.points[..s];
    let reference = data.reference(t)?;
    let paths: Vec<Vec<Point>> = match (&forecasts, model) {
        (Some(f), _) => {
            let f = PathBuf::from(f);
            require_file(&f)?;
            parse_forecasts(&std::fs::read_to_string(&f)?)?
                .into_iter()
                .filter(|r| r.segment_id == t.id)
                .map(|r| r.points)
                .collect()
        }
        (None, Some(m)) => {
            let cond = m.condition(reference)?;
            sample_batch(m, segment, horizon, k, &cond, c.seed)?
                .into_iter()
                .map(|f| f.points)
                .collect()
        }
        (None, None) => unreachable!("checked above"),
    };
    if paths.is_empty() {
        return Err(CliError::runtime(format!("no forecasts for segment {:?}", t.id)));
    }
    let one_step = match model {
        Some(m) => m.predict(segment, &m.condition(reference)?)?,
        None => first_step_frequencies(grid, &paths)?,
    };
    let heat = c.out.join(HEATMAP);
    write_image(&heat, &grid, 1, &heatmap_bytes(&one_step), scale)?;
    let mut rgb = background(&grid, reference);
    for p in &paths {
        paint(&mut rgb, &grid, p, RED);
    }
    paint(&mut rgb, &grid, segment, YELLOW);
    let overlay = c.out.join(OVERLAY);
    write_image(&overlay, &grid, 3, &rgb, scale)?;
    cfg.write_sidecar(&c.out)?;
    println!(
        "segment {:?}: heatmap {}, overlay {} ({} forecasts)",
        t.id,
        heat.display(),
        overlay.display(),
        paths.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_maps_max_to_white() {
        let grid = GridSpec::new(1, 2).unwrap();
        let d = GridDistribution::from_mass(grid, vec![0.75, 0.25]).unwrap();
        assert_eq!(heatmap_bytes(&d), vec![255, 85]);
    }

    #[test]
    fn segment_drawn_over_forecast() {
        let grid = GridSpec::new(2, 2).unwrap();
        let mut rgb = background(&grid, None);
        paint(&mut rgb, &grid, &[Point::new(0, 0), Point::new(1, 1)], RED);
        paint(&mut rgb, &grid, &[Point::new(0, 0)], YELLOW);
        assert_eq!(&rgb[0..3], &YELLOW);
        assert_eq!(&rgb[9..12], &RED);
        assert_eq!(&rgb[3..6], &[0, 0, 0]);
    }

    #[test]
    fn upscale_repeats_cells() {
        let grid = GridSpec::new(1, 2).unwrap();
        assert_eq!(upscale(&[1, 2], &grid, 1, 2), vec![1, 1, 2, 2, 1, 1, 2, 2]);
    }

    #[test]
    fn grey_reference_becomes_grey_rgb() {
        let grid = GridSpec::new(1, 2).unwrap();
        let img = ReferenceImage::new("r", 1, 2, 1, vec![0.5, 1.0]).unwrap();
        assert_eq!(background(&grid, Some(&img)), vec![128, 128, 128, 255, 255, 255]);
    }
}

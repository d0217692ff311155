//! Synthetic trajectory families.
//!
//! Every trajectory is drawn from its own ChaCha8 stream (`seed`, stream =
//! trajectory index), so a dataset is a pure function of its configuration
//! and any prefix of a larger dataset equals the smaller one.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ReferenceImage, Trajectory};
use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

const MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SynthKind {
    /// Constant integer velocity from a random start.
    Linear,
    /// Straight approach along +col, then a diagonal turn up or down.
    Fork,
    /// Constant angular velocity around a random centre.
    Circle,
    /// Short pen strokes joined by occasional long-distance jumps.
    Jumpy,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [Self::Linear, Self::Fork, Self::Circle, Self::Jumpy];

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Fork => "fork",
            Self::Circle => "circle",
            Self::Jumpy => "jumpy",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kind {s:?} (linear, fork, circle, jumpy)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub count: usize,
    pub grid: GridSpec,
    pub seed: u64,
    /// Points per trajectory before boundary truncation.
    pub length: usize,
    /// Truncated trajectories shorter than this are redrawn.
    pub min_len: usize,
    /// Fork only: straight points guaranteed before the turn may happen.
    pub approach: usize,
    /// Fork only: per-step probability of turning once the approach is done.
    pub hazard: f64,
    /// Fork only: number of scene images to emit and link (0 for none).
    pub scenes: usize,
}

impl SynthConfig {
    pub fn new(kind: SynthKind, count: usize, grid: GridSpec, seed: u64) -> Self {
        Self {
            kind,
            count,
            grid,
            seed,
            length: 16,
            min_len: 5,
            approach: 4,
            hazard: 0.3,
            scenes: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.length < self.min_len {
            return Err(Error::Config(format!(
                "length {} must be at least min_len {} (and min_len ≥ 1)",
                self.length, self.min_len
            )));
        }
        if !(0.0..=1.0).contains(&self.hazard) {
            return Err(Error::Config(format!("hazard {} outside [0, 1]", self.hazard)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthOutput {
    pub trajectories: Vec<Trajectory>,
    pub references: Vec<ReferenceImage>,
}

/// Straight path from `start` with a fixed per-step velocity; `steps` points
/// including the start.
pub fn linear_path(start: Point, velocity: (i32, i32), steps: usize) -> Vec<Point> {
    (0..steps as i32)
        .map(|k| start.offset(velocity.0 * k, velocity.1 * k))
        .collect()
}

/// Keeps the leading in-grid run of `points`.
fn truncate(mut points: Vec<Point>, grid: &GridSpec) -> Vec<Point> {
    let n = points.iter().position(|p| !grid.contains(*p)).unwrap_or(points.len());
    points.truncate(n);
    points
}

pub fn synthesize(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut out = SynthOutput::default();
    let scene_rows = scene_rows(config);
    for i in 0..config.count {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let scene = (!scene_rows.is_empty()).then(|| i % scene_rows.len());
        let mut attempt = 0;
        let points = loop {
            let raw = match config.kind {
                SynthKind::Linear => linear(config, &mut rng),
                SynthKind::Fork => fork(config, &mut rng, scene.map(|j| scene_rows[j])),
                SynthKind::Circle => circle(config, &mut rng),
                SynthKind::Jumpy => jumpy(config, &mut rng),
            };
            let pts = truncate(raw, &config.grid);
            if pts.len() >= config.min_len {
                break pts;
            }
            attempt += 1;
            if attempt == MAX_ATTEMPTS {
                return Err(Error::Config(format!(
                    "{} trajectories of {} points do not fit a {} grid",
                    config.kind, config.min_len, config.grid
                )));
            }
        };
        let mut t = Trajectory::new(format!("{}{i}", config.kind), points);
        if let Some(j) = scene {
            t = t.with_reference(scene_id(j));
        }
        out.trajectories.push(t);
    }
    out.references = scene_rows
        .iter()
        .enumerate()
        .map(|(j, &row)| fork_scene(scene_id(j), row, config))
        .collect();
    Ok(out)
}

fn scene_id(j: usize) -> String {
    format!("scene{j}")
}

fn scene_rows(config: &SynthConfig) -> Vec<i32> {
    if config.kind != SynthKind::Fork || config.scenes == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let (lo, hi) = fork_rows(config);
    (0..config.scenes).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Start rows from which a turn of maximal length stays on the grid when the
/// grid is tall enough, and the middle quarter-to-three-quarters otherwise.
fn fork_rows(c: &SynthConfig) -> (i32, i32) {
    let h = c.grid.height as i32;
    let turn = c.length.saturating_sub(c.approach) as i32;
    let lo = (h / 4).max(turn.min((h - 1) / 2));
    (lo, (h - lo).max(lo + 1))
}

fn random_point(grid: &GridSpec, rng: &mut ChaCha8Rng) -> Point {
    Point::new(
        rng.gen_range(0..grid.height as i32),
        rng.gen_range(0..grid.width as i32),
    )
}

fn linear(c: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let start = random_point(&c.grid, rng);
    let v = loop {
        let v = (rng.gen_range(-2..=2), rng.gen_range(-2..=2));
        if v != (0, 0) {
            break v;
        }
    };
    linear_path(start, v, c.length)
}

fn fork(c: &SynthConfig, rng: &mut ChaCha8Rng, scene_row: Option<i32>) -> Vec<Point> {
    let (lo, hi) = fork_rows(c);
    let row = scene_row.unwrap_or_else(|| rng.gen_range(lo..hi));
    let mut p = Point::new(row, rng.gen_range(0..=2.min(c.grid.width as i32 - 1)));
    let mut turn = None;
    let mut pts = vec![p];
    while pts.len() < c.length {
        if turn.is_none() && pts.len() >= c.approach && rng.gen_bool(c.hazard) {
            turn = Some(if rng.gen_bool(0.5) { -1 } else { 1 });
        }
        p = p.offset(turn.unwrap_or(0), 1);
        pts.push(p);
    }
    pts
}

/// Direction of the turn in a fork trajectory: `-1` (up), `+1` (down), or
/// `None` if it never leaves its starting row.
pub fn fork_branch(points: &[Point]) -> Option<i32> {
    let first = points.first()?;
    let last = points.last()?;
    match last.row.cmp(&first.row) {
        std::cmp::Ordering::Less => Some(-1),
        std::cmp::Ordering::Greater => Some(1),
        std::cmp::Ordering::Equal => None,
    }
}

fn fork_scene(id: String, row: i32, c: &SynthConfig) -> ReferenceImage {
    let (h, w) = (c.grid.height, c.grid.width);
    let mut pixels = vec![0f32; h * w];
    for r in 0..h {
        for col in 0..w {
            let d = (r as i32 - row).abs();
            pixels[r * w + col] = if d == 0 {
                1.0
            } else if d <= col as i32 {
                0.5
            } else {
                0.0
            };
        }
    }
    ReferenceImage::new(id, h, w, 1, pixels).expect("scene dimensions are consistent")
}

fn circle(c: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let (h, w) = (c.grid.height as f64, c.grid.width as f64);
    let rmax = (h.min(w) / 3.0).max(1.5);
    let radius = rng.gen_range(1.0..rmax);
    let mut centre_on = |extent: f64| {
        if extent - radius > radius {
            rng.gen_range(radius..extent - radius)
        } else {
            extent / 2.0
        }
    };
    let centre = (centre_on(h), centre_on(w));
    let speed = rng.gen_range(1.0..2.0);
    let omega = speed / radius * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..c.length)
        .map(|k| {
            let a = phase + omega * k as f64;
            let (r, col) = (centre.0 + radius * a.sin(), centre.1 + radius * a.cos());
            Point::new((r + 0.5).floor() as i32, (col + 0.5).floor() as i32)
        })
        .collect()
}

const NEIGHBOURS: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

fn jumpy(c: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut p = random_point(&c.grid, rng);
    let mut dir = rng.gen_range(0..8usize);
    let mut left = rng.gen_range(3..=8usize);
    let mut pts = vec![p];
    while pts.len() < c.length {
        if left == 0 {
            p = random_point(&c.grid, rng);
            left = rng.gen_range(3..=8usize);
            dir = rng.gen_range(0..8usize);
        } else {
            match rng.gen_range(0..6) {
                0 => dir = (dir + 1) % 8,
                1 => dir = (dir + 7) % 8,
                _ => {}
            }
            let (dr, dc) = NEIGHBOURS[dir];
            p = c.grid.clamp(p.offset(dr, dc));
            left -= 1;
        }
        pts.push(p);
    }
    pts
}

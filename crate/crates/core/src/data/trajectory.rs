//! Canonical trajectory text format.
//!
//! One trajectory per line: `<id> [ref=<image_id>] <row>,<col> <row>,<col> …`.
//! Blank lines and lines starting with `#` are ignored.

use std::io::{BufRead, Write};

use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub id: String,
    pub points: Vec<Point>,
    pub ref_image_id: Option<String>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Self {
        Self {
            id: id.into(),
            points,
            ref_image_id: None,
        }
    }

    pub fn with_reference(mut self, image_id: impl Into<String>) -> Self {
        self.ref_image_id = Some(image_id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks every point against the grid.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        match self.points.iter().position(|p| !grid.contains(*p)) {
            Some(index) => Err(Error::OutOfGrid {
                id: self.id.clone(),
                index,
                point: self.points[index],
                height: grid.height,
                width: grid.width,
            }),
            None => Ok(()),
        }
    }
}

fn parse_point(tok: &str, line: usize) -> Result<Point> {
    let bad = || Error::Parse {
        line,
        msg: format!("expected <row>,<col>, got {tok:?}"),
    };
    let (r, c) = tok.split_once(',').ok_or_else(bad)?;
    Ok(Point::new(
        r.parse().map_err(|_| bad())?,
        c.parse().map_err(|_| bad())?,
    ))
}

pub fn parse_trajectory_line(text: &str, line: usize) -> Result<Option<Trajectory>> {
    let text = text.trim();
    if text.is_empty() || text.starts_with('#') {
        return Ok(None);
    }
    let mut toks = text.split_whitespace();
    let id = toks.next().expect("non-empty line has a token").to_string();
    let mut ref_image_id = None;
    let mut points = Vec::new();
    for (i, tok) in toks.enumerate() {
        if let Some(r) = tok.strip_prefix("ref=") {
            if i != 0 || r.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "ref=<image_id> must directly follow the id".into(),
                });
            }
            ref_image_id = Some(r.to_string());
        } else {
            points.push(parse_point(tok, line)?);
        }
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line,
            msg: format!("trajectory {id:?} has no points"),
        });
    }
    Ok(Some(Trajectory {
        id,
        points,
        ref_image_id,
    }))
}

/// Reads a trajectory file, validating every point against `grid`.
pub fn parse_trajectories(reader: impl BufRead, grid: &GridSpec) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(t) = parse_trajectory_line(&line, i + 1)? {
            t.validate(grid)?;
            out.push(t);
        }
    }
    Ok(out)
}

pub fn format_trajectory(t: &Trajectory) -> String {
    let mut s = t.id.clone();
    if let Some(r) = &t.ref_image_id {
        s.push_str(" ref=");
        s.push_str(r);
    }
    for p in &t.points {
        s.push(' ');
        s.push_str(&p.to_string());
    }
    s
}

pub fn write_trajectories(w: &mut impl Write, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        writeln!(w, "{}", format_trajectory(t))?;
    }
    Ok(())
}

//! Pen-stroke digit sequences to grid trajectories.
//!
//! Raw input is whitespace-separated lines `dx dy eos eod`. The first line of
//! a digit holds the absolute pen position (`x` = column, `y` = row); later
//! lines are offsets from the previous position. `eos` marks the end of a
//! stroke and is dropped, so the next offset becomes a jump inside one
//! trajectory. `eod` (or the end of the input) closes the digit.

use std::io::BufRead;

use crate::data::Trajectory;
use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConvertStats {
    pub digits: usize,
    /// Digits with fewer than two points.
    pub skipped: usize,
    /// Positions that fell outside the grid and were moved to the nearest cell.
    pub clamped: usize,
}

/// Cumulative sum of `(drow, dcol)` offsets from `start`, clamped to the grid.
/// Returns the points and the number of clamped positions.
pub fn accumulate(start: Point, offsets: &[(i32, i32)], grid: &GridSpec) -> (Vec<Point>, usize) {
    let mut clamped = 0;
    let mut fix = |p: Point| {
        let q = grid.clamp(p);
        if q != p {
            clamped += 1;
        }
        q
    };
    let mut p = fix(start);
    let mut pts = vec![p];
    for &(dr, dc) in offsets {
        p = fix(p.offset(dr, dc));
        pts.push(p);
    }
    (pts, clamped)
}

pub fn convert_mnistseq(
    reader: impl BufRead,
    grid: &GridSpec,
    id_prefix: &str,
) -> Result<(Vec<Trajectory>, ConvertStats)> {
    let mut stats = ConvertStats::default();
    let mut out = Vec::new();
    let mut start: Option<Point> = None;
    let mut offsets = Vec::new();
    let mut finish = |start: &mut Option<Point>, offsets: &mut Vec<(i32, i32)>, out: &mut Vec<Trajectory>| {
        if let Some(s) = start.take() {
            stats.digits += 1;
            let (pts, c) = accumulate(s, offsets, grid);
            stats.clamped += c;
            if pts.len() < 2 {
                stats.skipped += 1;
            } else {
                out.push(Trajectory::new(format!("{id_prefix}{}", stats.digits - 1), pts));
            }
        }
        offsets.clear();
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let vals = text
            .split_whitespace()
            .map(|t| t.parse::<i32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("expected integers `dx dy eos eod`, got {text:?}"),
            })?;
        if vals.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 fields, got {}", vals.len()),
            });
        }
        let (dx, dy, eod) = (vals[0], vals[1], vals[3] != 0);
        match start {
            None => start = Some(Point::new(dy, dx)),
            Some(_) => offsets.push((dy, dx)),
        }
        if eod {
            finish(&mut start, &mut offsets, &mut out);
        }
    }
    finish(&mut start, &mut offsets, &mut out);
    if stats.clamped > 0 {
        log::warn!("clamped {} off-grid positions to the {grid} grid", stats.clamped);
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_accumulate() {
        let g = GridSpec::default();
        let (pts, c) = accumulate(Point::new(4, 4), &[(1, 0), (1, 0)], &g);
        assert_eq!(pts, vec![Point::new(4, 4), Point::new(5, 4), Point::new(6, 4)]);
        assert_eq!(c, 0);
    }

    #[test]
    fn digits_split_on_end_marker_and_pen_lift_dropped() {
        let raw = "4 4 0 0\n0 1 0 0\n5 0 1 0\n1 1 0 1\n7 7 0 1\n2 2 0 0\n1 0 0 0\n";
        let (t, s) = convert_mnistseq(raw.as_bytes(), &GridSpec::default(), "m").unwrap();
        assert_eq!(s, ConvertStats { digits: 3, skipped: 1, clamped: 0 });
        assert_eq!(t.len(), 2);
        assert_eq!(
            t[0].points,
            vec![Point::new(4, 4), Point::new(5, 4), Point::new(5, 9), Point::new(6, 10)]
        );
        assert_eq!(t[1].id, "m2");
        assert_eq!(t[1].points, vec![Point::new(2, 2), Point::new(2, 3)]);
    }

    #[test]
    fn off_grid_is_clamped_and_counted() {
        let raw = "26 1 0 0\n5 0 0 0\n0 -3 0 1\n";
        let (t, s) = convert_mnistseq(raw.as_bytes(), &GridSpec::default(), "m").unwrap();
        assert_eq!(s.clamped, 2);
        assert_eq!(t[0].points, vec![Point::new(1, 26), Point::new(1, 27), Point::new(0, 27)]);
    }

    #[test]
    fn malformed_line() {
        let err = convert_mnistseq("1 2 0\n".as_bytes(), &GridSpec::default(), "m").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}

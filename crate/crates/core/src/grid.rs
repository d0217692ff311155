use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Integer pixel location, `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub row: i32,
    pub col: i32,
}

impl Point {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn coord(self) -> [f64; 2] {
        [self.row as f64, self.col as f64]
    }

    pub fn offset(self, dr: i32, dc: i32) -> Self {
        Self::new(self.row + dr, self.col + dc)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

/// Fixed-size image domain the trajectories and distributions live on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
}

impl GridSpec {
    /// At least two cells are required for a categorical over the grid to be
    /// non-degenerate; a `1 × 2` grid is allowed for toy checks.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height * width < 2 {
            return Err(Error::Grid(format!(
                "{height}x{width} has fewer than two cells"
            )));
        }
        if height > i32::MAX as usize || width > i32::MAX as usize {
            return Err(Error::Grid(format!("{height}x{width} is too large")));
        }
        Ok(Self { height, width })
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, p: Point) -> bool {
        p.row >= 0 && p.col >= 0 && (p.row as usize) < self.height && (p.col as usize) < self.width
    }

    /// Flat row-major index of an in-grid point.
    pub fn index(&self, p: Point) -> Option<usize> {
        self.contains(p)
            .then(|| p.row as usize * self.width + p.col as usize)
    }

    pub fn point(&self, index: usize) -> Point {
        Point::new((index / self.width) as i32, (index % self.width) as i32)
    }

    /// Nearest cell to a continuous `(row, col)` location, rounding half up
    /// and clamping to the grid.
    pub fn snap(&self, row: f64, col: f64) -> Point {
        let r = (row + 0.5).floor().clamp(0.0, (self.height - 1) as f64);
        let c = (col + 0.5).floor().clamp(0.0, (self.width - 1) as f64);
        Point::new(r as i32, c as i32)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.row.clamp(0, self.height as i32 - 1),
            p.col.clamp(0, self.width as i32 - 1),
        )
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            height: 28,
            width: 28,
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Grid(format!("expected HxW, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Grid(format!("expected HxW, got {s:?}")))
        };
        Self::new(parse(h)?, parse(w)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let g: GridSpec = "28x28".parse().unwrap();
        assert_eq!(g, GridSpec::default());
        assert_eq!(g.to_string(), "28x28");
        assert!("28".parse::<GridSpec>().is_err());
        assert!("1x1".parse::<GridSpec>().is_err());
        assert!("1x2".parse::<GridSpec>().is_ok());
    }

    #[test]
    fn bounds_and_index() {
        let g = GridSpec::new(28, 28).unwrap();
        assert!(g.contains(Point::new(27, 0)));
        assert!(!g.contains(Point::new(28, 5)));
        assert!(!g.contains(Point::new(-1, 5)));
        assert_eq!(g.index(Point::new(1, 2)), Some(30));
        assert_eq!(g.point(30), Point::new(1, 2));
    }

    #[test]
    fn snap_rounds_half_up() {
        let g = GridSpec::new(10, 10).unwrap();
        assert_eq!(g.snap(2.5, 3.49), Point::new(3, 3));
        assert_eq!(g.snap(-3.0, 12.0), Point::new(0, 9));
    }
}

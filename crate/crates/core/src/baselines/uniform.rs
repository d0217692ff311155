use crate::distribution::GridDistribution;
use crate::grid::{GridSpec, Point};
use crate::provider::{check_window, Conditioning, GridModel};
use crate::Result;

/// Equal mass on every cell regardless of the input.
#[derive(Clone, Copy, Debug)]
pub struct UniformModel {
    pub grid: GridSpec,
    pub window: usize,
}

impl UniformModel {
    pub fn new(grid: GridSpec, window: usize) -> Self {
        Self { grid, window }
    }
}

impl GridModel for UniformModel {
    fn name(&self) -> &str {
        "uniform"
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn window_len(&self) -> usize {
        self.window
    }

    fn predict(&self, frames: &[Point], _: &Conditioning) -> Result<GridDistribution> {
        check_window(self, frames)?;
        Ok(GridDistribution::uniform(self.grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nll_is_log_cells() {
        let m = UniformModel::new(GridSpec::default(), 2);
        for frames in [[Point::new(0, 0); 2], [Point::new(27, 3), Point::new(1, 1)]] {
            let d = m.predict(&frames, &Conditioning::NONE).unwrap();
            assert!((d.nll(Point::new(4, 4)).unwrap() - 6.6644).abs() < 1e-4);
        }
    }
}

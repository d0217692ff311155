use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

/// Normalisation tolerance for any distribution handed to a metric.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Categorical distribution over the cells of a grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDistribution {
    grid: GridSpec,
    mass: Vec<f64>,
}

impl GridDistribution {
    pub fn uniform(grid: GridSpec) -> Self {
        let n = grid.cells();
        Self {
            grid,
            mass: vec![1.0 / n as f64; n],
        }
    }

    /// Stable spatial softmax `exp(l - max) / Σ exp(l - max)`.
    pub fn softmax(grid: GridSpec, logits: &[f32]) -> Result<Self> {
        Self::softmax_f64(grid, logits.iter().map(|&v| v as f64))
    }

    pub fn softmax_f64(grid: GridSpec, logits: impl IntoIterator<Item = f64>) -> Result<Self> {
        let logits: Vec<f64> = logits.into_iter().collect();
        if logits.len() != grid.cells() {
            return Err(Error::InvalidLogits(format!(
                "{} logits for a {grid} grid",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidLogits(format!(
                "non-finite logit {} at cell {i}",
                logits[i]
            )));
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut mass: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|v| *v /= z);
        Ok(Self { grid, mass })
    }

    /// Wraps explicit masses; they must be non-negative and sum to one.
    pub fn from_mass(grid: GridSpec, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.cells() {
            return Err(Error::InvalidLogits(format!(
                "{} masses for a {grid} grid",
                mass.len()
            )));
        }
        if mass.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidLogits("masses must be finite and non-negative".into()));
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Unnormalized { sum });
        }
        Ok(Self { grid, mass })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Errors when the mass is off one by more than [`MASS_TOLERANCE`].
    pub fn check_normalized(&self) -> Result<()> {
        let sum = self.total();
        if (sum - 1.0).abs() > MASS_TOLERANCE || self.mass.iter().any(|v| *v < 0.0) {
            return Err(Error::Unnormalized { sum });
        }
        Ok(())
    }

    pub fn prob(&self, p: Point) -> f64 {
        self.grid.index(p).map_or(0.0, |i| self.mass[i])
    }

    pub fn log_prob(&self, p: Point) -> f64 {
        self.prob(p).ln()
    }

    pub fn nll(&self, target: Point) -> Result<f64> {
        let i = self.grid.index(target).ok_or_else(|| Error::OutOfGrid {
            id: "target".into(),
            index: 0,
            point: target,
            height: self.grid.height,
            width: self.grid.width,
        })?;
        Ok(-self.mass[i].ln())
    }

    /// `(1 - lambda) · self + lambda · uniform`.
    pub fn mix_uniform(&self, lambda: f64) -> Self {
        let u = lambda / self.mass.len() as f64;
        Self {
            grid: self.grid,
            mass: self.mass.iter().map(|m| (1.0 - lambda) * m + u).collect(),
        }
    }

    /// Expected `(row, col)`.
    pub fn expectation(&self) -> [f64; 2] {
        let w = self.grid.width;
        let mut e = [0.0; 2];
        for (i, m) in self.mass.iter().enumerate() {
            e[0] += m * (i / w) as f64;
            e[1] += m * (i % w) as f64;
        }
        e
    }

    pub fn argmax(&self) -> Point {
        let i = self
            .mass
            .iter()
            .enumerate()
            .fold(0, |best, (i, &m)| if m > self.mass[best] { i } else { best });
        self.grid.point(i)
    }

    /// Inverse-CDF draw for `u ∈ [0, 1)`: the first cell whose cumulative mass
    /// exceeds `u · total`. Zero-mass cells are never returned.
    pub fn sample(&self, u: f64) -> Point {
        let target = u * self.total();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > 0.0 {
                acc += m;
                last = i;
                if acc > target {
                    return self.grid.point(i);
                }
            }
        }
        self.grid.point(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_are_uniform() {
        let g = GridSpec::new(2, 2).unwrap();
        let d = GridDistribution::softmax(g, &[0.0; 4]).unwrap();
        assert!(d.mass().iter().all(|&m| m == 0.25));
    }

    #[test]
    fn two_cell_softmax() {
        let g = GridSpec::new(1, 2).unwrap();
        let d = GridDistribution::softmax_f64(g, [0.0, 3f64.ln()]).unwrap();
        assert!((d.mass()[0] - 0.25).abs() < 1e-12);
        assert!((d.mass()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn shift_invariant() {
        let g = GridSpec::new(3, 3).unwrap();
        let l: Vec<f32> = (0..9).map(|i| (i as f32 * 0.7).sin()).collect();
        let a = GridDistribution::softmax(g, &l).unwrap();
        let b = GridDistribution::softmax(g, &l.iter().map(|v| v + 5.0).collect::<Vec<_>>()).unwrap();
        for (x, y) in a.mass().iter().zip(b.mass()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_logits_rejected() {
        let g = GridSpec::new(1, 2).unwrap();
        assert!(matches!(
            GridDistribution::softmax(g, &[0.0, f32::NAN]),
            Err(Error::InvalidLogits(_))
        ));
        assert!(GridDistribution::softmax(g, &[f32::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn uniform_nll_is_log_cells() {
        let d = GridDistribution::uniform(GridSpec::default());
        assert!((d.nll(Point::new(3, 9)).unwrap() - 784f64.ln()).abs() < 1e-12);
        assert!(d.nll(Point::new(28, 0)).is_err());
    }

    #[test]
    fn from_mass_validates_sum() {
        let g = GridSpec::new(1, 2).unwrap();
        assert!(GridDistribution::from_mass(g, vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            GridDistribution::from_mass(g, vec![0.5, 0.6]),
            Err(Error::Unnormalized { .. })
        ));
    }

    #[test]
    fn inverse_cdf_boundaries() {
        let g = GridSpec::new(1, 3).unwrap();
        let d = GridDistribution::from_mass(g, vec![0.25, 0.0, 0.75]).unwrap();
        assert_eq!(d.sample(0.0), Point::new(0, 0));
        assert_eq!(d.sample(0.2499), Point::new(0, 0));
        assert_eq!(d.sample(0.25), Point::new(0, 2));
        assert_eq!(d.sample(0.999999), Point::new(0, 2));
        assert_eq!(d.argmax(), Point::new(0, 2));
        assert_eq!(d.expectation(), [0.0, 1.5]);
    }
}

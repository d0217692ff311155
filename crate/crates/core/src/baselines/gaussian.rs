use crate::distribution::GridDistribution;
use crate::grid::GridSpec;
use crate::{Error, Result};

pub const SIGMA_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const LAMBDA_GRID: [f64; 3] = [1e-3, 1e-2, 1e-1];

/// Isotropic Gaussian density at the cell centres, normalised over the grid,
/// then mixed with the uniform distribution by `lambda`.
pub fn gaussian_grid(grid: GridSpec, mu: [f64; 2], sigma: f64, lambda: f64) -> Result<GridDistribution> {
    if !(sigma > 0.0 && sigma.is_finite()) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!(
            "need sigma > 0 and lambda in [0, 1], got sigma={sigma} lambda={lambda}"
        )));
    }
    if !(mu[0].is_finite() && mu[1].is_finite()) {
        return Err(Error::InvalidLogits(format!("non-finite mean {mu:?}")));
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let w = grid.width;
    let logits = (0..grid.cells()).map(|i| {
        let (r, c) = ((i / w) as f64, (i % w) as f64);
        -((r - mu[0]).powi(2) + (c - mu[1]).powi(2)) * inv
    });
    Ok(GridDistribution::softmax_f64(grid, logits)?.mix_uniform(lambda))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchResult {
    pub sigma: f64,
    pub lambda: f64,
    pub nll: f64,
}

/// Minimises `score(sigma, lambda)` over [`SIGMA_GRID`] × [`LAMBDA_GRID`].
pub fn grid_search(mut score: impl FnMut(f64, f64) -> Result<f64>) -> Result<SearchResult> {
    let mut best: Option<SearchResult> = None;
    for sigma in SIGMA_GRID {
        for lambda in LAMBDA_GRID {
            let nll = score(sigma, lambda)?;
            if best.is_none_or(|b| nll < b.nll) {
                best = Some(SearchResult { sigma, lambda, nll });
            }
        }
    }
    Ok(best.expect("grids are non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;

    #[test]
    fn full_smoothing_is_uniform() {
        let g = GridSpec::new(6, 5).unwrap();
        let d = gaussian_grid(g, [2.3, 1.1], 0.7, 1.0).unwrap();
        assert!(d.mass().iter().all(|&m| (m - 1.0 / 30.0).abs() < 1e-15));
    }

    #[test]
    fn narrow_gaussian_concentrates() {
        let g = GridSpec::default();
        let d = gaussian_grid(g, [10.2, 7.9], 0.1, 0.0).unwrap();
        assert_eq!(d.argmax(), Point::new(10, 8));
        assert!(d.prob(Point::new(10, 8)) > 0.99);
    }

    #[test]
    fn smoothing_floor() {
        let g = GridSpec::default();
        let lambda = 1e-2;
        let d = gaussian_grid(g, [0.0, 0.0], 0.5, lambda).unwrap();
        let floor = lambda / 784.0;
        assert!(d.mass().iter().all(|&m| m >= floor * (1.0 - 1e-12)));
        assert!(d.nll(Point::new(27, 27)).unwrap() <= (784.0 / lambda).ln() + 1e-9);
    }

    #[test]
    fn search_picks_minimum() {
        let r = grid_search(|s, l| Ok((s - 2.0).abs() + (l - 1e-2).abs())).unwrap();
        assert_eq!((r.sigma, r.lambda), (2.0, 1e-2));
    }
}

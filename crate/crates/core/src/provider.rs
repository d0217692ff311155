use stcnn_tensor::Tensor;

use crate::data::ReferenceImage;
use crate::distribution::GridDistribution;
use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

/// Per-scene state a model computes once and reuses for every window, such
/// as encoded reference-image features.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Conditioning(pub Option<Tensor<f32>>);

impl Conditioning {
    pub const NONE: Conditioning = Conditioning(None);
}

/// Anything that maps an observed window of `window_len()` points to a
/// distribution over the next cell.
pub trait GridModel: Sync {
    fn name(&self) -> &str;

    fn grid(&self) -> GridSpec;

    fn window_len(&self) -> usize;

    fn condition(&self, reference: Option<&ReferenceImage>) -> Result<Conditioning> {
        let _ = reference;
        Ok(Conditioning::NONE)
    }

    fn predict(&self, frames: &[Point], cond: &Conditioning) -> Result<GridDistribution>;

    /// One distribution per window of `points`: entry `i` conditions on
    /// `points[i..i + s]` and scores `points[i + s]`.
    fn predict_sequence(&self, points: &[Point], cond: &Conditioning) -> Result<Vec<GridDistribution>> {
        let s = self.window_len();
        if points.len() < s + 1 {
            return Err(Error::TooShort {
                what: "sequence",
                need: s + 1,
                got: points.len(),
            });
        }
        (0..points.len() - s)
            .map(|i| self.predict(&points[i..i + s], cond))
            .collect()
    }
}

pub(crate) fn check_window(model: &dyn GridModel, frames: &[Point]) -> Result<()> {
    if frames.len() != model.window_len() {
        return Err(Error::TooShort {
            what: "window",
            need: model.window_len(),
            got: frames.len(),
        });
    }
    let grid = model.grid();
    for (i, p) in frames.iter().enumerate() {
        if !grid.contains(*p) {
            return Err(Error::OutOfGrid {
                id: "window".into(),
                index: i,
                point: *p,
                height: grid.height,
                width: grid.width,
            });
        }
    }
    Ok(())
}

/// The same distribution for every input.
#[derive(Clone, Debug)]
pub struct FixedModel {
    pub dist: GridDistribution,
    pub window: usize,
}

impl FixedModel {
    pub fn new(dist: GridDistribution, window: usize) -> Self {
        Self { dist, window }
    }
}

impl GridModel for FixedModel {
    fn name(&self) -> &str {
        "fixed"
    }

    fn grid(&self) -> GridSpec {
        self.dist.grid()
    }

    fn window_len(&self) -> usize {
        self.window
    }

    fn predict(&self, frames: &[Point], _: &Conditioning) -> Result<GridDistribution> {
        check_window(self, frames)?;
        Ok(self.dist.clone())
    }
}

use stcnn_tensor::Tensor;

use crate::grid::{GridSpec, Point};
use crate::{Error, Result};

/// One-hot image sequence `[len, H, W]`: frame `t` is 1 at `points[t]`.
pub fn rasterize_segment(points: &[Point], grid: &GridSpec) -> Result<Tensor<f32>> {
    if points.is_empty() {
        return Err(Error::TooShort {
            what: "segment",
            need: 1,
            got: 0,
        });
    }
    let plane = grid.cells();
    let mut data = vec![0f32; points.len() * plane];
    for (t, p) in points.iter().enumerate() {
        let idx = grid.index(*p).ok_or_else(|| Error::OutOfGrid {
            id: "segment".into(),
            index: t,
            point: *p,
            height: grid.height,
            width: grid.width,
        })?;
        data[t * plane + idx] = 1.0;
    }
    Ok(Tensor::new(vec![points.len(), grid.height, grid.width], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_corner_frame() {
        let g = GridSpec::new(2, 2).unwrap();
        let t = rasterize_segment(&[Point::new(0, 0)], &g).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn frames_are_one_hot_and_repeat() {
        let g = GridSpec::new(5, 4).unwrap();
        let pts = [Point::new(1, 2), Point::new(1, 2), Point::new(4, 3)];
        let t = rasterize_segment(&pts, &g).unwrap();
        for f in t.data().chunks(20) {
            assert_eq!(f.iter().sum::<f32>(), 1.0);
        }
        assert_eq!(t.data()[..20], t.data()[20..40]);
    }
}

use rand::Rng;

use crate::Tensor;

/// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))` for a kernel of
/// shape `[out, in, k...]` (or `[out, in]` for dense layers).
pub fn glorot_uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor<f32> {
    assert!(shape.len() >= 2, "kernel needs at least [out, in]");
    let receptive: usize = shape[2..].iter().product();
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit) as f32)
}

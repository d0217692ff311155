//! Direct convolution kernels over (depth, height, width) volumes.
//!
//! 2D convolution is the depth-1 case. The input is unfolded into one row per
//! kernel tap, so every inner loop runs over a whole output volume. The
//! transposed convolution reuses the data-gradient kernel as its forward
//! pass, so it is the exact adjoint of the convolution with the same
//! weights. All inner loops accumulate in `f64`.

use crate::{Real, Result, TensorError};

/// Output extent of a convolution along one axis.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input + 2 * padding {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

/// Output extent of a transposed convolution along one axis.
pub fn conv_transpose_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return None;
    }
    let full = (input - 1) * stride + kernel;
    (full > 2 * padding).then(|| full - 2 * padding)
}

const AXES: [&str; 3] = ["depth", "height", "width"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn new(
        op: &'static str,
        cin: usize,
        cout: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            if stride[a] == 0 {
                return Err(TensorError::InvalidArgument {
                    op,
                    msg: format!("{} stride must be at least 1", AXES[a]),
                });
            }
            output[a] = conv_output_len(input[a], kernel[a], stride[a], pad[a]).ok_or(
                TensorError::ShapeMismatch {
                    op,
                    dim: AXES[a],
                    expected: input[a] + 2 * pad[a],
                    actual: kernel[a],
                },
            )?;
        }
        Ok(Self {
            cin,
            cout,
            input,
            kernel,
            stride,
            pad,
            output,
        })
    }

    /// Geometry of the convolution whose adjoint maps `input` (with `cin`
    /// channels) to the transposed-convolution output (with `cout` channels).
    pub fn for_transpose(
        op: &'static str,
        cin: usize,
        cout: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        let mut full = [0; 3];
        for a in 0..3 {
            if stride[a] == 0 {
                return Err(TensorError::InvalidArgument {
                    op,
                    msg: format!("{} stride must be at least 1", AXES[a]),
                });
            }
            full[a] = conv_transpose_output_len(input[a], kernel[a], stride[a], pad[a]).ok_or(
                TensorError::InvalidArgument {
                    op,
                    msg: format!(
                        "{} padding {} leaves no output for input {} and kernel {}",
                        AXES[a], pad[a], input[a], kernel[a]
                    ),
                },
            )?;
        }
        let g = Self::new(op, cout, cin, full, kernel, stride, pad)?;
        debug_assert_eq!(g.output, input);
        Ok(g)
    }

    pub fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    pub fn out_volume(&self) -> usize {
        self.output.iter().product()
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel_volume()
    }

    /// Range of output indices along `axis` whose tap `k` lands inside the input.
    #[inline]
    fn valid(&self, axis: usize, k: usize) -> (usize, usize) {
        let (inp, out, s, p) = (
            self.input[axis],
            self.output[axis],
            self.stride[axis],
            self.pad[axis],
        );
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if inp + p > k {
            ((inp - 1 + p - k) / s + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// Walks every kernel tap against the input as contiguous output runs:
/// `f(tap, in_offset, out_position, run_len, in_stride)`. `tap` indexes
/// `(ci, kd, kh, kw)` row-major and `out_position` the flat output volume.
#[inline]
fn for_each_tap_run(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let [_, ih, iw] = g.input;
    let [_, oh, ow] = g.output;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let in_plane = ih * iw;
    let out_plane = oh * ow;
    let in_vol = g.in_volume();
    let mut tap = 0;
    for ci in 0..g.cin {
        for a in 0..kd {
            let (dlo, dhi) = g.valid(0, a);
            for b in 0..kh {
                let (hlo, hhi) = g.valid(1, b);
                for c in 0..kw {
                    let (wlo, whi) = g.valid(2, c);
                    if wlo < whi {
                        for od in dlo..dhi {
                            let id = od * sd + a - pd;
                            for oh_ in hlo..hhi {
                                let ih_ = oh_ * sh + b - ph;
                                let xin = ci * in_vol + id * in_plane + ih_ * iw + wlo * sw + c - pw;
                                f(tap, xin, od * out_plane + oh_ * ow + wlo, whi - wlo, sw);
                            }
                        }
                    }
                    tap += 1;
                }
            }
        }
    }
}

/// Unfolded input: row `tap` holds the input value each output position
/// reads through that tap (zero where it falls in the padding).
fn im2col<T: Real>(g: &ConvGeom, x: &[T]) -> Vec<f64> {
    let p = g.out_volume();
    let mut col = vec![0f64; g.cin * g.kernel_volume() * p];
    for_each_tap_run(g, |tap, xi, pos, n, sw| {
        let row = &mut col[tap * p + pos..tap * p + pos + n];
        for (j, o) in row.iter_mut().enumerate() {
            *o = x[xi + j * sw].to_f64();
        }
    });
    col
}

#[inline]
fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in acc.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Dot product with four interleaved partial sums (fixed order).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn widen<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64()).collect()
}

pub(crate) fn forward<T: Real>(g: &ConvGeom, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let p = g.out_volume();
    let k = g.cin * g.kernel_volume();
    let col = im2col(g, x);
    let mut out = Vec::with_capacity(g.cout * p);
    let mut acc = vec![0f64; p];
    for co in 0..g.cout {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (t, wv) in w[co * k..(co + 1) * k].iter().enumerate() {
            axpy(&mut acc, wv.to_f64(), &col[t * p..(t + 1) * p]);
        }
        let bv = bias.map_or(0.0, |b| b[co].to_f64());
        out.extend(acc.iter().map(|v| T::from_f64(v + bv)));
    }
    out
}

/// Gradient of the convolution with respect to its input.
pub(crate) fn backward_data<T: Real>(g: &ConvGeom, dy: &[T], w: &[T]) -> Vec<T> {
    let p = g.out_volume();
    let k = g.cin * g.kernel_volume();
    let dy = widen(dy);
    let mut dcol = vec![0f64; k * p];
    for (t, row) in dcol.chunks_mut(p).enumerate() {
        for co in 0..g.cout {
            axpy(row, w[co * k + t].to_f64(), &dy[co * p..(co + 1) * p]);
        }
    }
    let mut acc = vec![0f64; g.cin * g.in_volume()];
    for_each_tap_run(g, |tap, xi, pos, n, sw| {
        let row = &dcol[tap * p + pos..tap * p + pos + n];
        for (j, v) in row.iter().enumerate() {
            acc[xi + j * sw] += v;
        }
    });
    acc.into_iter().map(T::from_f64).collect()
}

/// Gradient of the convolution with respect to its weights.
pub(crate) fn backward_weight<T: Real>(g: &ConvGeom, dy: &[T], x: &[T]) -> Vec<T> {
    let p = g.out_volume();
    let k = g.cin * g.kernel_volume();
    let col = im2col(g, x);
    let dy = widen(dy);
    let mut out = Vec::with_capacity(g.weight_len());
    for co in 0..g.cout {
        let gy = &dy[co * p..(co + 1) * p];
        out.extend((0..k).map(|t| T::from_f64(dot(gy, &col[t * p..(t + 1) * p]))));
    }
    out
}

/// Gradient with respect to the per-output-channel bias.
pub(crate) fn backward_bias<T: Real>(channels: usize, dy: &[T]) -> Vec<T> {
    let per = dy.len() / channels;
    dy.chunks(per)
        .map(|c| T::from_f64(c.iter().map(|v| v.to_f64()).sum()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_len_formula() {
        assert_eq!(conv_output_len(28, 3, 1, 1), Some(28));
        assert_eq!(conv_output_len(28, 3, 2, 1), Some(14));
        assert_eq!(conv_output_len(2, 3, 1, 0), None);
        assert_eq!(conv_transpose_output_len(7, 4, 2, 1), Some(14));
        assert_eq!(conv_transpose_output_len(14, 4, 2, 1), Some(28));
    }

    #[test]
    fn valid_range_matches_bruteforce() {
        for inp in 1..7 {
            for k in 1..=inp + 2 {
                for s in 1..4 {
                    for p in 0..3 {
                        let Ok(g) = ConvGeom::new("t", 1, 1, [1, 1, inp], [1, 1, k], [1, 1, s], [0, 0, p])
                        else {
                            continue;
                        };
                        for tap in 0..k {
                            let (lo, hi) = g.valid(2, tap);
                            let want: Vec<usize> = (0..g.output[2])
                                .filter(|&o| {
                                    let i = (o * s + tap) as isize - p as isize;
                                    i >= 0 && (i as usize) < inp
                                })
                                .collect();
                            let got: Vec<usize> = (lo..hi).collect();
                            assert_eq!(got, want, "inp={inp} k={k} s={s} p={p} tap={tap}");
                        }
                    }
                }
            }
        }
    }
}

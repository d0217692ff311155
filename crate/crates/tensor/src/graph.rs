use std::sync::Arc;

use crate::conv::{self, ConvGeom};
use crate::{Real, Result, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Scale(Var, f64),
    Concat(Var, Var),
    SelectDepth {
        x: Var,
        index: usize,
        depth: usize,
    },
    Reshape(Var),
    Narrow {
        x: Var,
        start: usize,
    },
    Linear {
        w: Var,
        x: Var,
        b: Option<Var>,
    },
    GaussianLogits {
        mu: Var,
        sigma: f64,
    },
    Nll {
        logits: Var,
        target: usize,
        smoothing: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op,
    requires_grad: bool,
}

/// Tape of tensor operations.
///
/// Nodes are appended in evaluation order, so the tape is already in a valid
/// topological order for the reverse sweep.
#[derive(Debug, Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradient buffers produced by [`Graph::backward`], one per leaf that
/// requires a gradient.
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn expect_rank(op: &'static str, t: &Tensor<impl Real>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn expect_dim(op: &'static str, dim: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(TensorError::ShapeMismatch {
            op,
            dim,
            expected,
            actual,
        });
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf backed by a shared buffer, so parameters need not be copied into
    /// every graph.
    pub fn leaf_shared(&mut self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// 2D convolution of a `[Cin, H, W]` input with a `[Cout, Cin, kH, kW]`
    /// kernel and zero padding.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        const OP: &str = "conv2d";
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        expect_rank(OP, self.value(x), 3)?;
        expect_rank(OP, self.value(w), 4)?;
        expect_dim(OP, "input channels", ws[1], xs[0])?;
        let geom = ConvGeom::new(
            OP,
            xs[0],
            ws[0],
            [1, xs[1], xs[2]],
            [1, ws[2], ws[3]],
            [1, stride, stride],
            [0, padding, padding],
        )?;
        self.conv_node(OP, x, w, b, geom, vec![geom.cout, geom.output[1], geom.output[2]])
    }

    /// 3D convolution of a `[C, D, H, W]` input with a `[Cout, C, kD, kH, kW]`
    /// kernel. Stride and padding are given per (depth, height, width).
    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Var> {
        const OP: &str = "conv3d";
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        expect_rank(OP, self.value(x), 4)?;
        expect_rank(OP, self.value(w), 5)?;
        expect_dim(OP, "input channels", ws[1], xs[0])?;
        let geom = ConvGeom::new(
            OP,
            xs[0],
            ws[0],
            [xs[1], xs[2], xs[3]],
            [ws[2], ws[3], ws[4]],
            stride,
            padding,
        )?;
        let out = geom.output;
        self.conv_node(OP, x, w, b, geom, vec![geom.cout, out[0], out[1], out[2]])
    }

    fn conv_node(
        &mut self,
        op: &'static str,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        shape: Vec<usize>,
    ) -> Result<Var> {
        if let Some(b) = b {
            expect_dim(op, "bias", geom.cout, self.value(b).len())?;
        }
        let data = conv::forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Conv { x, w, b, geom }, rg))
    }

    /// Transposed 2D convolution of a `[Cin, H, W]` input with a
    /// `[Cin, Cout, kH, kW]` kernel. Output extent is
    /// `(in - 1) * stride - 2 * padding + k` per spatial axis.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        expect_rank(OP, self.value(x), 3)?;
        expect_rank(OP, self.value(w), 4)?;
        expect_dim(OP, "input channels", ws[0], xs[0])?;
        let geom = ConvGeom::for_transpose(
            OP,
            xs[0],
            ws[1],
            [1, xs[1], xs[2]],
            [1, ws[2], ws[3]],
            [1, stride, stride],
            [0, padding, padding],
        )?;
        // In adjoint terms the transposed op's output channels are geom.cin.
        let cout = geom.cin;
        if let Some(b) = b {
            expect_dim(OP, "bias", cout, self.value(b).len())?;
        }
        let mut data = conv::backward_data(&geom, self.value(x).data(), self.value(w).data());
        if let Some(b) = b {
            let per = geom.in_volume();
            let bias = self.value(b).data();
            for (c, chunk) in data.chunks_mut(per).enumerate() {
                let bv = bias[c].to_f64();
                chunk
                    .iter_mut()
                    .for_each(|v| *v = T::from_f64(v.to_f64() + bv));
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![cout, geom.input[1], geom.input[2]], data)?;
        Ok(self.push(value, Op::ConvTranspose { x, w, b, geom }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > T::ZERO { a } else { T::ZERO });
        let rg = self.rg(x);
        self.push(v, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| T::from_f64(sigmoid(a.to_f64())));
        let rg = self.rg(x);
        self.push(v, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| T::from_f64(a.to_f64().tanh()));
        let rg = self.rg(x);
        self.push(v, Op::Tanh(x), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::InvalidArgument {
                op,
                msg: format!("operand shapes differ: {sa:?} vs {sb:?}"),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.to_f64()).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(x), rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x).map(|a| T::from_f64(a.to_f64() * factor));
        let rg = self.rg(x);
        self.push(v, Op::Scale(x, factor), rg)
    }

    /// Stacks two tensors along their leading (channel) axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        const OP: &str = "concat_channels";
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 0 || ta.rank() != tb.rank() || ta.shape()[1..] != tb.shape()[1..] {
            return Err(TensorError::InvalidArgument {
                op: OP,
                msg: format!(
                    "non-channel extents differ: {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                ),
            });
        }
        let mut shape = ta.shape().to_vec();
        shape[0] += tb.shape()[0];
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let v = Tensor::new(shape, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Concat(a, b), rg))
    }

    /// Picks one depth slice of a `[C, D, H, W]` tensor, giving `[C, H, W]`.
    pub fn select_depth(&mut self, x: Var, index: usize) -> Result<Var> {
        const OP: &str = "select_depth";
        let t = self.value(x);
        expect_rank(OP, t, 4)?;
        let [c, d, h, w] = [t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]];
        if index >= d {
            return Err(TensorError::InvalidArgument {
                op: OP,
                msg: format!("index {index} outside depth {d}"),
            });
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(c * plane);
        for ch in 0..c {
            let start = (ch * d + index) * plane;
            data.extend_from_slice(&t.data()[start..start + plane]);
        }
        let v = Tensor::new(vec![c, h, w], data)?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::SelectDepth { x, index, depth: d }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    /// Contiguous slice `[start, start + len)` of the flattened tensor.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if len == 0 || start + len > t.len() {
            return Err(TensorError::InvalidArgument {
                op: "narrow",
                msg: format!("range {start}..{} outside {} values", start + len, t.len()),
            });
        }
        let v = Tensor::new(vec![len], t.data()[start..start + len].to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Narrow { x, start }, rg))
    }

    /// Affine map `w · x + b` with `w: [out, in]`, `x: [in]`.
    pub fn linear(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        const OP: &str = "linear";
        let (tw, tx) = (self.value(w), self.value(x));
        expect_rank(OP, tw, 2)?;
        let (rows, cols) = (tw.shape()[0], tw.shape()[1]);
        expect_dim(OP, "input features", cols, tx.len())?;
        if let Some(b) = b {
            expect_dim(OP, "bias", rows, self.value(b).len())?;
        }
        let xd = tx.data();
        let mut data: Vec<T> = tw
            .data()
            .chunks(cols)
            .map(|row| {
                T::from_f64(row.iter().zip(xd).map(|(a, b)| a.to_f64() * b.to_f64()).sum())
            })
            .collect();
        if let Some(b) = b {
            for (o, bv) in data.iter_mut().zip(self.value(b).data()) {
                *o = T::from_f64(o.to_f64() + bv.to_f64());
            }
        }
        let v = Tensor::new(vec![rows], data)?;
        let rg = self.rg(w) || self.rg(x) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(v, Op::Linear { w, x, b }, rg))
    }

    /// Logits of an isotropic Gaussian centred at `mu = (row, col)` evaluated
    /// at every cell centre of a `rows × cols` grid:
    /// `-((r - mu_r)^2 + (c - mu_c)^2) / (2 sigma^2)`.
    pub fn gaussian_logits(&mut self, mu: Var, rows: usize, cols: usize, sigma: f64) -> Result<Var> {
        const OP: &str = "gaussian_logits";
        let m = self.value(mu);
        expect_dim(OP, "mean", 2, m.len())?;
        if !(sigma > 0.0 && sigma.is_finite()) || rows == 0 || cols == 0 {
            return Err(TensorError::InvalidArgument {
                op: OP,
                msg: format!("need sigma > 0 and a non-empty grid, got sigma={sigma}"),
            });
        }
        if !m.all_finite() {
            return Err(TensorError::NonFinite { op: OP });
        }
        let (mr, mc) = (m.data()[0].to_f64(), m.data()[1].to_f64());
        let inv = 1.0 / (2.0 * sigma * sigma);
        let v = Tensor::from_fn(&[rows, cols], |i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            T::from_f64(-((r - mr).powi(2) + (c - mc).powi(2)) * inv)
        });
        let rg = self.rg(mu);
        Ok(self.push(v, Op::GaussianLogits { mu, sigma }, rg))
    }

    /// Negative log-likelihood of flat cell `target` under the softmax of
    /// `logits`, optionally mixed with the uniform distribution:
    /// `-log((1 - smoothing) * softmax(logits)[target] + smoothing / N)`.
    ///
    /// Computed with the max-shifted log-sum-exp in `f64`.
    pub fn nll(&mut self, logits: Var, target: usize, smoothing: f64) -> Result<Var> {
        const OP: &str = "nll";
        let t = self.value(logits);
        let n = t.len();
        if target >= n {
            return Err(TensorError::InvalidArgument {
                op: OP,
                msg: format!("target {target} outside {n} cells"),
            });
        }
        if !(0.0..=1.0).contains(&smoothing) {
            return Err(TensorError::InvalidArgument {
                op: OP,
                msg: format!("smoothing {smoothing} outside [0, 1]"),
            });
        }
        if !t.all_finite() {
            return Err(TensorError::NonFinite { op: OP });
        }
        let probs = softmax_f64(t.data());
        let loss = if smoothing == 0.0 {
            let m = t.data().iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + t.data().iter().map(|v| (v.to_f64() - m).exp()).sum::<f64>().ln();
            lse - t.data()[target].to_f64()
        } else {
            -((1.0 - smoothing) * probs[target] + smoothing / n as f64).ln()
        };
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(T::from_f64(loss)),
            Op::Nll {
                logits,
                target,
                smoothing,
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &gy, &mut grads);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (g, &node.op) {
                (Some(g), Op::Leaf) if node.requires_grad => {
                    Some(Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contrib: Vec<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&self, node: &Node<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.value(v).data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geom } => {
                if self.rg(*x) {
                    self.accumulate(grads, *x, conv::backward_data(geom, gy, val(*w)));
                }
                if self.rg(*w) {
                    self.accumulate(grads, *w, conv::backward_weight(geom, gy, val(*x)));
                }
                if let Some(b) = b {
                    self.accumulate(grads, *b, conv::backward_bias(geom.cout, gy));
                }
            }
            Op::ConvTranspose { x, w, b, geom } => {
                if self.rg(*x) {
                    self.accumulate(grads, *x, conv::forward(geom, gy, val(*w), None));
                }
                if self.rg(*w) {
                    self.accumulate(grads, *w, conv::backward_weight(geom, val(*x), gy));
                }
                if let Some(b) = b {
                    self.accumulate(grads, *b, conv::backward_bias(geom.cin, gy));
                }
            }
            Op::Relu(x) => {
                let d = val(*x)
                    .iter()
                    .zip(gy)
                    .map(|(&a, &g)| if a > T::ZERO { g } else { T::ZERO })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let d = node
                    .value
                    .data()
                    .iter()
                    .zip(gy)
                    .map(|(&s, &g)| {
                        let s = s.to_f64();
                        T::from_f64(g.to_f64() * s * (1.0 - s))
                    })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = node
                    .value
                    .data()
                    .iter()
                    .zip(gy)
                    .map(|(&t, &g)| {
                        let t = t.to_f64();
                        T::from_f64(g.to_f64() * (1.0 - t * t))
                    })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.to_vec());
                self.accumulate(grads, *b, gy.to_vec());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, gy.iter().zip(vb).map(|(&g, &y)| g * y).collect());
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, gy.iter().zip(va).map(|(&g, &x)| g * x).collect());
                }
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, vec![gy[0]; self.value(*x).len()]);
            }
            Op::Scale(x, f) => {
                let d = gy.iter().map(|g| T::from_f64(g.to_f64() * f)).collect();
                self.accumulate(grads, *x, d);
            }
            Op::Concat(a, b) => {
                let na = self.value(*a).len();
                self.accumulate(grads, *a, gy[..na].to_vec());
                self.accumulate(grads, *b, gy[na..].to_vec());
            }
            Op::SelectDepth { x, index, depth } => {
                if self.rg(*x) {
                    let s = self.value(*x).shape();
                    let plane = s[2] * s[3];
                    let mut d = vec![T::ZERO; self.value(*x).len()];
                    for (ch, g) in gy.chunks(plane).enumerate() {
                        let start = (ch * depth + index) * plane;
                        d[start..start + plane].copy_from_slice(g);
                    }
                    self.accumulate(grads, *x, d);
                }
            }
            Op::Reshape(x) => self.accumulate(grads, *x, gy.to_vec()),
            Op::Narrow { x, start } => {
                if self.rg(*x) {
                    let mut d = vec![T::ZERO; self.value(*x).len()];
                    d[*start..*start + gy.len()].copy_from_slice(gy);
                    self.accumulate(grads, *x, d);
                }
            }
            Op::Linear { w, x, b } => {
                let (tw, tx) = (self.value(*w), self.value(*x));
                let cols = tw.shape()[1];
                if self.rg(*w) {
                    let d = gy
                        .iter()
                        .flat_map(|&g| tx.data().iter().map(move |&xv| g * xv))
                        .collect();
                    self.accumulate(grads, *w, d);
                }
                if self.rg(*x) {
                    let mut d = vec![0f64; cols];
                    for (row, &g) in tw.data().chunks(cols).zip(gy) {
                        let g = g.to_f64();
                        d.iter_mut().zip(row).for_each(|(o, a)| *o += g * a.to_f64());
                    }
                    self.accumulate(grads, *x, d.into_iter().map(T::from_f64).collect());
                }
                if let Some(b) = b {
                    self.accumulate(grads, *b, gy.to_vec());
                }
            }
            Op::GaussianLogits { mu, sigma } => {
                let m = val(*mu);
                let (mr, mc) = (m[0].to_f64(), m[1].to_f64());
                let cols = node.value.shape()[1];
                let inv = 1.0 / (sigma * sigma);
                let (mut dr, mut dc) = (0f64, 0f64);
                for (i, g) in gy.iter().enumerate() {
                    let g = g.to_f64();
                    dr += g * ((i / cols) as f64 - mr) * inv;
                    dc += g * ((i % cols) as f64 - mc) * inv;
                }
                self.accumulate(grads, *mu, vec![T::from_f64(dr), T::from_f64(dc)]);
            }
            Op::Nll {
                logits,
                target,
                smoothing,
                probs,
            } => {
                let g = gy[0].to_f64();
                let n = probs.len() as f64;
                let pt = probs[*target];
                let q = (1.0 - smoothing) * pt + smoothing / n;
                // d(-log q)/dl_j = -(1 - s) p_t (delta_jt - p_j) / q
                let coef = g * (1.0 - smoothing) * pt / q;
                let d = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let delta = if j == *target { 1.0 } else { 0.0 };
                        T::from_f64(coef * (p - delta))
                    })
                    .collect();
                self.accumulate(grads, *logits, d);
            }
        }
    }
}

/// Max-shifted softmax of a flat logit vector, in `f64`.
pub(crate) fn softmax_f64<T: Real>(logits: &[T]) -> Vec<f64> {
    let m = logits.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v.to_f64() - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv2d_same_padding_shape() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 28, 28]), false);
        let w = g.leaf(Tensor::from_fn(&[8, 1, 3, 3], |i| i as f64), false);
        let b = g.leaf(Tensor::zeros(&[8]), false);
        let y = g.conv2d(x, w, Some(b), 1, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[8, 28, 28]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_ones_sum() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[1, 3, 3], &[1.0; 9]), false);
        let w = g.leaf(t(&[1, 1, 3, 3], &[1.0; 9]), false);
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1]);
        assert_eq!(g.value(y).data(), &[9.0]);
    }

    #[test]
    fn conv2d_reports_offending_dimension() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[2, 5, 5]), false);
        let w = g.leaf(Tensor::zeros(&[1, 3, 3, 3]), false);
        let err = g.conv2d(x, w, None, 1, 0).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { dim: "input channels", .. }));

        let w = g.leaf(Tensor::zeros(&[1, 2, 7, 3]), false);
        let err = g.conv2d(x, w, None, 1, 0).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { dim: "height", .. }), "{err}");
    }

    #[test]
    fn conv3d_depth_collapse() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 10, 6, 6]), false);
        let w = g.leaf(Tensor::zeros(&[2, 1, 4, 3, 3]), false);
        let y = g.conv3d(x, w, None, [1, 1, 1], [0, 1, 1]).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 7, 6, 6]);

        let x = g.leaf(t(&[1, 2, 2, 2], &[1.0; 8]), false);
        let w = g.leaf(t(&[1, 1, 2, 2, 2], &[1.0; 8]), false);
        let y = g.conv3d(x, w, None, [1, 1, 1], [0, 0, 0]).unwrap();
        assert_eq!(g.value(y).data(), &[8.0]);
    }

    #[test]
    fn conv_transpose_shapes_and_expansion() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[3, 7, 7]), false);
        let w = g.leaf(Tensor::zeros(&[3, 2, 4, 4]), false);
        let y = g.conv_transpose2d(x, w, None, 2, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 14, 14]);
        let y2w = g.leaf(Tensor::zeros(&[2, 1, 4, 4]), false);
        let y2 = g.conv_transpose2d(y, y2w, None, 2, 1).unwrap();
        assert_eq!(g.value(y2).shape(), &[1, 28, 28]);

        let x = g.leaf(t(&[1, 1, 1], &[2.5]), false);
        let w = g.leaf(t(&[1, 1, 2, 2], &[1.0; 4]), false);
        let y = g.conv_transpose2d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 2]);
        assert_eq!(g.value(y).data(), &[2.5; 4]);
    }

    #[test]
    fn relu_values_and_subgradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[3], &[-1.0, 0.0, 2.0]), true);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_stacks_channels() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::zeros(&[8, 7, 7]), false);
        let b = g.leaf(Tensor::zeros(&[8, 7, 7]), false);
        let c = g.concat_channels(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[16, 7, 7]);
        let d = g.leaf(Tensor::zeros(&[8, 6, 7]), false);
        assert!(g.concat_channels(a, d).is_err());
    }

    #[test]
    fn nll_uniform_and_gradient() {
        let mut g = Graph::<f64>::new();
        let l = g.leaf(Tensor::zeros(&[28, 28]), true);
        let loss = g.nll(l, 5, 0.0).unwrap();
        assert!((g.value(loss).data()[0] - 784f64.ln()).abs() < 1e-12);
        let gr = g.backward(loss).unwrap();
        let d = gr.get(l).unwrap().data();
        assert!((d[5] - (1.0 / 784.0 - 1.0)).abs() < 1e-12);
        assert!((d[0] - 1.0 / 784.0).abs() < 1e-12);
    }

    #[test]
    fn nll_rejects_bad_inputs() {
        let mut g = Graph::<f64>::new();
        let l = g.leaf(Tensor::zeros(&[2, 2]), true);
        assert!(g.nll(l, 4, 0.0).is_err());
        let bad = g.leaf(t(&[2], &[0.0, f64::NAN]), true);
        assert!(matches!(g.nll(bad, 0, 0.0), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[3]), true);
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.get(x).unwrap().data(), &[1.0, -2.0, 4.0, 0.0]);
    }

    #[test]
    fn frozen_inputs_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[1, 3, 3], &[1.0; 9]), false);
        let w = g.leaf(t(&[1, 1, 3, 3], &[1.0; 9]), true);
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        let s = g.sum(y);
        let gr = g.backward(s).unwrap();
        assert!(gr.get(x).is_none());
        assert_eq!(gr.get(w).unwrap().data(), &[1.0; 9]);
    }
}

//! Central finite-difference oracle for validating reverse-mode gradients.

use crate::{Graph, Result, Tensor, Var};

/// Relative error `‖a - b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-6)`.
///
/// The floor keeps genuinely vanishing gradients (for example a bias feeding
/// a softmax, which is shift invariant) from turning round-off into a large
/// ratio.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-6)
}

/// Compares the reverse-mode gradient of the scalar built by `f` against
/// central differences with step `eps`, for every input that requires a
/// gradient. Returns the largest per-input relative error.
pub fn gradient_check<F>(inputs: &[(Tensor<f64>, bool)], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals
            .iter()
            .zip(inputs)
            .map(|(t, (_, rg))| g.leaf(t.clone(), *rg))
            .collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|(t, rg)| g.leaf(t.clone(), *rg)).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0f64;
    let mut vals: Vec<Tensor<f64>> = inputs.iter().map(|(t, _)| t.clone()).collect();
    for (k, (t, rg)) in inputs.iter().enumerate() {
        if !*rg {
            continue;
        }
        let analytic = grads
            .get(vars[k])
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; t.len()]);
        let mut numeric = vec![0.0; t.len()];
        for i in 0..t.len() {
            let orig = vals[k].data()[i];
            vals[k].data_mut()[i] = orig + eps;
            let up = eval(&vals)?;
            vals[k].data_mut()[i] = orig - eps;
            let down = eval(&vals)?;
            vals[k].data_mut()[i] = orig;
            numeric[i] = (up - down) / (2.0 * eps);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Worst relative gradient error seen for one op over a batch of random
/// instances.
#[derive(Clone, Debug)]
pub struct OpReport {
    pub op: &'static str,
    pub trials: usize,
    pub worst: f64,
}

type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

struct Case {
    inputs: Vec<(Tensor<f64>, bool)>,
    build: Builder,
}

fn rand_tensor(rng: &mut impl rand::Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero so that kinks are never straddled by ±eps.
fn rand_away(rng: &mut impl rand::Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Contracts `y` with a fixed random tensor so any output becomes a scalar.
fn contract(g: &mut Graph<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let rv = g.leaf(r.clone(), false);
    let p = g.mul(y, rv)?;
    Ok(g.sum(p))
}

fn weights_for(rng: &mut impl rand::Rng, n: usize) -> Tensor<f64> {
    rand_tensor(rng, &[n])
}

fn conv2d_case(rng: &mut impl rand::Rng) -> Case {
    let cin = rng.gen_range(1..=2);
    let cout = rng.gen_range(1..=3);
    let (h, w) = (rng.gen_range(3..=5), rng.gen_range(3..=5));
    let k = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=2);
    let pad = rng.gen_range(0..=1);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let r = rand_tensor(rng, &[cout, oh, ow]);
    Case {
        inputs: vec![
            (rand_tensor(rng, &[cin, h, w]), true),
            (rand_tensor(rng, &[cout, cin, k, k]), true),
            (rand_tensor(rng, &[cout]), true),
        ],
        build: Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            contract(g, y, &r)
        }),
    }
}

fn conv3d_case(rng: &mut impl rand::Rng) -> Case {
    let cin = rng.gen_range(1..=2);
    let cout = rng.gen_range(1..=2);
    let d = rng.gen_range(2..=4);
    let (h, w) = (rng.gen_range(2..=3), rng.gen_range(2..=3));
    let kd = rng.gen_range(1..=d);
    let k = rng.gen_range(1..=2);
    let stride = [rng.gen_range(1..=2), 1, rng.gen_range(1..=2)];
    let pad = [0, rng.gen_range(0..=1), rng.gen_range(0..=1)];
    let out = [
        (d + 2 * pad[0] - kd) / stride[0] + 1,
        (h + 2 * pad[1] - k) / stride[1] + 1,
        (w + 2 * pad[2] - k) / stride[2] + 1,
    ];
    let r = rand_tensor(rng, &[cout, out[0], out[1], out[2]]);
    Case {
        inputs: vec![
            (rand_tensor(rng, &[cin, d, h, w]), true),
            (rand_tensor(rng, &[cout, cin, kd, k, k]), true),
            (rand_tensor(rng, &[cout]), true),
        ],
        build: Box::new(move |g, v| {
            let y = g.conv3d(v[0], v[1], Some(v[2]), stride, pad)?;
            contract(g, y, &r)
        }),
    }
}

fn conv_transpose_case(rng: &mut impl rand::Rng) -> Case {
    loop {
        let cin = rng.gen_range(1..=2);
        let cout = rng.gen_range(1..=2);
        let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let k = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=1);
        let (Some(oh), Some(ow)) = (
            crate::conv_transpose_output_len(h, k, stride, pad),
            crate::conv_transpose_output_len(w, k, stride, pad),
        ) else {
            continue;
        };
        let r = rand_tensor(rng, &[cout, oh, ow]);
        return Case {
            inputs: vec![
                (rand_tensor(rng, &[cin, h, w]), true),
                (rand_tensor(rng, &[cin, cout, k, k]), true),
                (rand_tensor(rng, &[cout]), true),
            ],
            build: Box::new(move |g, v| {
                let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), stride, pad)?;
                contract(g, y, &r)
            }),
        };
    }
}

fn unary_case(rng: &mut impl rand::Rng, op: fn(&mut Graph<f64>, Var) -> Var) -> Case {
    let n = rng.gen_range(1..=64);
    let r = weights_for(rng, n);
    Case {
        inputs: vec![(rand_away(rng, &[n]), true)],
        build: Box::new(move |g, v| {
            let y = op(g, v[0]);
            contract(g, y, &r)
        }),
    }
}

fn binary_case(
    rng: &mut impl rand::Rng,
    op: fn(&mut Graph<f64>, Var, Var) -> Result<Var>,
) -> Case {
    let n = rng.gen_range(1..=32);
    let r = weights_for(rng, n);
    Case {
        inputs: vec![(rand_tensor(rng, &[n]), true), (rand_tensor(rng, &[n]), true)],
        build: Box::new(move |g, v| {
            let y = op(g, v[0], v[1])?;
            contract(g, y, &r)
        }),
    }
}

fn scale_sum_case(rng: &mut impl rand::Rng) -> Case {
    let n = rng.gen_range(1..=64);
    let f: f64 = rng.gen_range(-3.0..3.0);
    Case {
        inputs: vec![(rand_tensor(rng, &[n]), true)],
        build: Box::new(move |g, v| {
            let s = g.scale(v[0], f);
            let sq = g.mul(s, s)?;
            Ok(g.sum(sq))
        }),
    }
}

fn concat_case(rng: &mut impl rand::Rng) -> Case {
    let (ca, cb) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let r = rand_tensor(rng, &[ca + cb, h, w]);
    Case {
        inputs: vec![
            (rand_tensor(rng, &[ca, h, w]), true),
            (rand_tensor(rng, &[cb, h, w]), true),
        ],
        build: Box::new(move |g, v| {
            let y = g.concat_channels(v[0], v[1])?;
            contract(g, y, &r)
        }),
    }
}

fn select_reshape_narrow_case(rng: &mut impl rand::Rng) -> Case {
    let (c, d, h, w) = (
        rng.gen_range(1..=2),
        rng.gen_range(1..=4),
        rng.gen_range(1..=3),
        rng.gen_range(1..=3),
    );
    let idx = rng.gen_range(0..d);
    let n = c * h * w;
    let start = rng.gen_range(0..n);
    let len = rng.gen_range(1..=n - start);
    let r = weights_for(rng, len);
    Case {
        inputs: vec![(rand_tensor(rng, &[c, d, h, w]), true)],
        build: Box::new(move |g, v| {
            let s = g.select_depth(v[0], idx)?;
            let flat = g.reshape(s, &[n])?;
            let y = g.narrow(flat, start, len)?;
            contract(g, y, &r)
        }),
    }
}

fn linear_case(rng: &mut impl rand::Rng) -> Case {
    let (rows, cols) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
    let r = weights_for(rng, rows);
    Case {
        inputs: vec![
            (rand_tensor(rng, &[rows, cols]), true),
            (rand_tensor(rng, &[cols]), true),
            (rand_tensor(rng, &[rows]), true),
        ],
        build: Box::new(move |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]))?;
            contract(g, y, &r)
        }),
    }
}

fn gaussian_nll_case(rng: &mut impl rand::Rng) -> Case {
    let (rows, cols) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
    let sigma = rng.gen_range(0.7..3.0);
    let smoothing = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.001..0.5) };
    let target = rng.gen_range(0..rows * cols);
    let mu = Tensor::new(
        vec![2],
        vec![rng.gen_range(0.0..rows as f64), rng.gen_range(0.0..cols as f64)],
    )
    .expect("shape");
    Case {
        inputs: vec![(mu, true)],
        build: Box::new(move |g, v| {
            let l = g.gaussian_logits(v[0], rows, cols, sigma)?;
            g.nll(l, target, smoothing)
        }),
    }
}

fn nll_case(rng: &mut impl rand::Rng) -> Case {
    let (h, w) = (rng.gen_range(1..=8), rng.gen_range(2..=8));
    let target = rng.gen_range(0..h * w);
    let smoothing = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.001..0.9) };
    Case {
        inputs: vec![(Tensor::from_fn(&[h, w], |_| rng.gen_range(-3.0..3.0)), true)],
        build: Box::new(move |g, v| g.nll(v[0], target, smoothing)),
    }
}

/// conv2d → relu → conv_transpose2d → nll, with pre-activations kept away
/// from the relu kink.
fn chain_case(rng: &mut impl rand::Rng) -> Case {
    loop {
        let x = rand_tensor(rng, &[1, 4, 4]);
        let w1 = rand_tensor(rng, &[2, 1, 3, 3]);
        let b1 = rand_tensor(rng, &[2]);
        let w2 = rand_tensor(rng, &[2, 1, 4, 4]);
        let b2 = rand_tensor(rng, &[1]);
        let target = rng.gen_range(0..16);
        let mut probe = Graph::new();
        let (xv, w1v, b1v) = (
            probe.leaf(x.clone(), false),
            probe.leaf(w1.clone(), false),
            probe.leaf(b1.clone(), false),
        );
        let Ok(pre) = probe.conv2d(xv, w1v, Some(b1v), 2, 1) else {
            continue;
        };
        if probe.value(pre).data().iter().any(|v| v.abs() < 1e-2) {
            continue;
        }
        return Case {
            inputs: vec![(x, true), (w1, true), (b1, true), (w2, true), (b2, true)],
            build: Box::new(move |g, v| {
                let h = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
                let a = g.relu(h);
                let up = g.conv_transpose2d(a, v[3], Some(v[4]), 2, 1)?;
                let l = g.reshape(up, &[4, 4])?;
                g.nll(l, target, 0.0)
            }),
        };
    }
}

/// Runs `trials` random instances of every differentiable op (and one
/// composite chain) through [`gradient_check`].
pub fn op_suite(trials: usize, seed: u64, eps: f64) -> Result<Vec<OpReport>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    type Gen = fn(&mut rand_chacha::ChaCha8Rng) -> Case;
    let gens: Vec<(&'static str, Gen)> = vec![
        ("conv2d", |r| conv2d_case(r)),
        ("conv3d", |r| conv3d_case(r)),
        ("conv_transpose2d", |r| conv_transpose_case(r)),
        ("relu", |r| unary_case(r, |g, x| g.relu(x))),
        ("sigmoid", |r| unary_case(r, |g, x| g.sigmoid(x))),
        ("tanh", |r| unary_case(r, |g, x| g.tanh(x))),
        ("add", |r| binary_case(r, |g, a, b| g.add(a, b))),
        ("mul", |r| binary_case(r, |g, a, b| g.mul(a, b))),
        ("scale+sum", |r| scale_sum_case(r)),
        ("concat_channels", |r| concat_case(r)),
        ("select_depth+reshape+narrow", |r| select_reshape_narrow_case(r)),
        ("linear", |r| linear_case(r)),
        ("gaussian_logits+nll", |r| gaussian_nll_case(r)),
        ("nll", |r| nll_case(r)),
        ("conv-relu-convT-nll chain", |r| chain_case(r)),
    ];
    let mut out = Vec::new();
    for (op, gen) in gens {
        let mut worst = 0f64;
        for _ in 0..trials {
            let case = gen(&mut rng);
            worst = worst.max(gradient_check(&case.inputs, eps, &case.build)?);
        }
        out.push(OpReport { op, trials, worst });
    }
    Ok(out)
}

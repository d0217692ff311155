use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcnn_tensor::check::{gradient_check, op_suite};
use stcnn_tensor::{conv_output_len, conv_transpose_output_len, Graph, Tensor};

#[test]
fn every_op_matches_central_differences() {
    for r in op_suite(100, 11, 1e-4).unwrap() {
        assert!(r.worst < 1e-4, "{}: worst relative error {:.3e}", r.op, r.worst);
    }
}

#[test]
fn loss_sum_of_squares_gradient_is_twice_input() {
    let x = Tensor::new(vec![5], vec![0.1, -0.7, 2.0, 3.5, -1.25]).unwrap();
    let err = gradient_check(&[(x.clone(), true)], 1e-4, |g, v| {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.sum(sq))
    })
    .unwrap();
    assert!(err < 1e-8);

    let mut g = Graph::<f64>::new();
    let xv = g.leaf(x.clone(), true);
    let sq = g.mul(xv, xv).unwrap();
    let s = g.sum(sq);
    let grads = g.backward(s).unwrap();
    let want: Vec<f64> = x.data().iter().map(|v| 2.0 * v).collect();
    assert_eq!(grads.get(xv).unwrap().data(), want.as_slice());
}

fn inner(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.dot(b).unwrap()
}

#[test]
fn transpose_convolution_is_adjoint_of_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=3);
        let (h, w) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let k = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=3);
        let pad = rng.gen_range(0..=2);
        let (Some(oh), Some(ow)) = (
            conv_output_len(h, k, stride, pad),
            conv_output_len(w, k, stride, pad),
        ) else {
            continue;
        };
        // The transposed op only reproduces (h, w) when no rows are dropped
        // by the floor in the forward formula.
        if conv_transpose_output_len(oh, k, stride, pad) != Some(h)
            || conv_transpose_output_len(ow, k, stride, pad) != Some(w)
        {
            continue;
        }
        let x = Tensor::from_fn(&[cin, h, w], |_| rng.gen_range(-1.0..1.0));
        let kern = Tensor::from_fn(&[cout, cin, k, k], |_| rng.gen_range(-1.0..1.0));
        let y = Tensor::from_fn(&[cout, oh, ow], |_| rng.gen_range(-1.0..1.0));

        let mut g = Graph::<f64>::new();
        let (xv, kv, yv) = (g.leaf(x.clone(), false), g.leaf(kern, false), g.leaf(y.clone(), false));
        let cx = g.conv2d(xv, kv, None, stride, pad).unwrap();
        let cty = g.conv_transpose2d(yv, kv, None, stride, pad).unwrap();
        let lhs = inner(g.value(cx), &y);
        let rhs = inner(&x, g.value(cty));
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}

#[test]
fn output_shapes_follow_formulas() {
    for h in 1..=7 {
        for k in 1..=4 {
            for stride in 1..=3 {
                for pad in 0..=2 {
                    let mut g = Graph::<f64>::new();
                    let x = g.leaf(Tensor::zeros(&[2, h, h + 1]), false);
                    let w = g.leaf(Tensor::zeros(&[3, 2, k, k]), false);
                    let y = g.conv2d(x, w, None, stride, pad);
                    match (conv_output_len(h, k, stride, pad), conv_output_len(h + 1, k, stride, pad)) {
                        (Some(oh), Some(ow)) => {
                            assert_eq!(g.value(y.unwrap()).shape(), &[3, oh, ow]);
                            assert_eq!(oh, (h + 2 * pad - k) / stride + 1);
                        }
                        _ => assert!(y.is_err()),
                    }

                    let x3 = g.leaf(Tensor::zeros(&[1, h, h, 2]), false);
                    let w3 = g.leaf(Tensor::zeros(&[1, 1, k, k, 1]), false);
                    let y3 = g.conv3d(x3, w3, None, [stride, stride, 1], [0, pad, 0]);
                    match (conv_output_len(h, k, stride, 0), conv_output_len(h, k, stride, pad)) {
                        (Some(od), Some(oh)) => assert_eq!(g.value(y3.unwrap()).shape(), &[1, od, oh, 2]),
                        _ => assert!(y3.is_err()),
                    }

                    let xt = g.leaf(Tensor::zeros(&[2, h, h]), false);
                    let wt = g.leaf(Tensor::zeros(&[2, 1, k, k]), false);
                    let yt = g.conv_transpose2d(xt, wt, None, stride, pad);
                    match conv_transpose_output_len(h, k, stride, pad) {
                        Some(o) => {
                            assert_eq!(g.value(yt.unwrap()).shape(), &[1, o, o]);
                            assert_eq!(o, (h - 1) * stride + k - 2 * pad);
                        }
                        None => assert!(yt.is_err()),
                    }
                }
            }
        }
    }
}

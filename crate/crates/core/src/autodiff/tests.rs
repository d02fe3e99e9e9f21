use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::flops::FlopCounter;
use crate::tensor::Tensor;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::from_f64(shape.to_vec(), data).unwrap()
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape.to_vec(), -2.0, 2.0, &mut rng(seed))
}

/// Weighted sum so every output coordinate gets a distinct upstream gradient.
fn probe<'t>(y: Var<'t, f64>, seed: u64) -> crate::Result<Var<'t, f64>> {
    let w = y.tape().constant(rand_t(&y.shape(), seed));
    Ok(y.mul(&w)?.sum())
}

#[test]
fn matmul_examples() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::eye(2));
    let b = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
    assert_eq!(a.matmul(&b).unwrap().value().data(), &[1., 2., 3., 4.]);
    let p = tape.constant(t(&[2, 2], &[1., 0., 0., 0.]));
    let v = tape.constant(t(&[2, 1], &[5., 7.]));
    assert_eq!(p.matmul(&v).unwrap().value().data(), &[5., 0.]);
}

#[test]
fn matmul_matches_triple_loop() {
    let (a, b) = (rand_t(&[4, 3], 1), rand_t(&[3, 5], 2));
    let tape = Tape::new();
    let c = tape.constant(a.clone()).matmul(&tape.constant(b.clone())).unwrap().value();
    for i in 0..4 {
        for j in 0..5 {
            let mut s = 0.0;
            for k in 0..3 {
                s += a.at(&[i, k]) * b.at(&[k, j]);
            }
            assert!((c.at(&[i, j]) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let tape = Tape::new();
    let err = tape
        .constant(Tensor::<f64>::zeros([2, 3]))
        .matmul(&tape.constant(Tensor::zeros([4, 5])))
        .unwrap_err()
        .to_string();
    assert!(err.contains("[2, 3]") && err.contains("[4, 5]"), "{err}");
}

#[test]
fn matmul_flops_are_exact() {
    let c = FlopCounter;
    for &(m, k, n) in &[(1, 1, 1), (4, 3, 5), (7, 11, 2)] {
        let tape = Tape::new();
        let a = tape.constant(Tensor::<f64>::zeros([m, k]));
        let b = tape.constant(Tensor::zeros([k, n]));
        let (_, f) = c.measure(|| a.matmul(&b).unwrap());
        assert_eq!(f, (m * n * k) as u64);
    }
}

#[test]
fn softmax_examples() {
    let tape = Tape::new();
    let s = tape.constant(t(&[2], &[0., 0.])).softmax(0).unwrap().value();
    assert_eq!(s.data(), &[0.5, 0.5]);
    let s = tape.constant(t(&[1], &[3.7])).softmax(0).unwrap().value();
    assert_eq!(s.data(), &[1.0]);
    let s = tape.constant(t(&[3], &[1., 2., 3.])).softmax(0).unwrap().value();
    let z: f64 = [1f64, 2., 3.].iter().map(|v| v.exp()).sum();
    for (i, v) in [1f64, 2., 3.].iter().enumerate() {
        assert!((s.data()[i] - v.exp() / z).abs() < 1e-12);
    }
}

#[test]
fn softmax_rows_normalized_and_shift_invariant() {
    let x = rand_t(&[5, 7], 3);
    let tape = Tape::new();
    let y = tape.constant(x.clone()).softmax(1).unwrap().value();
    let shifted = tape.constant(x.map(|v| v + 123.25)).softmax(1).unwrap().value();
    for r in 0..5 {
        let s: f64 = y.row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(y.row(r).iter().all(|&v| v >= 0.0));
    }
    assert!(y.max_abs_diff(&shifted) < 1e-12);
    // axis 0 on a 3-D tensor
    let x = rand_t(&[3, 2, 4], 4);
    let y = tape.constant(x).softmax(0).unwrap().value();
    for i in 0..2 {
        for j in 0..4 {
            let s: f64 = (0..3).map(|c| y.at(&[c, i, j])).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn conv2d_examples() {
    let tape = Tape::new();
    let x = t(&[1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
    let y = tape
        .constant(x.clone())
        .conv2d(&tape.constant(Tensor::ones([1, 1, 1, 1])), None, 1, 0)
        .unwrap()
        .value();
    assert_eq!(*y, x);
    let y = tape
        .constant(Tensor::ones([1, 3, 3]))
        .conv2d(&tape.constant(Tensor::ones([1, 1, 3, 3])), None, 1, 0)
        .unwrap()
        .value();
    assert_eq!(y.shape(), &[1, 1, 1]);
    assert_eq!(y.data(), &[9.0]);
}

fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros([co, ho, wo]);
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = b.data()[o];
                for c in 0..ci {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                s += x.at(&[c, iy as usize, ix as usize]) * w.at(&[o, c, ky, kx]);
                            }
                        }
                    }
                }
                out.set(&[o, oy, ox], s);
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_direct_loops() {
    let x = rand_t(&[2, 5, 5], 5);
    let w = rand_t(&[3, 2, 3, 3], 6);
    let b = rand_t(&[3], 7);
    for &(stride, pad) in &[(1, 0), (1, 1), (2, 1), (2, 0)] {
        let tape = Tape::new();
        let y = tape
            .constant(x.clone())
            .conv2d(&tape.constant(w.clone()), Some(&tape.constant(b.clone())), stride, pad)
            .unwrap()
            .value();
        let r = conv_oracle(&x, &w, &b, stride, pad);
        assert_eq!(y.shape(), r.shape());
        assert!(y.max_abs_diff(&r) < 1e-12);
    }
}

#[test]
fn conv2d_rejects_empty_output() {
    let tape = Tape::new();
    let err = tape
        .constant(Tensor::<f64>::ones([1, 2, 2]))
        .conv2d(&tape.constant(Tensor::ones([1, 1, 3, 3])), None, 1, 0)
        .unwrap_err();
    assert!(matches!(err, crate::Error::Config(_)));
}

#[test]
fn grad_check_linear_function() {
    let x = rand_t(&[3, 4], 8);
    let err = grad_check(|_, x| Ok(x.sum()), &x, 1e-5).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn grad_check_softmax_weighted() {
    let x = rand_t(&[6], 9);
    let err = grad_check(|_, x| probe(x.softmax(0)?, 10), &x, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn grad_check_rejects_bad_eps_and_non_finite() {
    let x = rand_t(&[2], 1);
    assert!(grad_check(|_, x| Ok(x.sum()), &x, 1e-2).is_err());
    let err = grad_check(|_, x| Ok(x.scale(f64::INFINITY).sum()), &x, 1e-5).unwrap_err();
    assert!(matches!(err, crate::Error::Eval(_)));
}

/// Every differentiable primitive against central differences.
#[test]
fn primitive_gradients() {
    let eps = 1e-5;
    let tol = 1e-6;
    let check = |name: &str, xs: Vec<Tensor>, f: &dyn for<'t> Fn(&'t Tape, &[Var<'t, f64>]) -> crate::Result<Var<'t, f64>>| {
        let r = grad_check_many(f, &xs, eps).unwrap();
        assert!(r.max_rel_error < tol, "{name}: {r:?}");
    };
    check("add", vec![rand_t(&[3, 4], 1), rand_t(&[3, 4], 2)], &|_, v| probe(v[0].add(&v[1])?, 3));
    check("sub", vec![rand_t(&[3, 4], 1), rand_t(&[3, 4], 2)], &|_, v| probe(v[0].sub(&v[1])?, 3));
    check("mul", vec![rand_t(&[3, 4], 1), rand_t(&[3, 4], 2)], &|_, v| probe(v[0].mul(&v[1])?, 3));
    check("scale", vec![rand_t(&[5], 4)], &|_, v| probe(v[0].scale(-1.7), 5));
    check("relu", vec![rand_t(&[4, 4], 6)], &|_, v| probe(v[0].relu(), 7));
    check("softplus", vec![rand_t(&[4, 4], 8)], &|_, v| probe(v[0].softplus(), 9));
    check("matmul", vec![rand_t(&[3, 4], 10), rand_t(&[4, 2], 11)], &|_, v| probe(v[0].matmul(&v[1])?, 12));
    check("linear", vec![rand_t(&[3, 4], 13), rand_t(&[4, 2], 14), rand_t(&[2], 15)], &|_, v| {
        probe(v[0].linear(&v[1], Some(&v[2]))?, 16)
    });
    check("transpose", vec![rand_t(&[3, 5], 17)], &|_, v| probe(v[0].transpose()?, 18));
    check("reshape", vec![rand_t(&[3, 4], 19)], &|_, v| probe(v[0].reshape(&[2, 6])?, 20));
    check("softmax", vec![rand_t(&[3, 4, 2], 21)], &|_, v| probe(v[0].softmax(1)?, 22));
    check("conv2d", vec![rand_t(&[2, 5, 6], 23), rand_t(&[3, 2, 3, 3], 24), rand_t(&[3], 25)], &|_, v| {
        probe(v[0].conv2d(&v[1], Some(&v[2]), 2, 1)?, 26)
    });
    check("conv2d nobias", vec![rand_t(&[2, 4, 4], 27), rand_t(&[1, 2, 1, 1], 28)], &|_, v| {
        probe(v[0].conv2d(&v[1], None, 1, 0)?, 29)
    });
    check("maxpool2d", vec![rand_t(&[2, 4, 6], 30)], &|_, v| probe(v[0].maxpool2d(2, 2)?, 31));
    check("segment_max", vec![rand_t(&[6, 3], 32)], &|_, v| probe(v[0].segment_max(3)?, 33));
    check("upsample2x", vec![rand_t(&[2, 3, 4], 34)], &|_, v| probe(v[0].upsample2x()?, 35));
    check("concat", vec![rand_t(&[2, 3, 4], 36), rand_t(&[1, 3, 4], 37)], &|_, v| {
        probe(concat(&[v[0], v[1]], 0)?, 38)
    });
    check("concat axis1", vec![rand_t(&[3, 2], 39), rand_t(&[3, 4], 40)], &|_, v| {
        probe(concat(&[v[0], v[1]], 1)?, 41)
    });
    check("gather_rows", vec![rand_t(&[5, 3], 42)], &|_, v| probe(v[0].gather_rows(&[4, 0, 4, 2])?, 43));
    check("scatter_add_rows", vec![rand_t(&[5, 3], 44), rand_t(&[2, 3], 45)], &|_, v| {
        probe(v[0].scatter_add_rows(&v[1], &[3, 1])?, 46)
    });
    check("mean", vec![rand_t(&[4, 3], 47)], &|_, v| Ok(v[0].mean()));
    let target = rand_t(&[4, 3], 48);
    let mask: Vec<bool> = (0..12).map(|i| i % 3 != 1).collect();
    check("masked_abs_mean", vec![rand_t(&[4, 3], 49)], &|_, v| v[0].masked_abs_mean(&target, &mask));
}

#[test]
fn upsample_of_constant_is_constant() {
    let tape = Tape::new();
    let y = tape.constant(Tensor::full([2, 3, 5], 1.5)).upsample2x().unwrap().value();
    assert_eq!(y.shape(), &[2, 6, 10]);
    assert!(y.data().iter().all(|&v: &f64| (v - 1.5).abs() < 1e-15));
}

#[test]
fn maxpool_picks_window_max() {
    let tape = Tape::new();
    let x = t(&[1, 2, 4], &[1., 5., 2., 0., 3., 4., 8., 7.]);
    let y = tape.constant(x).maxpool2d(2, 2).unwrap().value();
    assert_eq!(y.data(), &[5.0, 8.0]);
}

#[test]
fn masked_abs_mean_rejects_empty_mask() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::<f64>::zeros([2]));
    assert!(x.masked_abs_mean(&Tensor::zeros([2]), &[false, false]).is_err());
}

#[test]
fn backward_visits_every_leaf() {
    let tape = Tape::new();
    let a = tape.leaf(rand_t(&[2, 2], 1));
    let unused = tape.leaf(rand_t(&[3], 2));
    let y = a.relu().sum();
    let g = tape.backward(y);
    assert!(g.get(a).is_some());
    assert_eq!(g.get(unused).unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let tape = Tape::new();
        let x = tape.leaf(rand_t(&[2, 6, 6], 11));
        let w = tape.leaf(rand_t(&[3, 2, 3, 3], 12));
        let y = x.conv2d(&w, None, 1, 1).unwrap().relu().upsample2x().unwrap().softmax(0).unwrap();
        let l = y.sum();
        let g = tape.backward(l);
        (y.value().as_ref().clone(), g.get(w).unwrap().clone())
    };
    let (y1, g1) = run();
    let (y2, g2) = run();
    assert!(y1.bit_eq(&y2));
    assert!(g1.bit_eq(&g2));
}

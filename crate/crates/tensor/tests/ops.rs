use fat_tensor::{identity_grid, normalize, pointwise, Pointwise, Tensor, TensorError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.at(&[i, p]) * b.at(&[p, j]);
            }
        }
    }
    out
}

/// Direct-summation convolution with zero padding `(k-1)/2`.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Tensor {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let pad = (k - 1) / 2;
    let (oh, ow) = (h.div_ceil(stride), wd.div_ceil(stride));
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = b.data()[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let xx = (ox * stride + kx) as isize - pad as isize;
                            if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                s += x.at(&[ci, y as usize, xx as usize]) * w.at(&[co, ci, ky, kx]);
                            }
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = s;
            }
        }
    }
    Tensor::new(&[cout, oh, ow], out).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn matmul_identity_and_hand_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eye = t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    let b = Tensor::randn(&[3, 3], 1.0, &mut rng);
    assert_eq!(eye.matmul(&b).unwrap().data(), b.data());

    let a = t(&[2, 2], &[1., 2., 3., 4.]);
    let c = t(&[2, 1], &[0., 1.]);
    let p = a.matmul(&c).unwrap();
    assert_eq!(p.shape(), &[2, 1]);
    assert_eq!(p.data(), &[2., 4.]);
    assert_eq!(p.data(), naive_matmul(&a, &c).as_slice());
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (m, k, n) in [(1, 1, 1), (3, 5, 2), (17, 9, 13), (40, 33, 7)] {
        let a = Tensor::randn(&[m, k], 1.0, &mut rng);
        let b = Tensor::randn(&[k, n], 1.0, &mut rng);
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let err = Tensor::zeros(&[2, 3]).matmul(&Tensor::zeros(&[2, 3])).unwrap_err();
    match err {
        TensorError::Dimension { lhs, rhs, .. } => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bmm_matches_per_batch_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Tensor::randn(&[3, 4, 5], 1.0, &mut rng);
    let b = Tensor::randn(&[3, 5, 2], 1.0, &mut rng);
    let c = a.bmm(&b).unwrap();
    for i in 0..3 {
        let ai = a.narrow(0, i, 1).unwrap().reshape(&[4, 5]).unwrap();
        let bi = b.narrow(0, i, 1).unwrap().reshape(&[5, 2]).unwrap();
        let ci = c.narrow(0, i, 1).unwrap();
        for (x, y) in ci.data().iter().zip(naive_matmul(&ai, &bi)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::randn(&[1, 5, 6], 1.0, &mut rng);
    let w = t(&[1, 1, 1, 1], &[1.0]);
    let y = x.conv2d(&w, &Tensor::zeros(&[1]), 1).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn conv_all_ones_counts_taps() {
    let x = Tensor::full(&[1, 5, 5], 1.0);
    let w = Tensor::full(&[1, 1, 3, 3], 1.0);
    let y = x.conv2d(&w, &Tensor::zeros(&[1]), 1).unwrap();
    assert_eq!(y.at(&[0, 2, 2]), 9.0);
    assert_eq!(y.at(&[0, 1, 3]), 9.0);
    assert_eq!(y.at(&[0, 0, 0]), 4.0);
    assert_eq!(y.at(&[0, 4, 4]), 4.0);
    assert_eq!(y.at(&[0, 0, 2]), 6.0);
}

#[test]
fn conv_stride_shapes_and_naive_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::randn(&[2, 8, 8], 1.0, &mut rng);
    let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
    let b = Tensor::randn(&[3], 1.0, &mut rng);
    let y = x.conv2d(&w, &b, 2).unwrap();
    assert_eq!(y.shape(), &[3, 4, 4]);
    for (stride, k, h) in [(1, 3, 7), (2, 5, 9), (1, 1, 4), (2, 3, 7)] {
        let x = Tensor::randn(&[2, h, h + 1], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 2, k, k], 1.0, &mut rng);
        let got = x.conv2d(&w, &b, stride).unwrap();
        let want = naive_conv(&x, &w, &b, stride);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) < 1e-12);
    }
}

#[test]
fn conv_rejects_zero_stride() {
    let x = Tensor::zeros(&[1, 4, 4]);
    let w = Tensor::zeros(&[1, 1, 3, 3]);
    let err = x.conv2d(&w, &Tensor::zeros(&[1]), 0).unwrap_err();
    assert!(matches!(err, TensorError::Parameter { .. }));
}

#[test]
fn deconv_shapes_bias_and_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = Tensor::randn(&[2, 3, 3, 3], 1.0, &mut rng);
    let b = t(&[3], &[0.5, -1.0, 2.0]);
    let y = Tensor::zeros(&[2, 4, 4]).deconv2d(&w, &b, 2).unwrap();
    assert_eq!(y.shape(), &[3, 8, 8]);
    for c in 0..3 {
        for v in y.narrow(0, c, 1).unwrap().data() {
            assert_eq!(*v, b.data()[c]);
        }
    }

    // <conv(x; w), y> = <x, deconv(y; w)> with w: C_out×C_in×k×k
    for (stride, k, h) in [(1, 3, 5), (2, 3, 8), (2, 5, 6), (1, 1, 3), (2, 3, 7)] {
        let w = Tensor::randn(&[4, 3, k, k], 1.0, &mut rng);
        let x = Tensor::randn(&[3, h, h], 1.0, &mut rng);
        let cx = x.conv2d(&w, &Tensor::zeros(&[4]), stride).unwrap();
        let yy = Tensor::randn(cx.shape(), 1.0, &mut rng);
        let dy = yy.deconv2d(&w, &Tensor::zeros(&[3]), stride).unwrap();
        if h % stride == 0 {
            assert_eq!(dy.shape(), x.shape());
            let lhs = dot(&cx, &yy);
            let rhs = dot(&x, &dy);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn deconv_rejects_stride_three() {
    let err = Tensor::zeros(&[1, 2, 2])
        .deconv2d(&Tensor::zeros(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 3)
        .unwrap_err();
    assert!(matches!(err, TensorError::Parameter { .. }));
}

#[test]
fn instance_norm_cases() {
    let c = Tensor::full(&[1, 2, 2], 7.0).instance_norm(1e-5).unwrap();
    assert!(c.data().iter().all(|v| *v == 0.0));

    let y = t(&[1, 1, 2], &[1.0, 3.0]).instance_norm(1e-5).unwrap();
    // mean 2, variance 1, so ±1/sqrt(1 + eps)
    let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
    assert!((y.data()[0] + expect).abs() < 1e-12);
    assert!((y.data()[1] - expect).abs() < 1e-12);
    assert!((y.data()[1] - 1.0).abs() < 1e-5);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::randn(&[3, 6, 5], 4.0, &mut rng).add_scalar(10.0);
    let y = x.instance_norm(1e-5).unwrap();
    for ch in y.data().chunks(30) {
        let m: f64 = ch.iter().sum::<f64>() / 30.0;
        assert!(m.abs() < 1e-9);
    }
}

#[test]
fn softmax_cases() {
    let s = t(&[2], &[0.0, 0.0]).softmax(0).unwrap();
    assert_eq!(s.data(), &[0.5, 0.5]);
    let s = t(&[2], &[1000.0, 1000.0]).softmax(0).unwrap();
    assert_eq!(s.data(), &[0.5, 0.5]);
    let s = t(&[2], &[0.0, 3f64.ln()]).softmax(0).unwrap();
    assert!((s.data()[0] - 0.25).abs() < 1e-15);
    assert!((s.data()[1] - 0.75).abs() < 1e-15);
}

#[test]
fn softmax_along_middle_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::randn(&[2, 3, 4], 2.0, &mut rng);
    let s = x.softmax(1).unwrap();
    for a in 0..2 {
        for c in 0..4 {
            let tot: f64 = (0..3).map(|b| s.at(&[a, b, c])).sum();
            assert!((tot - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn grid_sample_identity_and_integer_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Tensor::randn(&[2, 5, 7], 1.0, &mut rng);
    let y = x.grid_sample(&identity_grid(5, 7)).unwrap();
    assert!(y.max_abs_diff(&x) < 1e-6);
    assert_eq!(y.data(), x.data());

    // sample one pixel to the right: out[i][j] = x[i][j+1] on the interior
    let mut g = identity_grid(5, 7).to_vec();
    for p in g.chunks_mut(2) {
        p[0] += 2.0 / 7.0;
    }
    let shifted = x.grid_sample(&Tensor::new(&[5, 7, 2], g).unwrap()).unwrap();
    for c in 0..2 {
        for i in 0..5 {
            for j in 0..6 {
                assert!((shifted.at(&[c, i, j]) - x.at(&[c, i, j + 1])).abs() < 1e-12);
            }
            // clamped at the border
            assert!((shifted.at(&[c, i, 6]) - x.at(&[c, i, 6])).abs() < 1e-12);
        }
    }
}

#[test]
fn normalize_round_trip_on_pixel_centers() {
    for n in [2usize, 5, 64] {
        assert_eq!(normalize(0.0, n), 1.0 / n as f64 - 1.0);
        assert!((normalize(n as f64 - 1.0, n) - (1.0 - 1.0 / n as f64)).abs() < 1e-15);
    }
}

#[test]
fn pointwise_kinds() {
    let x = t(&[3], &[-2.0, 0.0, 5.0]);
    assert_eq!(pointwise(Pointwise::L1, &[&x, &x]).unwrap().item(), 0.0);
    let m = pointwise(Pointwise::Mse, &[&t(&[2], &[0.0, 2.0]), &t(&[2], &[0.0, 0.0])]).unwrap();
    assert_eq!(m.item(), 2.0);
    let r = pointwise(Pointwise::Relu, &[&x]).unwrap();
    assert_eq!(r.data(), &[0.0, 0.0, 5.0]);
    let s = pointwise(Pointwise::Scale, &[&x, &Tensor::scalar(2.0)]).unwrap();
    assert_eq!(s.data(), &[-4.0, 0.0, 10.0]);
    let c = pointwise(Pointwise::Concat, &[&x, &x]).unwrap();
    assert_eq!(c.shape(), &[6]);
    let a = pointwise(Pointwise::Add, &[&x, &x]).unwrap();
    assert_eq!(a.data(), &[-4.0, 0.0, 10.0]);
    assert!(pointwise(Pointwise::Mul, &[&x, &t(&[2], &[1.0, 1.0])]).is_err());
    assert!(pointwise(Pointwise::Tanh, &[&x, &x]).is_err());
}

#[test]
fn concat_and_narrow_are_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = Tensor::randn(&[4, 2], 1.0, &mut rng);
    let b = Tensor::randn(&[4, 3], 1.0, &mut rng);
    let c = Tensor::concat(&[&a, &b], 1).unwrap();
    assert_eq!(c.shape(), &[4, 5]);
    assert_eq!(c.narrow(1, 0, 2).unwrap().data(), a.data());
    assert_eq!(c.narrow(1, 2, 3).unwrap().data(), b.data());
    assert!(Tensor::concat(&[&a, &Tensor::zeros(&[3, 3])], 1).is_err());
}

#[test]
fn permute_matches_index_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Tensor::randn(&[2, 3, 4], 1.0, &mut rng);
    let p = x.permute(&[2, 0, 1]).unwrap();
    assert_eq!(p.shape(), &[4, 2, 3]);
    for a in 0..2 {
        for b in 0..3 {
            for c in 0..4 {
                assert_eq!(p.at(&[c, a, b]), x.at(&[a, b, c]));
            }
        }
    }
    assert!(x.permute(&[0, 0, 1]).is_err());
}

#[test]
fn backward_requires_scalar() {
    let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
    let err = x.scale(2.0).backward().unwrap_err();
    assert!(matches!(err, TensorError::Contract(_)));
}

#[test]
fn backward_square_and_accumulation() {
    let x = Tensor::param(&[1], vec![3.0]).unwrap();
    let loss = x.mul(&x).unwrap().sum();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![12.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn constants_do_not_record() {
    let a = Tensor::full(&[2], 1.0);
    let b = a.add(&a).unwrap().tanh();
    assert!(b.is_leaf());
    assert!(!b.is_requires_grad());
    let p = Tensor::param(&[2], vec![0.1, 0.2]).unwrap();
    let c = p.add(&a).unwrap();
    assert_eq!(c.op_name(), Some("add"));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
        let n = v.len();
        let s = Tensor::new(&[n], v).unwrap().softmax(0).unwrap();
        let tot: f64 = s.data().iter().sum();
        prop_assert!((tot - 1.0).abs() <= 1e-9);
        prop_assert!(s.data().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn tanh_is_bounded(v in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
        let n = v.len();
        let y = Tensor::new(&[n], v).unwrap().tanh();
        prop_assert!(y.data().iter().all(|p| (-1.0..=1.0).contains(p)));
    }

    #[test]
    fn ops_are_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::randn(&[2, 6, 6], 1.0, &mut rng);
            let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
            x.conv2d(&w, &Tensor::zeros(&[3]), 2).unwrap().instance_norm(1e-5).unwrap().relu().to_vec()
        };
        prop_assert_eq!(run(), run());
    }
}

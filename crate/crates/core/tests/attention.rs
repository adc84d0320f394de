mod common;

use fat_core::attention::{
    attention_head, color_transform, estimate_attributes, fat_forward, from_rows, head_attention, landmark_embedding,
    multi_head, static_attention, to_rows, transfer_attributes, FatParams,
};
use fat_core::LandmarkSet;
use fat_tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn row_sums(a: &Tensor) -> Vec<f64> {
    let c = *a.shape().last().unwrap();
    a.data().chunks_exact(c).map(|r| r.iter().sum()).collect()
}

#[test]
fn embedding_single_landmark() {
    // 4×4 pixel centers are at odd multiples of 1/8.
    let lm = LandmarkSet::new(vec![[0.375, 0.625]]).unwrap();
    let le = landmark_embedding(4, 4, &lm).unwrap();
    assert_eq!(le.shape(), [16, 2]);
    let at = |i: usize, j: usize| [le.at(&[i * 4 + j, 0]), le.at(&[i * 4 + j, 1])];
    assert_eq!(at(2, 1), [0.0, 0.0]);
    let v = at(0, 3);
    let (dx, dy) = (0.875 - 0.375, 0.125 - 0.625);
    let n = (dx * dx + dy * dy as f64).sqrt();
    assert!((v[0] - dx / n).abs() < 1e-12 && (v[1] - dy / n).abs() < 1e-12);
}

#[test]
fn embedding_rows_are_unit_or_zero_and_translation_invariant() {
    let mut r = rng(1);
    for _ in 0..20 {
        let lm = common::landmarks(&mut r, 30);
        let le = landmark_embedding(8, 8, &lm).unwrap();
        for row in le.data().chunks_exact(60) {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
    }
    // Shift landmarks by exactly two pixels of a 16×16 map: rows move with them.
    let pts = vec![[0.2, 0.3], [0.5, 0.4], [0.35, 0.6]];
    let shifted: Vec<_> = pts.iter().map(|p| [p[0] + 2.0 / 16.0, p[1] + 1.0 / 16.0]).collect();
    let a = landmark_embedding(16, 16, &LandmarkSet::new(pts).unwrap()).unwrap();
    let b = landmark_embedding(16, 16, &LandmarkSet::new(shifted).unwrap()).unwrap();
    for i in 0..14 {
        for j in 0..13 {
            for c in 0..6 {
                let (u, v) = (a.at(&[i * 16 + j, c]), b.at(&[(i + 1) * 16 + j + 2, c]));
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}

fn setup(seed: u64, m: usize, m2: usize, d: usize, n_lm: usize) -> (Tensor, Tensor, Tensor, Tensor) {
    let mut r = rng(seed);
    (
        Tensor::randn(&[m, d], 1.0, &mut r),
        Tensor::randn(&[m2, d], 1.0, &mut r),
        Tensor::randn(&[m, 2 * n_lm], 0.5, &mut r),
        Tensor::randn(&[m2, 2 * n_lm], 0.5, &mut r),
    )
}

#[test]
fn zero_projection_gives_uniform_attention() {
    let (x, y, lx, ly) = setup(2, 6, 5, 4, 3);
    let mut p = FatParams::new(&mut rng(3), 4, 3, 1, 4).unwrap();
    p.wx = Tensor::zeros(p.wx.shape());
    p.wy = Tensor::zeros(p.wy.shape());
    let a = attention_head(&x, &y, &lx, &ly, &p, 0).unwrap();
    assert!(a.data().iter().all(|v| (v - 0.2).abs() < 1e-15));
    let (_, y1, _, ly1) = setup(4, 6, 1, 4, 3);
    let a1 = attention_head(&x, &y1, &lx, &ly1, &FatParams::new(&mut rng(5), 4, 3, 2, 4).unwrap(), 1).unwrap();
    assert!(a1.data().iter().all(|v| *v == 1.0));
}

#[test]
fn multi_head_mixing() {
    let (x, y, lx, ly) = setup(6, 7, 9, 4, 3);
    let p1 = FatParams::new(&mut rng(7), 4, 3, 1, 5).unwrap();
    let single = attention_head(&x, &y, &lx, &ly, &p1, 0).unwrap();
    assert!(multi_head(&x, &y, &lx, &ly, &p1).unwrap().max_abs_diff(&single) < 1e-15);

    // Two identical heads.
    let mut p2 = FatParams::new(&mut rng(7), 4, 3, 2, 5).unwrap();
    let dup = |w: &Tensor| {
        let (rows, cols) = (w.shape()[0], 5);
        Tensor::from_fn(&[rows, 2 * cols], |i| {
            let (r, c) = (i / (2 * cols), i % (2 * cols));
            w.at(&[r, c % cols])
        })
    };
    p2.wx = dup(&p1.wx);
    p2.wy = dup(&p1.wy);
    p2.wo = Tensor::new(&[2], vec![0.3, -1.2]).unwrap();
    let heads = head_attention(&x, &y, &lx, &ly, &p2).unwrap();
    assert_eq!(heads.shape(), [2, 7, 9]);
    assert!(multi_head(&x, &y, &lx, &ly, &p2).unwrap().max_abs_diff(&single) < 1e-12);
}

#[test]
fn estimator_contracts() {
    let p = FatParams::new(&mut rng(8), 4, 2, 2, 3).unwrap();
    let mut zero = p.clone();
    zero.est1.b = Tensor::zeros(zero.est1.b.shape());
    zero.est2.b = Tensor::zeros(zero.est2.b.shape());
    let g = estimate_attributes(&Tensor::zeros(&[4, 5, 6]), &zero).unwrap();
    assert_eq!(g.shape(), [30, 8]);
    assert!(g.data().iter().all(|v| *v == 0.0));

    // Shift equivariance away from the zero-padded border.
    let y = Tensor::randn(&[4, 8, 8], 1.0, &mut rng(9));
    let shifted = Tensor::from_fn(&[4, 8, 8], |i| {
        let (c, r) = (i / 64, i % 64);
        let (a, b) = (r / 8, r % 8);
        if a >= 1 && b >= 2 {
            y.at(&[c, a - 1, b - 2])
        } else {
            0.0
        }
    });
    let g = from_rows(&estimate_attributes(&y, &p).unwrap(), 8, 8).unwrap();
    let gs = from_rows(&estimate_attributes(&shifted, &p).unwrap(), 8, 8).unwrap();
    for c in 0..8 {
        for a in 2..7 {
            for b in 3..7 {
                assert!((gs.at(&[c, a, b]) - g.at(&[c, a - 1, b - 2])).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn transfer_and_modulation_cases() {
    let gy = Tensor::randn(&[4, 6], 1.0, &mut rng(10));
    let eye = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
    assert!(transfer_attributes(&eye, &gy).unwrap().max_abs_diff(&gy) < 1e-15);
    let uni = Tensor::full(&[3, 4], 0.25);
    let gx = transfer_attributes(&uni, &gy).unwrap();
    for c in 0..6 {
        let mean = (0..4).map(|r| gy.at(&[r, c])).sum::<f64>() / 4.0;
        for r in 0..3 {
            assert!((gx.at(&[r, c]) - mean).abs() < 1e-12);
        }
    }

    let x = Tensor::full(&[2, 3], 0.5);
    let gamma = |s: f64, b: f64| Tensor::from_fn(&[2, 6], |i| if i % 6 < 3 { s } else { b });
    assert_eq!(color_transform(&x, &gamma(1.0, 0.0)).unwrap().to_vec(), x.to_vec());
    assert!(color_transform(&x, &gamma(0.0, 0.7))
        .unwrap()
        .data()
        .iter()
        .all(|v| *v == 0.7));
    assert!(color_transform(&x, &gamma(2.0, -1.0))
        .unwrap()
        .data()
        .iter()
        .all(|v| *v == 0.0));
}

#[test]
fn self_transfer_identity() {
    let mut r = rng(11);
    let x = Tensor::randn(&[6, 4, 4], 1.0, &mut r);
    let lm = common::landmarks(&mut r, 5);
    let le = landmark_embedding(4, 4, &lm).unwrap();
    let p = FatParams::new(&mut r, 6, 5, 2, 4).unwrap().with_identity_estimator();
    let out = fat_forward(&x, &x, &le, &le, &p).unwrap();
    assert_eq!(out.shape(), x.shape());
    assert!(out.max_abs_diff(&x) < 1e-12);
}

#[test]
fn static_attention_cases() {
    let (x, y, lx, ly) = setup(12, 8, 6, 5, 4);
    assert!(static_attention(&x, &y, &lx, &ly, 0.0).is_err());
    let a = static_attention(&x, &y, &lx, &ly, 0.01).unwrap();
    assert!(row_sums(&a).iter().all(|s| (s - 1.0).abs() < 1e-9));
    // Tiny ω: features barely matter.
    let other = Tensor::randn(&[8, 5], 1.0, &mut rng(13));
    let b = static_attention(&other, &y, &lx, &ly, 1e-9).unwrap();
    let c = static_attention(&x, &y, &lx, &ly, 1e-9).unwrap();
    assert!(b.max_abs_diff(&c) < 1e-6);
}

#[test]
fn static_self_attention_is_diagonal_dominant() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let x = Tensor::randn(&[12, 6], 1.0, &mut r);
        let le = Tensor::randn(&[12, 8], 1.0, &mut r);
        let a = static_attention(&x, &x, &le, &le, 1.0).unwrap();
        for (i, row) in a.data().chunks_exact(12).enumerate() {
            let best = row.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).unwrap().0;
            // Random rows of this width are almost surely not near-parallel.
            let norm_i: f64 = (0..6).map(|c| x.at(&[i, c]).powi(2)).sum::<f64>()
                + (0..8).map(|c| le.at(&[i, c]).powi(2)).sum::<f64>();
            let rival = (0..12).filter(|&j| j != i).map(|j| {
                (0..6).map(|c| x.at(&[i, c]) * x.at(&[j, c])).sum::<f64>()
                    + (0..8).map(|c| le.at(&[i, c]) * le.at(&[j, c])).sum::<f64>()
            });
            if rival.fold(f64::MIN, f64::max) < norm_i {
                assert_eq!(best, i, "seed {seed} row {i}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_rows_are_stochastic(seed in 0u64..10_000, heads in 1usize..4) {
        let (x, y, lx, ly) = setup(seed, 9, 7, 5, 3);
        let p = FatParams::new(&mut rng(seed + 1), 5, 3, heads, 4).unwrap();
        let h = head_attention(&x, &y, &lx, &ly, &p).unwrap();
        prop_assert!(row_sums(&h).iter().all(|s| (s - 1.0).abs() <= 1e-9));
        let a = multi_head(&x, &y, &lx, &ly, &p).unwrap();
        prop_assert!(row_sums(&a).iter().all(|s| (s - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn reference_permutation(seed in 0u64..10_000) {
        let (x, y, lx, ly) = setup(seed, 6, 8, 4, 2);
        let p = FatParams::new(&mut rng(seed + 2), 4, 2, 2, 3).unwrap();
        let gy = Tensor::randn(&[8, 8], 1.0, &mut rng(seed + 3));
        let perm: Vec<usize> = (0..8).map(|i| (i * 3 + 5) % 8).collect();
        let permute = |t: &Tensor| {
            let c = t.shape()[1];
            Tensor::from_fn(t.shape(), |i| t.at(&[perm[i / c], i % c]))
        };
        let a = multi_head(&x, &y, &lx, &ly, &p).unwrap();
        let ap = multi_head(&x, &permute(&y), &lx, &permute(&ly), &p).unwrap();
        for r in 0..6 {
            for j in 0..8 {
                prop_assert!((ap.at(&[r, j]) - a.at(&[r, perm[j]])).abs() <= 1e-12);
            }
        }
        let gx = transfer_attributes(&a, &gy).unwrap();
        let gxp = transfer_attributes(&ap, &permute(&gy)).unwrap();
        prop_assert!(gx.max_abs_diff(&gxp) <= 1e-9);
    }

    #[test]
    fn transferred_attributes_stay_in_hull(seed in 0u64..10_000) {
        let (x, y, lx, ly) = setup(seed, 5, 6, 4, 2);
        let p = FatParams::new(&mut rng(seed + 4), 4, 2, 2, 3).unwrap();
        let gy = Tensor::randn(&[6, 5], 2.0, &mut rng(seed + 5));
        let gx = transfer_attributes(&multi_head(&x, &y, &lx, &ly, &p).unwrap(), &gy).unwrap();
        for c in 0..5 {
            let col: Vec<f64> = (0..6).map(|r| gy.at(&[r, c])).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
            for r in 0..5 {
                let v = gx.at(&[r, c]);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn rows_roundtrip(d in 1usize..5, h in 1usize..5, w in 1usize..5, seed in 0u64..100) {
        let t = Tensor::randn(&[d, h, w], 1.0, &mut rng(seed));
        let back = from_rows(&to_rows(&t).unwrap(), h, w).unwrap();
        prop_assert_eq!(back.to_vec(), t.to_vec());
    }
}

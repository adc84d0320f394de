//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use fat_core::attention::FatParams;
use fat_core::face::{schema, FaceSample, ParsingMask};
use fat_core::layers::Conv;
use fat_core::synth::{corpus_params, synth_face};
use fat_core::tps::min_shift;
use fat_core::LandmarkSet;
use fat_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn landmarks<R: Rng>(rng: &mut R, n: usize) -> LandmarkSet {
    LandmarkSet::new(
        (0..n)
            .map(|_| [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)])
            .collect(),
    )
    .unwrap()
}

/// Rebuilds attention parameters from `[wx, wy, wo, est1.w, est1.b, est2.w, est2.b]`.
pub fn fat_params(t: &[Tensor], heads: usize, d_k: usize) -> FatParams {
    FatParams {
        wx: t[0].clone(),
        wy: t[1].clone(),
        wo: t[2].clone(),
        est1: Conv {
            w: t[3].clone(),
            b: t[4].clone(),
        },
        est2: Conv {
            w: t[5].clone(),
            b: t[6].clone(),
        },
        heads,
        d_k,
    }
}

pub fn fat_tensors(p: &FatParams) -> Vec<Tensor> {
    vec![
        p.wx.detach(),
        p.wy.detach(),
        p.wo.detach(),
        p.est1.w.detach(),
        p.est1.b.detach(),
        p.est2.w.detach(),
        p.est2.b.detach(),
    ]
}

/// `sum(out ⊙ r)` for a fixed `r`, turning any output into a scalar.
pub fn project(out: &Tensor, r: &Tensor) -> fat_tensor::Result<Tensor> {
    Ok(out.mul(r)?.sum())
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Shape of one brow measured from pixels alone.
#[derive(Clone, Copy, Debug)]
pub struct BrowShape {
    /// Arch in the synthetic parameterization: positive arches up.
    pub kappa: f64,
    /// Darkness-weighted centroid in pixels `(x, y)`.
    pub centroid: [f64; 2],
}

/// Fits the brow inside a window aligned with `frame`'s brow end points
/// (landmarks `range.start` and `range.end - 1`, in `[0, 1]²`).
///
/// Pixels darker than the window's median luminance are weighted by how
/// much darker they are; per-column weighted centroids across the brow
/// axis are fitted with `s = a + b·t + c·t²`, and since the rendered
/// centerline is `s = −κL + (κ/L)·t²`, `κ = c·L`. Pixels inside either eye
/// of `eyes` (ellipses through the eye landmarks, with a margin) are
/// ignored so a tilted window cannot pick up a pupil.
pub fn measure_brow(
    image: &Tensor,
    frame: &LandmarkSet,
    range: std::ops::Range<usize>,
    eyes: &LandmarkSet,
) -> Option<BrowShape> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let px = |p: [f64; 2]| [p[0] * w as f64, p[1] * h as f64];
    let ellipses: Vec<_> = [schema::LEFT_EYE, schema::RIGHT_EYE]
        .into_iter()
        .map(|r| {
            let e: Vec<[f64; 2]> = eyes.points()[r].iter().map(|&p| px(p)).collect();
            let c = [(e[0][0] + e[2][0]) / 2.0, (e[0][1] + e[2][1]) / 2.0];
            // Landmarks sit at 0.7 of the long and 0.5 of the short semi-axis.
            let major = [(e[2][0] - e[0][0]) / 1.4, (e[2][1] - e[0][1]) / 1.4];
            let minor = [e[3][0] - e[1][0], e[3][1] - e[1][1]];
            (c, major, minor)
        })
        .collect();
    let in_eye = |q: [f64; 2]| {
        ellipses.iter().any(|&(c, a, b)| {
            let d = [q[0] - c[0], q[1] - c[1]];
            let det = a[0] * b[1] - a[1] * b[0];
            let (x, y) = ((d[0] * b[1] - d[1] * b[0]) / det, (a[0] * d[1] - a[1] * d[0]) / det);
            x * x + y * y <= 1.3 * 1.3
        })
    };
    let a = px(frame.points()[range.start]);
    let b = px(frame.points()[range.end - 1]);
    let half = ((b[0] - a[0]).hypot(b[1] - a[1])) / 2.0;
    let u = [(b[0] - a[0]) / (2.0 * half), (b[1] - a[1]) / (2.0 * half)];
    let n = [-u[1], u[0]];
    let o = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];

    let lum = |i: usize, j: usize| {
        let at = |c: usize| image.data()[(c * h + i) * w + j];
        0.299 * at(0) + 0.587 * at(1) + 0.114 * at(2)
    };
    let mut window = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let d = [j as f64 + 0.5 - o[0], i as f64 + 0.5 - o[1]];
            let (t, s) = (d[0] * u[0] + d[1] * u[1], d[0] * n[0] + d[1] * n[1]);
            if t.abs() <= 1.25 * half && s.abs() <= 0.75 * half && !in_eye([j as f64 + 0.5, i as f64 + 0.5]) {
                window.push((t, s, [j as f64 + 0.5, i as f64 + 0.5], lum(i, j)));
            }
        }
    }
    let mut sorted: Vec<f64> = window.iter().map(|p| p.3).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max_dark = window.iter().map(|p| median - p.3).fold(0.0, f64::max);
    if max_dark <= 0.0 {
        return None;
    }
    let weight = |l: f64| ((median - l) - 0.3 * max_dark).max(0.0);

    let (mut sw, mut cx, mut cy) = (0.0, 0.0, 0.0);
    let mut columns: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for &(t, s, p, l) in &window {
        let wt = weight(l);
        if wt == 0.0 {
            continue;
        }
        sw += wt;
        cx += wt * p[0];
        cy += wt * p[1];
        let e = columns.entry(t.round() as i64).or_default();
        e.0 += wt;
        e.1 += wt * s;
    }
    // Weighted least squares on columns away from the tapered ends.
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (&t, &(wt, ws)) in &columns {
        let t = t as f64;
        if t.abs() > 0.85 * half {
            continue;
        }
        let s = ws / wt;
        let basis = [1.0, t, t * t];
        for r in 0..3 {
            atb[r] += wt * basis[r] * s;
            for c in 0..3 {
                ata[r][c] += wt * basis[r] * basis[c];
            }
        }
    }
    let coef = solve3(ata, atb)?;
    Some(BrowShape {
        kappa: coef[2] * half,
        centroid: [cx / sw, cy / sw],
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        v.swap(c, p);
        for r in c + 1..3 {
            let f = m[r][c] / m[c][c];
            for k in c..3 {
                m[r][k] -= f * m[c][k];
            }
            v[r] -= f * v[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        x[r] = (v[r] - (r + 1..3).map(|k| m[r][k] * x[k]).sum::<f64>()) / m[r][r];
    }
    Some(x)
}

/// `sample` moved by whole pixels (`di` down, `dj` right), edges replicated.
pub fn translated(sample: &FaceSample, di: isize, dj: isize) -> FaceSample {
    let (h, w) = (sample.height(), sample.width());
    let src = |i: usize, j: usize| {
        let a = (i as isize - di).clamp(0, h as isize - 1) as usize;
        let b = (j as isize - dj).clamp(0, w as isize - 1) as usize;
        a * w + b
    };
    let d = sample.image.data();
    let image = Tensor::from_fn(&[3, h, w], |k| {
        let (c, r) = (k / (h * w), k % (h * w));
        d[c * h * w + src(r / w, r % w)]
    });
    let labels = (0..h * w).map(|r| sample.mask.labels()[src(r / w, r % w)]).collect();
    let shift = [dj as f64 / w as f64, di as f64 / h as f64];
    let landmarks = LandmarkSet::new(
        sample
            .landmarks
            .points()
            .iter()
            .map(|p| [p[0] + shift[0], p[1] + shift[1]])
            .collect(),
    )
    .unwrap();
    FaceSample::new(image, landmarks, ParsingMask::new(h, w, labels).unwrap()).unwrap()
}

/// Image size of the brow-shape pairs; the curvature fit needs resolution.
pub const BROW_PAIR_SIZE: usize = 128;

/// Straight-brow references paired with crescent-brow sources (either arch
/// direction), eye shadow off so only brows are dark above the eyes.
pub fn straight_onto_crescent(count: usize, seed: u64) -> Vec<(FaceSample, FaceSample)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (_, mut ps) = corpus_params(2 * i, BROW_PAIR_SIZE, seed);
            let (_, mut pr) = corpus_params(2 * i + 1, BROW_PAIR_SIZE, seed);
            ps.shadow_alpha = 0.0;
            pr.shadow_alpha = 0.0;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            ps.brow_curvature = sign * rng.random_range(0.25..0.45);
            pr.brow_curvature = rng.random_range(-0.05..0.05);
            (synth_face(&ps).unwrap(), synth_face(&pr).unwrap())
        })
        .collect()
}

/// Per brow, the shape error `|κ_out − κ_ref| / max(|κ_ref|, |κ_src|)` and
/// the centroid distance to the source brow in pixels. The output brow is
/// measured in its own frame: the reference brow moved by `min_shift`.
pub fn brow_transfer_errors(source: &FaceSample, reference: &FaceSample, output: &Tensor) -> Vec<(f64, f64)> {
    [schema::LEFT_BROW, schema::RIGHT_BROW]
        .into_iter()
        .map(|range| {
            let (p, q) = (source.landmarks.normalized(), reference.landmarks.normalized());
            let delta = min_shift(&p[range.clone()], &q[range.clone()]).unwrap();
            let moved = LandmarkSet::new(
                reference
                    .landmarks
                    .points()
                    .iter()
                    .map(|v| [v[0] - delta[0] / 2.0, v[1] - delta[1] / 2.0])
                    .collect(),
            )
            .unwrap();
            let ms = measure_brow(&source.image, &source.landmarks, range.clone(), &source.landmarks).unwrap();
            let mr = measure_brow(
                &reference.image,
                &reference.landmarks,
                range.clone(),
                &reference.landmarks,
            )
            .unwrap();
            let mo = measure_brow(output, &moved, range, &source.landmarks).unwrap();
            let rel = (mo.kappa - mr.kappa).abs() / mr.kappa.abs().max(ms.kappa.abs());
            let dc = (mo.centroid[0] - ms.centroid[0]).hypot(mo.centroid[1] - ms.centroid[1]);
            (rel, dc)
        })
        .collect()
}

/// Mean color over the pixels labelled `label`.
pub fn region_mean(image: &Tensor, mask: &ParsingMask, label: u8) -> [f64; 3] {
    let plane = mask.labels().len();
    let n = mask.count(label) as f64;
    let mut m = [0.0; 3];
    for (c, slot) in m.iter_mut().enumerate() {
        *slot = (0..plane)
            .filter(|&i| mask.labels()[i] == label)
            .map(|i| image.data()[c * plane + i])
            .sum::<f64>()
            / n;
    }
    m
}

//! Pseudo ground truth: reference makeup re-rendered on the source face.
//!
//! The TPS variants warp the reference image onto the source geometry
//! (whole face, then each part from its own landmarks); the spatial variant
//! additionally moves a part's shape to the source location. Histogram
//! matching and alpha blending are the simpler baselines.

use std::fmt;
use std::ops::Range;

use fat_tensor::Tensor;

use crate::error::{FatError, Result};
use crate::face::{self, part_landmarks, FaceSample, ParsingMask};
use crate::lu::Lu;
use crate::tps::{min_shift, warp_image, Point, SampleGrid, TpsSystem};

/// Default blend opacity.
pub const BLEND_ALPHA: f64 = 0.8;

/// Parts refined individually after the coarse warp.
pub const REFINED_PARTS: [u8; 5] = [
    face::LIPS,
    face::LEFT_BROW,
    face::RIGHT_BROW,
    face::LEFT_EYE,
    face::RIGHT_EYE,
];

/// Outer anchors that keep small part-wise solves well posed.
const ANCHORS: [Point; 4] = [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]];

/// Normal offset of the synthetic brow contour, in normalized coordinates;
/// wider than any brow.
const BROW_CONTOUR_OFFSET: f64 = 0.04;

/// Scale of the outer ring around outlined parts.
const PART_RING_SCALE: f64 = 1.6;

/// Histogram-matched regions.
const HIST_REGIONS: [&[u8]; 4] = [
    &[face::SKIN],
    &[face::LIPS],
    &[face::LEFT_EYE, face::RIGHT_EYE],
    &[face::LEFT_BROW, face::RIGHT_BROW],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgtMode {
    TpsColor,
    TpsSpatial,
    Histogram,
    Blend,
}

impl fmt::Display for PgtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PgtMode::TpsColor => "tps-color",
            PgtMode::TpsSpatial => "tps-spatial",
            PgtMode::Histogram => "histogram",
            PgtMode::Blend => "blend",
        })
    }
}

/// A supervision image with the recipe that produced it.
#[derive(Clone, Debug)]
pub struct PseudoGT {
    /// Same shape as the source image, values in `[0, 1]`.
    pub image: Tensor,
    pub mode: PgtMode,
    pub parts_refined: Vec<u8>,
    /// Non-fatal conditions, e.g. a part skipped for degenerate geometry.
    pub warnings: Vec<String>,
}

impl PseudoGT {
    /// `mode=<mode> parts=<l1,l2,...>`.
    pub fn sidecar(&self) -> String {
        let parts: Vec<String> = self.parts_refined.iter().map(u8::to_string).collect();
        format!("mode={} parts={}", self.mode, parts.join(","))
    }
}

fn clamp01(t: &Tensor) -> Tensor {
    Tensor::from_fn(t.shape(), |i| t.data()[i].clamp(0.0, 1.0))
}

/// Grid under which output point `centers[i]` samples `targets[i]` (both
/// in `[-1, 1]²`), with the image corners pinned.
fn tps_grid(h: usize, w: usize, centers: &[Point], targets: &[Point]) -> Result<SampleGrid> {
    let c: Vec<Point> = centers.iter().chain(&ANCHORS).copied().collect();
    let t: Vec<Point> = targets.iter().chain(&ANCHORS).copied().collect();
    TpsSystem::new(&c)?.solve(&t)?.grid(h, w)
}

fn tps_warp(image: &Tensor, centers: &[Point], targets: &[Point]) -> Result<Tensor> {
    warp_image(image, &tps_grid(image.shape()[1], image.shape()[2], centers, targets)?)
}

/// Samples along a fitted brow centerline.
const BROW_SAMPLES: usize = 7;

/// Control points surrounding a part, with a second ring outside it so the
/// warp stays local. Lips and eyes are outlined by their landmarks and get
/// a scaled copy about their centroid. A brow's landmarks run along its
/// centerline: a quadratic is fitted in the chord frame, sampled densely and
/// flanked by copies offset along its normal.
fn part_contour(label: u8, points: &[Point]) -> Vec<Point> {
    let n = points.len();
    if label != face::LEFT_BROW && label != face::RIGHT_BROW {
        let c = points
            .iter()
            .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n as f64, a[1] + p[1] / n as f64]);
        let mut out = points.to_vec();
        out.extend(points.iter().map(|p| {
            [
                c[0] + PART_RING_SCALE * (p[0] - c[0]),
                c[1] + PART_RING_SCALE * (p[1] - c[1]),
            ]
        }));
        return out;
    }
    let Some(curve) = ChordQuadratic::fit(points) else {
        return points.to_vec();
    };
    let mut out = Vec::with_capacity(3 * BROW_SAMPLES);
    for k in 0..BROW_SAMPLES {
        let u = curve.u0 + (curve.u1 - curve.u0) * k as f64 / (BROW_SAMPLES - 1) as f64;
        let (p, normal) = curve.at(u);
        out.push(p);
        for side in [-1.0, 1.0] {
            let d = side * BROW_CONTOUR_OFFSET;
            out.push([p[0] + d * normal[0], p[1] + d * normal[1]]);
        }
    }
    out
}

/// `v = a + b·u + c·u²` in the frame of the chord from the first to the
/// last point.
struct ChordQuadratic {
    origin: Point,
    axis: Point,
    coef: [f64; 3],
    u0: f64,
    u1: f64,
}

impl ChordQuadratic {
    /// Least-squares fit; `None` for fewer than three points or a
    /// degenerate chord.
    fn fit(points: &[Point]) -> Option<Self> {
        let (first, last) = (*points.first()?, *points.last()?);
        let len = (last[0] - first[0]).hypot(last[1] - first[1]);
        if points.len() < 3 || len < 1e-9 {
            return None;
        }
        let origin = [(first[0] + last[0]) / 2.0, (first[1] + last[1]) / 2.0];
        let axis = [(last[0] - first[0]) / len, (last[1] - first[1]) / len];
        let mut ata = vec![0.0; 9];
        let mut atb = [0.0; 3];
        for p in points {
            let d = [p[0] - origin[0], p[1] - origin[1]];
            let (u, v) = (d[0] * axis[0] + d[1] * axis[1], -d[0] * axis[1] + d[1] * axis[0]);
            let row = [1.0, u, u * u];
            for r in 0..3 {
                atb[r] += row[r] * v;
                for c in 0..3 {
                    ata[r * 3 + c] += row[r] * row[c];
                }
            }
        }
        let x = Lu::factor(ata, 3)?.solve(&atb);
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(ChordQuadratic {
            origin,
            axis,
            coef: [x[0], x[1], x[2]],
            u0: -len / 2.0,
            u1: len / 2.0,
        })
    }

    /// Point and unit normal at chord coordinate `u`.
    fn at(&self, u: f64) -> (Point, Point) {
        let [a, b, c] = self.coef;
        let v = a + b * u + c * u * u;
        let slope = b + 2.0 * c * u;
        let (ax, ay) = (self.axis[0], self.axis[1]);
        let p = [self.origin[0] + u * ax - v * ay, self.origin[1] + u * ay + v * ax];
        let t = [ax - slope * ay, ay + slope * ax];
        let tl = t[0].hypot(t[1]);
        (p, [-t[1] / tl, t[0] / tl])
    }
}

/// [`part_contour`] of `points[range]` followed by every other landmark,
/// which pins the neighbouring parts.
fn with_context(label: u8, points: &[Point], range: Range<usize>) -> Vec<Point> {
    let mut out = part_contour(label, &points[range.clone()]);
    out.extend(points[..range.start].iter().chain(&points[range.end..]));
    out
}

fn check_pair(source: &FaceSample, reference: &FaceSample) -> Result<()> {
    if source.landmarks.len() != reference.landmarks.len() {
        return Err(FatError::Schema(format!(
            "source has {} landmarks, reference {}",
            source.landmarks.len(),
            reference.landmarks.len()
        )));
    }
    if source.image.shape() != reference.image.shape() {
        return Err(FatError::param(
            "pgt",
            format!(
                "source {:?} and reference {:?} differ in size",
                source.image.shape(),
                reference.image.shape()
            ),
        ));
    }
    Ok(())
}

/// The reference warped onto the source geometry using every landmark.
pub fn coarse_warp(source: &FaceSample, reference: &FaceSample) -> Result<Tensor> {
    check_pair(source, reference)?;
    tps_warp(
        &reference.image,
        &source.landmarks.normalized(),
        &reference.landmarks.normalized(),
    )
}

/// Per-pixel weights: 1 inside, ½ on the one-pixel ring around it.
fn feathered(inside: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = inside.to_vec();
    for i in 0..h {
        for j in 0..w {
            if inside[i * w + j] == 1.0 {
                continue;
            }
            let near = neighbours(i, j, h, w, 1).any(|(a, b)| inside[a * w + b] == 1.0);
            if near {
                out[i * w + j] = 0.5;
            }
        }
    }
    out
}

fn neighbours(i: usize, j: usize, h: usize, w: usize, r: usize) -> impl Iterator<Item = (usize, usize)> {
    let rows = i.saturating_sub(r)..(i + r + 1).min(h);
    let cols: Range<usize> = j.saturating_sub(r)..(j + r + 1).min(w);
    rows.flat_map(move |a| cols.clone().map(move |b| (a, b)))
}

/// `base·(1−α) + top·α` per pixel, `α` shared across channels.
fn composite(base: &Tensor, top: &Tensor, alpha: &[f64]) -> Tensor {
    let plane = alpha.len();
    let (b, t) = (base.data(), top.data());
    Tensor::from_fn(base.shape(), |i| {
        let a = alpha[i % plane];
        b[i] * (1.0 - a) + t[i] * a
    })
}

/// Coarse whole-face warp, then lips, brows and eyes warped from their own
/// contour with the remaining landmarks pinning the neighbours. Each part is pasted with a feathered edge wherever either the
/// source has that part or the coarse warp left reference part pixels, so
/// no stray part color survives outside the source shape.
pub fn color_pgt(source: &FaceSample, reference: &FaceSample) -> Result<PseudoGT> {
    check_pair(source, reference)?;
    let (h, w) = (source.height(), source.width());
    let (src, refl) = (source.landmarks.normalized(), reference.landmarks.normalized());
    let coarse = tps_grid(h, w, &src, &refl)?;
    let mut image = warp_image(&reference.image, &coarse)?;
    if std::env::var("PGT_DEBUG").is_ok() {
        crate::io::write_ppm("/tmp/dbg_coarse.ppm", &clamp01(&image)).unwrap();
    }
    let mut parts = Vec::new();
    let mut warnings = Vec::new();
    for label in REFINED_PARTS {
        let Some(range) = part_landmarks(label).filter(|r| r.end <= src.len()) else {
            continue;
        };
        if source.mask.count(label) == 0 {
            continue;
        }
        let centers = with_context(label, &src, range.clone());
        match tps_warp(&reference.image, &centers, &with_context(label, &refl, range)) {
            Ok(part) => {
                let spilled = warp_image(&Tensor::new(&[1, h, w], reference.mask.indicator(&[label]))?, &coarse)?;
                let region: Vec<f64> = source
                    .mask
                    .indicator(&[label])
                    .iter()
                    .zip(spilled.data())
                    .map(|(a, b)| if *a > 0.0 || *b > 0.0 { 1.0 } else { 0.0 })
                    .collect();
                image = composite(&image, &part, &feathered(&region, h, w));
                if std::env::var("PGT_DEBUG").is_ok() {
                    crate::io::write_ppm(format!("/tmp/dbg_{label}.ppm"), &clamp01(&image)).unwrap();
                    crate::io::write_ppm(format!("/tmp/dbg_part{label}.ppm"), &clamp01(&part)).unwrap();
                }
                parts.push(label);
            }
            Err(FatError::Degenerate(why)) => warnings.push(format!("part {label} skipped: {why}")),
            Err(e) => return Err(e),
        }
    }
    parts.sort_unstable();
    Ok(PseudoGT {
        image: clamp01(&image),
        mode: PgtMode::TpsColor,
        parts_refined: parts,
        warnings,
    })
}

fn shifted(mask: &[f64], h: usize, w: usize, di: isize, dj: isize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let (si, sj) = (i - di, j - dj);
            if (0..h as isize).contains(&si) && (0..w as isize).contains(&sj) {
                out[(i as usize) * w + j as usize] = mask[si as usize * w + sj as usize];
            }
        }
    }
    out
}

fn dilate(mask: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            if neighbours(i, j, h, w, r).any(|(a, b)| mask[a * w + b] > 0.0) {
                out[i * w + j] = 1.0;
            }
        }
    }
    out
}

/// Radius of the skin neighbourhood used to fill vacated part pixels.
const FILL_RADIUS: usize = 4;

/// `image` with each `holes` pixel replaced by the mean of the skin pixels
/// within [`FILL_RADIUS`] that are not holes themselves. Holes with no such
/// neighbour keep their value.
fn fill_with_skin(image: &Tensor, mask: &ParsingMask, holes: &[f64]) -> Tensor {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let skin = mask.indicator(&[face::SKIN]);
    let d = image.data();
    let mut out = image.to_vec();
    for i in 0..h {
        for j in 0..w {
            if holes[i * w + j] == 0.0 {
                continue;
            }
            let donors: Vec<usize> = neighbours(i, j, h, w, FILL_RADIUS)
                .map(|(a, b)| a * w + b)
                .filter(|&k| skin[k] > 0.0 && holes[k] == 0.0)
                .collect();
            if donors.is_empty() {
                continue;
            }
            for ch in 0..c {
                let plane = &d[ch * h * w..(ch + 1) * h * w];
                out[ch * h * w + i * w + j] = donors.iter().map(|&k| plane[k]).sum::<f64>() / donors.len() as f64;
            }
        }
    }
    Tensor::new(s, out).expect("same shape")
}

/// Gives `label` the reference part's shape at the source part's place:
/// with `Δ = min_shift(P, Q)`, points `Q − Δ` sample the color GT at `P`.
/// The warp is pasted through the shifted reference part mask dilated by
/// two pixels; source part pixels outside it are refilled from nearby skin.
pub fn spatial_pgt(color_gt: &PseudoGT, source: &FaceSample, reference: &FaceSample, label: u8) -> Result<PseudoGT> {
    check_pair(source, reference)?;
    let range = part_landmarks(label)
        .ok_or_else(|| FatError::param("spatial_pgt", format!("label {label} has no landmarks")))?;
    let mut out = PseudoGT {
        image: color_gt.image.clone(),
        mode: PgtMode::TpsSpatial,
        parts_refined: if color_gt.mode == PgtMode::TpsSpatial {
            color_gt.parts_refined.clone()
        } else {
            Vec::new()
        },
        warnings: color_gt.warnings.clone(),
    };
    if source.mask.count(label) == 0 || reference.mask.count(label) == 0 {
        out.warnings
            .push(format!("part {label} absent; spatial refinement skipped"));
        return Ok(out);
    }
    let p = &source.landmarks.normalized()[range.clone()];
    let q = &reference.landmarks.normalized()[range];
    let delta = min_shift(p, q)?;
    let target: Vec<Point> = q.iter().map(|v| [v[0] - delta[0], v[1] - delta[1]]).collect();
    let warped = match tps_warp(&color_gt.image, &part_contour(label, &target), &part_contour(label, p)) {
        Ok(img) => img,
        Err(FatError::Degenerate(why)) => {
            out.warnings.push(format!("part {label} skipped: {why}"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let (h, w) = (source.height(), source.width());
    let di = (-delta[1] * h as f64 / 2.0).round() as isize;
    let dj = (-delta[0] * w as f64 / 2.0).round() as isize;
    let paste = dilate(&shifted(&reference.mask.indicator(&[label]), h, w, di, dj), h, w, 2);
    let vacated: Vec<f64> = dilate(&source.mask.indicator(&[label]), h, w, 1)
        .iter()
        .zip(&paste)
        .map(|(a, b)| if *a > 0.0 && *b == 0.0 { 1.0 } else { 0.0 })
        .collect();
    let filled = fill_with_skin(&color_gt.image, &source.mask, &vacated);
    out.image = clamp01(&composite(&filled, &warped, &paste));
    if !out.parts_refined.contains(&label) {
        out.parts_refined.push(label);
        out.parts_refined.sort_unstable();
    }
    Ok(out)
}

/// Monotone map of 8-bit source levels onto the reference distribution:
/// midpoint CDF of the source, inverse midpoint CDF of the reference with
/// linear interpolation between populated levels.
pub fn match_histogram(source: &[f64], reference: &[f64]) -> [f64; 256] {
    fn hist(v: &[f64]) -> [usize; 256] {
        let mut h = [0; 256];
        for &x in v {
            h[(x.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
        }
        h
    }
    fn midpoint_cdf(h: &[usize; 256]) -> Vec<(f64, f64)> {
        let n: usize = h.iter().sum();
        let mut below = 0;
        let mut knots = Vec::new();
        for (level, &c) in h.iter().enumerate() {
            if c > 0 {
                knots.push(((below as f64 + 0.5 * c as f64) / n as f64, level as f64 / 255.0));
                below += c;
            }
        }
        knots
    }
    let src = midpoint_cdf(&hist(source));
    let refk = midpoint_cdf(&hist(reference));
    let mut map = [0.0; 256];
    for (level, slot) in map.iter_mut().enumerate() {
        *slot = level as f64 / 255.0;
    }
    for &(q, level) in &src {
        let v = match refk.iter().position(|&(rq, _)| rq >= q) {
            None => refk.last().unwrap().1,
            Some(0) => refk[0].1,
            Some(k) => {
                let (q0, v0) = refk[k - 1];
                let (q1, v1) = refk[k];
                v0 + (v1 - v0) * (q - q0) / (q1 - q0)
            }
        };
        map[(level * 255.0).round() as usize] = v;
    }
    map
}

/// Per region and channel histogram matching of the source onto the
/// reference; background and hair are untouched.
pub fn histogram_pgt(source: &FaceSample, reference: &FaceSample) -> Result<PseudoGT> {
    let (h, w) = (source.height(), source.width());
    let plane = h * w;
    let mut data = source.image.to_vec();
    let (rh, rw) = (reference.height(), reference.width());
    let mut parts = Vec::new();
    let mut warnings = Vec::new();
    for region in HIST_REGIONS {
        let src_idx: Vec<usize> = (0..plane)
            .filter(|&i| region.contains(&source.mask.labels()[i]))
            .collect();
        let ref_idx: Vec<usize> = (0..rh * rw)
            .filter(|&i| region.contains(&reference.mask.labels()[i]))
            .collect();
        if src_idx.is_empty() || ref_idx.is_empty() {
            warnings.push(format!("region {region:?} empty; skipped"));
            continue;
        }
        for c in 0..3 {
            let s: Vec<f64> = src_idx.iter().map(|&i| data[c * plane + i]).collect();
            let r: Vec<f64> = ref_idx
                .iter()
                .map(|&i| reference.image.data()[c * rh * rw + i])
                .collect();
            let map = match_histogram(&s, &r);
            for &i in &src_idx {
                let v = &mut data[c * plane + i];
                *v = map[(v.clamp(0.0, 1.0) * 255.0).round() as usize];
            }
        }
        parts.extend_from_slice(region);
    }
    parts.sort_unstable();
    Ok(PseudoGT {
        image: Tensor::new(source.image.shape(), data)?,
        mode: PgtMode::Histogram,
        parts_refined: parts,
        warnings,
    })
}

/// Coarse-warped reference blended over the source on labels 1–6.
pub fn blend_pgt(source: &FaceSample, reference: &FaceSample, alpha: f64) -> Result<PseudoGT> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FatError::param("blend_pgt", format!("alpha {alpha} outside [0, 1]")));
    }
    let warped = coarse_warp(source, reference)?;
    let face: Vec<u8> = (face::SKIN..=face::LIPS).collect();
    let weights: Vec<f64> = source.mask.indicator(&face).iter().map(|m| m * alpha).collect();
    Ok(PseudoGT {
        image: clamp01(&composite(&source.image, &warped, &weights)),
        mode: PgtMode::Blend,
        parts_refined: face,
        warnings: Vec::new(),
    })
}

/// Mean absolute difference of two `3×H×W` images over the pixels whose
/// mask label is in `labels`; `None` when no pixel qualifies.
pub fn region_mae(a: &Tensor, b: &Tensor, mask: &ParsingMask, labels: &[u8]) -> Option<f64> {
    let gate = mask.indicator(labels);
    let plane = gate.len();
    let n = gate.iter().sum::<f64>();
    if n == 0.0 {
        return None;
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .enumerate()
        .map(|(i, (x, y))| gate[i % plane] * (x - y).abs())
        .sum();
    Some(total / (3.0 * n))
}

/// Earth mover's distance between two 1-D samples of 8-bit levels.
pub fn emd(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |v: &[f64]| {
        let mut h = [0.0; 256];
        for &x in v {
            h[(x.clamp(0.0, 1.0) * 255.0).round() as usize] += 1.0 / v.len() as f64;
        }
        let mut acc = 0.0;
        h.map(|p| {
            acc += p;
            acc
        })
    };
    let (ca, cb) = (cdf(a), cdf(b));
    ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 255.0
}

//! Parametric cartoon faces with exact landmarks and parsing masks.
//!
//! Geometry lives in face-local coordinates measured in image widths,
//! origin at the face center, y pointing down. The pose rotates and shifts
//! that frame into the image; landmarks and mask come from the same curves
//! that paint the image, so they agree exactly.

use std::fmt;

use fat_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FatError, Result};
use crate::face::{self, FaceSample, LandmarkSet, ParsingMask, NUM_LANDMARKS};
use crate::tps::Point;

pub type Rgb = [f64; 3];

const FACE_AXES: [f64; 2] = [0.30, 0.38];
const FACE_CENTER: [f64; 2] = [0.5, 0.52];
const HAIR_CENTER: [f64; 2] = [0.0, -0.05];
const HAIR_AXES: [f64; 2] = [0.36, 0.45];
const BROW_CENTERS: [[f64; 2]; 2] = [[-0.13, -0.15], [0.13, -0.15]];
const BROW_HALF_LEN: f64 = 0.075;
const EYE_CENTERS: [[f64; 2]; 2] = [[-0.13, -0.06], [0.13, -0.06]];
const EYE_AXES: [f64; 2] = [0.055, 0.026];
const LIP_CENTER: [f64; 2] = [0.0, 0.2];
const LIP_AXES: [f64; 2] = [0.11, 0.05];
const SUPERSAMPLE: usize = 4;

const PART_LABELS: [u8; 5] = [
    face::LEFT_BROW,
    face::RIGHT_BROW,
    face::LEFT_EYE,
    face::RIGHT_EYE,
    face::LIPS,
];

/// Sample group, mirroring a makeup / no-makeup split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Plain,
    Makeup,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Plain => "plain",
            Group::Makeup => "makeup",
        })
    }
}

impl std::str::FromStr for Group {
    type Err = FatError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Group::Plain),
            "makeup" => Ok(Group::Makeup),
            other => Err(FatError::param("group", format!("unknown group {other:?}"))),
        }
    }
}

/// Everything that determines one synthetic face.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthFaceParams {
    /// Square image side in pixels, at least 32.
    pub size: usize,
    pub skin: Rgb,
    pub lip: Rgb,
    pub eye_shadow: Rgb,
    /// Shadow ellipse scale relative to the eye, in `[1.2, 2.5]`.
    pub shadow_radius: f64,
    /// Shadow opacity in `[0, 1]`.
    pub shadow_alpha: f64,
    pub brow: Rgb,
    pub hair: Rgb,
    pub background: Rgb,
    /// Brow arch κ in `[-0.5, 0.5]`; 0 is straight, positive arches up.
    pub brow_curvature: f64,
    /// Brow half-thickness in image widths, `[0.008, 0.03]`.
    pub brow_thickness: f64,
    /// Rotation in degrees, `[-15, 15]`.
    pub rotation_deg: f64,
    /// Center offset in image widths, each in `[-0.05, 0.05]`.
    pub offset: [f64; 2],
    /// Left-to-right darkening across the face, `[0, 0.5]`.
    pub shading: f64,
    /// Uniform pixel noise amplitude, `[0, 0.05]`.
    pub noise: f64,
    pub seed: u64,
}

fn color_ok(c: &Rgb) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl SynthFaceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FatError::param("synth_face", format!("{what} out of range")));
        if self.size < 32 {
            return bad("size");
        }
        for (name, c) in [
            ("skin", &self.skin),
            ("lip", &self.lip),
            ("eye_shadow", &self.eye_shadow),
            ("brow", &self.brow),
            ("hair", &self.hair),
            ("background", &self.background),
        ] {
            if !color_ok(c) {
                return bad(name);
            }
        }
        let checks = [
            ("shadow_radius", (1.2..=2.5).contains(&self.shadow_radius)),
            ("shadow_alpha", (0.0..=1.0).contains(&self.shadow_alpha)),
            ("brow_curvature", (-0.5..=0.5).contains(&self.brow_curvature)),
            ("brow_thickness", (0.008..=0.03).contains(&self.brow_thickness)),
            ("rotation_deg", (-15.0..=15.0).contains(&self.rotation_deg)),
            ("offset", self.offset.iter().all(|o| (-0.05..=0.05).contains(o))),
            ("shading", (0.0..=0.5).contains(&self.shading)),
            ("noise", (0.0..=0.05).contains(&self.noise)),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => bad(name),
            None => Ok(()),
        }
    }

    /// Draws random parameters for a face of the given group.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, size: usize, group: Group) -> Self {
        let jitter = |rng: &mut R, c: Rgb, a: f64| -> Rgb { c.map(|v| (v + rng.random_range(-a..=a)).clamp(0.0, 1.0)) };
        let skin = jitter(rng, [0.86, 0.70, 0.58], 0.08);
        let (lip, eye_shadow, shadow_alpha) = match group {
            Group::Plain => {
                let natural = [0.78, 0.52, 0.50];
                let lip = jitter(rng, mix(skin, natural, 0.7), 0.03);
                (lip, jitter(rng, [0.6, 0.45, 0.4], 0.05), rng.random_range(0.0..0.1))
            }
            Group::Makeup => {
                const LIPS: [Rgb; 4] = [
                    [0.80, 0.06, 0.16],
                    [0.58, 0.05, 0.35],
                    [0.90, 0.30, 0.10],
                    [0.55, 0.02, 0.10],
                ];
                const SHADOWS: [Rgb; 4] = [
                    [0.50, 0.20, 0.60],
                    [0.35, 0.20, 0.12],
                    [0.20, 0.30, 0.65],
                    [0.60, 0.25, 0.30],
                ];
                let (li, si) = (rng.random_range(0..LIPS.len()), rng.random_range(0..SHADOWS.len()));
                let lip = jitter(rng, LIPS[li], 0.05);
                let sh = jitter(rng, SHADOWS[si], 0.05);
                (lip, sh, rng.random_range(0.5..0.9))
            }
        };
        SynthFaceParams {
            size,
            skin,
            lip,
            eye_shadow,
            shadow_radius: rng.random_range(1.4..2.2),
            shadow_alpha,
            brow: jitter(rng, [0.25, 0.18, 0.12], 0.07),
            hair: jitter(rng, [0.25, 0.17, 0.10], 0.12),
            background: jitter(rng, [0.55, 0.65, 0.70], 0.2),
            brow_curvature: rng.random_range(-0.5..=0.5),
            brow_thickness: rng.random_range(0.014..0.024),
            rotation_deg: rng.random_range(-15.0..=15.0),
            offset: [rng.random_range(-0.04..=0.04), rng.random_range(-0.04..=0.04)],
            shading: rng.random_range(0.0..0.3),
            noise: 0.01,
            seed: rng.random(),
        }
    }
}

fn mix(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

fn in_ellipse(p: [f64; 2], c: [f64; 2], ax: [f64; 2]) -> f64 {
    ((p[0] - c[0]) / ax[0]).powi(2) + ((p[1] - c[1]) / ax[1]).powi(2)
}

/// Pose transform between face-local and `[0, 1]²` image coordinates.
struct Pose {
    cos: f64,
    sin: f64,
    center: [f64; 2],
}

impl Pose {
    fn new(p: &SynthFaceParams) -> Self {
        let th = p.rotation_deg.to_radians();
        Pose {
            cos: th.cos(),
            sin: th.sin(),
            center: [FACE_CENTER[0] + p.offset[0], FACE_CENTER[1] + p.offset[1]],
        }
    }

    fn to_image(&self, l: [f64; 2]) -> Point {
        [
            self.center[0] + self.cos * l[0] - self.sin * l[1],
            self.center[1] + self.sin * l[0] + self.cos * l[1],
        ]
    }

    fn to_local(&self, p: Point) -> [f64; 2] {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        [self.cos * d[0] + self.sin * d[1], -self.sin * d[0] + self.cos * d[1]]
    }
}

/// Brow centerline at parameter `t ∈ [-1, 1]`.
fn brow_point(side: usize, kappa: f64, t: f64) -> [f64; 2] {
    let c = BROW_CENTERS[side];
    [c[0] + t * BROW_HALF_LEN, c[1] - kappa * BROW_HALF_LEN * (1.0 - t * t)]
}

struct Painter<'a> {
    p: &'a SynthFaceParams,
}

impl Painter<'_> {
    fn brow_side(&self, l: [f64; 2]) -> Option<usize> {
        (0..2).find(|&side| {
            let t = (l[0] - BROW_CENTERS[side][0]) / BROW_HALF_LEN;
            if t.abs() > 1.0 {
                return false;
            }
            let y = brow_point(side, self.p.brow_curvature, t)[1];
            let half = self.p.brow_thickness * (0.55 + 0.45 * (1.0 - t * t));
            (l[1] - y).abs() <= half
        })
    }

    fn label(&self, l: [f64; 2]) -> u8 {
        if in_ellipse(l, LIP_CENTER, LIP_AXES) <= 1.0 {
            return face::LIPS;
        }
        if let Some(side) = self.brow_side(l) {
            return [face::LEFT_BROW, face::RIGHT_BROW][side];
        }
        for side in 0..2 {
            if in_ellipse(l, EYE_CENTERS[side], EYE_AXES) <= 1.0 {
                return [face::LEFT_EYE, face::RIGHT_EYE][side];
            }
        }
        if in_ellipse(l, [0.0, 0.0], FACE_AXES) <= 1.0 {
            return face::SKIN;
        }
        if in_ellipse(l, HAIR_CENTER, HAIR_AXES) <= 1.0 && l[1] < 0.1 {
            return face::HAIR;
        }
        face::BACKGROUND
    }

    fn color(&self, l: [f64; 2]) -> Rgb {
        let p = self.p;
        let label = self.label(l);
        let base = match label {
            face::BACKGROUND => return p.background,
            face::HAIR => return p.hair,
            face::LIPS => p.lip,
            face::LEFT_BROW | face::RIGHT_BROW => p.brow,
            face::LEFT_EYE | face::RIGHT_EYE => {
                let c = EYE_CENTERS[(label - face::LEFT_EYE) as usize];
                if in_ellipse(l, c, [EYE_AXES[1] * 0.9, EYE_AXES[1] * 0.9]) <= 1.0 {
                    [0.18, 0.12, 0.08]
                } else {
                    [0.95, 0.95, 0.93]
                }
            }
            _ => {
                let mut skin = p.skin;
                for c in EYE_CENTERS {
                    let axes = EYE_AXES.map(|a| a * p.shadow_radius);
                    let r = in_ellipse(l, c, axes);
                    if r < 1.0 {
                        skin = mix(skin, p.eye_shadow, p.shadow_alpha * (1.0 - r).sqrt());
                    }
                }
                skin
            }
        };
        let shade = 1.0 - p.shading * ((l[0] / FACE_AXES[0]).clamp(-1.0, 1.0) + 1.0) * 0.5;
        base.map(|v| v * shade)
    }
}

/// Landmarks in face-local coordinates, schema order.
fn local_landmarks(p: &SynthFaceParams) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(NUM_LANDMARKS);
    for deg in [-90.0f64, -30.0, 30.0, 90.0, 150.0, 210.0] {
        let a = deg.to_radians();
        pts.push([0.96 * FACE_AXES[0] * a.cos(), 0.96 * FACE_AXES[1] * a.sin()]);
    }
    for side in 0..2 {
        for t in [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0] {
            pts.push(brow_point(side, p.brow_curvature, t));
        }
    }
    for c in EYE_CENTERS {
        let [a, b] = EYE_AXES;
        pts.extend([
            [c[0] - 0.7 * a, c[1]],
            [c[0], c[1] - 0.5 * b],
            [c[0] + 0.7 * a, c[1]],
            [c[0], c[1] + 0.5 * b],
        ]);
    }
    let [a, b] = LIP_AXES;
    let c = LIP_CENTER;
    pts.extend([
        [c[0] - 0.8 * a, c[1]],
        [c[0] - 0.4 * a, c[1] - 0.5 * b],
        [c[0] + 0.4 * a, c[1] - 0.5 * b],
        [c[0] + 0.8 * a, c[1]],
        [c[0] + 0.4 * a, c[1] + 0.5 * b],
        [c[0] - 0.4 * a, c[1] + 0.5 * b],
    ]);
    pts.extend([[0.0, -0.02], [0.0, 0.1]]);
    debug_assert_eq!(pts.len(), NUM_LANDMARKS);
    pts
}

/// Renders a face: 4×4 supersampled colors quantized to 8 bits, the mask
/// from pixel centers except that a pixel any brow, eye or lip subsample
/// touches takes that part, landmarks from the same parametric curves.
pub fn synth_face(params: &SynthFaceParams) -> Result<FaceSample> {
    params.validate()?;
    let n = params.size;
    let pose = Pose::new(params);
    let painter = Painter { p: params };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut image = vec![0.0; 3 * n * n];
    let mut labels = Vec::with_capacity(n * n);
    let inv = 1.0 / n as f64;
    let sub = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for i in 0..n {
        for j in 0..n {
            let mut acc = [0.0; 3];
            let mut hits = [0usize; face::MAX_LABEL as usize + 1];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = (j as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) * inv;
                    let py = (i as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) * inv;
                    let l = pose.to_local([px, py]);
                    let c = painter.color(l);
                    hits[painter.label(l) as usize] += 1;
                    acc.iter_mut().zip(c).for_each(|(a, v)| *a += v * sub);
                }
            }
            for (ch, v) in acc.into_iter().enumerate() {
                let noisy = v + params.noise * rng.random_range(-1.0..=1.0);
                image[(ch * n + i) * n + j] = quantize(noisy);
            }
            let center = [(j as f64 + 0.5) * inv, (i as f64 + 0.5) * inv];
            let mut label = painter.label(pose.to_local(center));
            if !PART_LABELS.contains(&label) {
                // Thin parts keep every pixel they touch.
                let best = PART_LABELS
                    .into_iter()
                    .max_by_key(|&p| (hits[p as usize], std::cmp::Reverse(p)));
                if let Some(p) = best.filter(|&p| hits[p as usize] > 0) {
                    label = p;
                }
            }
            labels.push(label);
        }
    }
    let landmarks = local_landmarks(params)
        .into_iter()
        .map(|l| {
            let p = pose.to_image(l);
            [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
        })
        .collect();
    FaceSample::new(
        Tensor::new(&[3, n, n], image)?,
        LandmarkSet::new(landmarks)?,
        ParsingMask::new(n, n, labels)?,
    )
}

/// Rounds to the nearest 8-bit level, as stored on disk.
pub fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Deterministic parameters of sample `index` in a corpus: even indices
/// are plain, odd ones carry makeup.
pub fn corpus_params(index: usize, size: usize, seed: u64) -> (Group, SynthFaceParams) {
    let group = if index % 2 == 0 { Group::Plain } else { Group::Makeup };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    (group, SynthFaceParams::sample(&mut rng, size, group))
}

/// `count` faces in memory, rendered in parallel.
pub fn synth_corpus(count: usize, size: usize, seed: u64) -> Result<Vec<(Group, FaceSample)>> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let (g, p) = corpus_params(i, size, seed);
            Ok((g, synth_face(&p)?))
        })
        .collect()
}

/// `count` (plain source, makeup reference) pairs.
pub fn synth_pairs(count: usize, size: usize, seed: u64) -> Result<Vec<(FaceSample, FaceSample)>> {
    let faces = synth_corpus(2 * count, size, seed)?;
    let mut it = faces.into_iter();
    let mut pairs = Vec::with_capacity(count);
    while let (Some((_, plain)), Some((_, makeup))) = (it.next(), it.next()) {
        pairs.push((plain, makeup));
    }
    Ok(pairs)
}

//! Thin-plate-spline geometry in normalized `[-1, 1]²` coordinates.
//!
//! A transform is the `2×(K+3)` coefficient matrix
//! `T = [a₀ a₁ a₂ u; b₀ b₁ b₂ v]` with `p' = T·[1, x, y, φ(‖p−c₁‖), …, φ(‖p−c_K‖)]ᵀ`,
//! solved in closed form from `K` control-point pairs under the side
//! conditions `u·1 = v·1 = 0`, `u·Cx = v·Cx = 0`, `u·Cy = v·Cy = 0`.

use std::fmt::Write as _;
use std::path::Path;

use fat_tensor::{normalize, Tensor};

use crate::error::{FatError, Result};
use crate::lu::{norm1, Lu};

pub type Point = [f64; 2];

/// Largest 1-norm condition number accepted for the TPS system.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `φ(r) = r² ln r`, continuously extended with `φ(0) = 0`.
pub fn radial_kernel(r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(FatError::param(
            "radial_kernel",
            format!("radius must be nonnegative, got {r}"),
        ));
    }
    Ok(phi(r))
}

#[inline]
fn phi(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Paired source/target control points.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPoints {
    pub source: Vec<Point>,
    pub target: Vec<Point>,
}

impl ControlPoints {
    pub fn new(source: Vec<Point>, target: Vec<Point>) -> Result<Self> {
        if source.len() != target.len() {
            return Err(FatError::param(
                "control_points",
                format!("{} source points but {} targets", source.len(), target.len()),
            ));
        }
        if source.len() < 4 {
            return Err(FatError::param(
                "control_points",
                format!("need at least 4 control points, got {}", source.len()),
            ));
        }
        if let Some(p) = source
            .iter()
            .chain(&target)
            .find(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(FatError::param("control_points", format!("non-finite point {p:?}")));
        }
        Ok(ControlPoints { source, target })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Names the first geometric defect that makes `pts` unusable as TPS centers.
pub fn geometry_defect(pts: &[Point]) -> Option<String> {
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if dist(pts[i], pts[j]) < 1e-12 {
                return Some(format!("points {i} and {j} coincide at {:?}", pts[i]));
            }
        }
    }
    let (far, span) = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (i, dist(*p, pts[0])))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if span == 0.0 {
        return Some("all points coincide".into());
    }
    let d = [(pts[far][0] - pts[0][0]) / span, (pts[far][1] - pts[0][1]) / span];
    let off_line = pts
        .iter()
        .map(|p| ((p[0] - pts[0][0]) * d[1] - (p[1] - pts[0][1]) * d[0]).abs())
        .fold(0.0, f64::max);
    if off_line <= 1e-10 * span {
        return Some(format!("all {} points are collinear", pts.len()));
    }
    None
}

/// Basis vector `[1, x, y, φ(‖p−c₁‖), …]` of a point.
fn lift(p: Point, centers: &[Point]) -> Vec<f64> {
    let mut b = Vec::with_capacity(centers.len() + 3);
    b.extend([1.0, p[0], p[1]]);
    b.extend(centers.iter().map(|&c| phi(dist(p, c))));
    b
}

/// Row-major `(K+3)×(K+3)` system matrix Δ_C: column `i < K` is the lifted
/// control point `c_i`; the last three columns encode the side conditions.
fn system_matrix(c: &[Point]) -> Vec<f64> {
    let k = c.len();
    let n = k + 3;
    let mut m = vec![0.0; n * n];
    for (i, &ci) in c.iter().enumerate() {
        for (r, v) in lift(ci, c).into_iter().enumerate() {
            m[r * n + i] = v;
        }
        m[(3 + i) * n + k] = 1.0;
        m[(3 + i) * n + k + 1] = ci[0];
        m[(3 + i) * n + k + 2] = ci[1];
    }
    m
}

fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = a[r * n + c];
        }
    }
    t
}

/// Factored Δ_C for a fixed set of centers, checked for conditioning.
#[derive(Clone, Debug)]
pub struct TpsSystem {
    centers: Vec<Point>,
    lu: Lu,
    lu_t: Lu,
    condition: f64,
}

impl TpsSystem {
    pub fn new(centers: &[Point]) -> Result<Self> {
        if centers.len() < 4 {
            return Err(FatError::Degenerate(format!(
                "need at least 4 control points, got {}",
                centers.len()
            )));
        }
        if let Some(defect) = geometry_defect(centers) {
            return Err(FatError::Degenerate(defect));
        }
        let n = centers.len() + 3;
        let m = system_matrix(centers);
        let singular = || FatError::Degenerate(format!("singular system for {} control points", centers.len()));
        let lu = Lu::factor(m.clone(), n).ok_or_else(singular)?;
        let condition = norm1(&m, n) * norm1(&lu.inverse(), n);
        if !(condition <= CONDITION_LIMIT) {
            return Err(FatError::Degenerate(format!(
                "condition number {condition:.3e} of {} control points exceeds {CONDITION_LIMIT:e}",
                centers.len()
            )));
        }
        let lu_t = Lu::factor(transpose(&m, n), n).ok_or_else(singular)?;
        Ok(TpsSystem {
            centers: centers.to_vec(),
            lu,
            lu_t,
            condition,
        })
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `T = [C', 0] Δ_C⁻¹`, computed as the solve `Δ_Cᵀ Tᵀ = [C', 0]ᵀ`.
    pub fn solve(&self, targets: &[Point]) -> Result<TpsTransform> {
        let k = self.centers.len();
        if targets.len() != k {
            return Err(FatError::param(
                "tps_solve",
                format!("{k} centers but {} targets", targets.len()),
            ));
        }
        let mut coef = Vec::with_capacity(2 * (k + 3));
        for axis in 0..2 {
            let mut rhs: Vec<f64> = targets.iter().map(|p| p[axis]).collect();
            rhs.extend([0.0; 3]);
            coef.extend(self.lu_t.solve(&rhs));
        }
        Ok(TpsTransform {
            coef,
            centers: self.centers.clone(),
        })
    }

    /// Weights `w(p) = (Δ_C⁻¹ b(p))[..K]` with `tps(p) = Σᵢ wᵢ(p)·c'ᵢ` for
    /// every target set, as a `(h·w)×K` row-major matrix over the pixel
    /// centers of an `h×w` grid.
    pub fn grid_weights(&self, h: usize, w: usize) -> Vec<f64> {
        let k = self.centers.len();
        let mut out = Vec::with_capacity(h * w * k);
        for i in 0..h {
            for j in 0..w {
                let p = [normalize(j as f64, w), normalize(i as f64, h)];
                out.extend_from_slice(&self.lu.solve(&lift(p, &self.centers))[..k]);
            }
        }
        out
    }
}

/// Solved thin-plate spline.
#[derive(Clone, Debug, PartialEq)]
pub struct TpsTransform {
    /// Row-major `2×(K+3)`.
    coef: Vec<f64>,
    centers: Vec<Point>,
}

/// Solves the interpolating TPS mapping each `source[i]` to `target[i]`.
pub fn tps_solve(cp: &ControlPoints) -> Result<TpsTransform> {
    TpsSystem::new(&cp.source)?.solve(&cp.target)
}

impl TpsTransform {
    pub fn num_points(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// `[[a₀, a₁, a₂], [b₀, b₁, b₂]]`.
    pub fn affine(&self) -> [[f64; 3]; 2] {
        let n = self.centers.len() + 3;
        [
            [self.coef[0], self.coef[1], self.coef[2]],
            [self.coef[n], self.coef[n + 1], self.coef[n + 2]],
        ]
    }

    /// Kernel weights `(u, v)`.
    pub fn kernel_weights(&self) -> (&[f64], &[f64]) {
        let n = self.centers.len() + 3;
        (&self.coef[3..n], &self.coef[n + 3..])
    }

    /// Residuals of `u·1, v·1, u·Cx, v·Cy`.
    pub fn boundary_residuals(&self) -> [f64; 4] {
        let (u, v) = self.kernel_weights();
        let dot = |w: &[f64], axis: Option<usize>| -> f64 {
            w.iter()
                .zip(&self.centers)
                .map(|(wi, c)| wi * axis.map_or(1.0, |a| c[a]))
                .sum()
        };
        [dot(u, None), dot(v, None), dot(u, Some(0)), dot(v, Some(1))]
    }

    pub fn apply(&self, p: Point) -> Point {
        let n = self.centers.len() + 3;
        let b = lift(p, &self.centers);
        let x = self.coef[..n].iter().zip(&b).map(|(a, b)| a * b).sum();
        let y = self.coef[n..].iter().zip(&b).map(|(a, b)| a * b).sum();
        [x, y]
    }

    /// Sampling grid over the pixel centers of an `h×w` output.
    pub fn grid(&self, h: usize, w: usize) -> Result<SampleGrid> {
        if h < 2 || w < 2 {
            return Err(FatError::param(
                "tps_grid",
                format!("grid must be at least 2×2, got {h}×{w}"),
            ));
        }
        let mut data = Vec::with_capacity(h * w * 2);
        for i in 0..h {
            for j in 0..w {
                data.extend(self.apply([normalize(j as f64, w), normalize(i as f64, h)]));
            }
        }
        Ok(SampleGrid(Tensor::new(&[h, w, 2], data)?))
    }
}

/// `h×w×2` normalized sampling coordinates: output pixel `(i, j)` reads the
/// input at `grid[i, j]`.
#[derive(Clone, Debug)]
pub struct SampleGrid(pub Tensor);

impl SampleGrid {
    pub fn identity(h: usize, w: usize) -> Self {
        SampleGrid(fat_tensor::identity_grid(h, w))
    }

    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn at(&self, i: usize, j: usize) -> Point {
        let w = self.width();
        let d = self.0.data();
        [d[(i * w + j) * 2], d[(i * w + j) * 2 + 1]]
    }
}

/// Bilinear warp of a `C×H×W` image through `grid`, clamping at the border.
pub fn warp_image(image: &Tensor, grid: &SampleGrid) -> Result<Tensor> {
    Ok(image.grid_sample(&grid.0)?)
}

/// The translation `Δ` minimizing `Σ‖Pⁱ − (Qⁱ − Δ)‖²`: the mean of `Qⁱ − Pⁱ`.
pub fn min_shift(p: &[Point], q: &[Point]) -> Result<Point> {
    if p.len() != q.len() || p.is_empty() {
        return Err(FatError::param(
            "min_shift",
            format!("need equally many points (≥1), got {} and {}", p.len(), q.len()),
        ));
    }
    let n = p.len() as f64;
    let (sx, sy) = p
        .iter()
        .zip(q)
        .fold((0.0, 0.0), |(sx, sy), (a, b)| (sx + b[0] - a[0], sy + b[1] - a[1]));
    Ok([sx / n, sy / n])
}

/// Writes the `FATPTS 1 <K>` point-set text format.
pub fn format_points(points: &[Point]) -> String {
    let mut s = format!("FATPTS 1 {}\n", points.len());
    for p in points {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    s
}

pub fn parse_points(text: &str, origin: &str) -> Result<Vec<Point>> {
    let fmt_err = |offset: usize, msg: String| FatError::Format {
        path: origin.to_string(),
        offset: offset as u64,
        msg,
    };
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().ok_or_else(|| fmt_err(0, "empty point file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let count = match fields.as_slice() {
        ["FATPTS", "1", k] => k
            .parse::<usize>()
            .map_err(|_| fmt_err(0, format!("bad point count {k:?}")))?,
        _ => return Err(fmt_err(0, format!("bad header {:?}", header.trim_end()))),
    };
    offset += header.len();
    let mut pts = Vec::with_capacity(count);
    for line in lines {
        if line.trim().is_empty() {
            offset += line.len();
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt_err(offset, format!("bad coordinate: {e}")))?;
        if vals.len() != 2 || vals.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(fmt_err(
                offset,
                format!("expected two reals in [-1, 1], got {:?}", line.trim_end()),
            ));
        }
        pts.push([vals[0], vals[1]]);
        offset += line.len();
    }
    if pts.len() != count {
        return Err(fmt_err(
            offset,
            format!("header promises {count} points, found {}", pts.len()),
        ));
    }
    Ok(pts)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FatError::io(path, e))?;
    parse_points(&text, &path.display().to_string())
}

pub fn write_points(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_points(points)).map_err(|e| FatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Point> {
        vec![[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5], [0.1, 0.2]]
    }

    #[test]
    fn kernel_values() {
        assert_eq!(radial_kernel(0.0).unwrap(), 0.0);
        assert_eq!(radial_kernel(1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((radial_kernel(e).unwrap() - e * e).abs() < 1e-12);
        assert!(radial_kernel(-1.0).is_err());
    }

    #[test]
    fn identity_solve() {
        let t = tps_solve(&ControlPoints::new(square(), square()).unwrap()).unwrap();
        let a = t.affine();
        let want = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for r in 0..2 {
            for c in 0..3 {
                assert!((a[r][c] - want[r][c]).abs() < 1e-9);
            }
        }
        let (u, v) = t.kernel_weights();
        assert!(u.iter().chain(v).all(|w| w.abs() < 1e-9));
        let p = t.apply([0.3, -0.7]);
        assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn defects_are_named() {
        let dup = vec![[0.0, 0.0], [0.5, 0.5], [0.0, 0.0], [1.0, 0.0]];
        assert!(geometry_defect(&dup).unwrap().contains("coincide"));
        let line = vec![[0.0, 0.0], [0.1, 0.1], [0.2, 0.2], [0.9, 0.9]];
        assert!(geometry_defect(&line).unwrap().contains("collinear"));
        let err = TpsSystem::new(&line).unwrap_err();
        assert!(matches!(err, FatError::Degenerate(_)));
        assert!(geometry_defect(&square()).is_none());
    }

    #[test]
    fn point_file_errors() {
        assert!(parse_points("FATPTS 1 2\n0 0\n", "p").is_err());
        assert!(parse_points("FATPTS 2 1\n0 0\n", "p").is_err());
        assert!(parse_points("FATPTS 1 1\n0 3\n", "p").is_err());
        match parse_points("FATPTS 1 2\n0 0\nx 1\n", "p").unwrap_err() {
            FatError::Format { offset, .. } => assert_eq!(offset, 15),
            e => panic!("{e:?}"),
        }
        let pts = vec![[0.25, -1.0], [1.0, 0.125]];
        assert_eq!(parse_points(&format_points(&pts), "p").unwrap(), pts);
    }
}

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Normalized coordinate in `[-1, 1]` to a pixel index position, where pixel
/// `j` of an extent-`n` axis has its center at `(2j+1)/n - 1`.
#[inline]
pub fn denormalize(g: f64, n: usize) -> f64 {
    ((g + 1.0) * n as f64 - 1.0) * 0.5
}

#[inline]
pub fn normalize(p: f64, n: usize) -> f64 {
    (2.0 * p + 1.0) / n as f64 - 1.0
}

/// Bilinear taps for one axis: (lower index, upper index, upper weight,
/// d(position)/d(normalized) or 0 when clamped).
#[inline]
fn taps(g: f64, n: usize) -> (usize, usize, f64, f64) {
    let mut p = denormalize(g, n);
    // snap round-off so identity grids reproduce pixels bit-exactly
    let r = p.round();
    if (p - r).abs() < 1e-12 {
        p = r;
    }
    let hi = (n - 1) as f64;
    let (p, slope) = if p < 0.0 {
        (0.0, 0.0)
    } else if p > hi {
        (hi, 0.0)
    } else {
        (p, n as f64 * 0.5)
    };
    let i0 = (p.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, p - i0 as f64, slope)
}

impl Tensor {
    /// Bilinear sampling of `C×H×W` at an `H'×W'×2` grid of normalized
    /// `(x, y)` coordinates. Out-of-range samples clamp to the border.
    pub fn grid_sample(&self, grid: &Tensor) -> Result<Tensor> {
        if self.rank() != 3 || grid.rank() != 3 || grid.shape()[2] != 2 {
            return Err(dim_err("grid_sample", self.shape(), grid.shape()));
        }
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (oh, ow) = (grid.shape()[0], grid.shape()[1]);
        let (plane, oplane) = (h * w, oh * ow);
        let gd = grid.data();
        let x = self.data();
        let mut out = vec![0.0; c * oplane];
        for o in 0..oplane {
            let (x0, x1, wx, _) = taps(gd[2 * o], w);
            let (y0, y1, wy, _) = taps(gd[2 * o + 1], h);
            for ci in 0..c {
                let p = &x[ci * plane..];
                let top = p[y0 * w + x0] * (1.0 - wx) + p[y0 * w + x1] * wx;
                let bot = p[y1 * w + x0] * (1.0 - wx) + p[y1 * w + x1] * wx;
                out[ci * oplane + o] = top * (1.0 - wy) + bot * wy;
            }
        }
        let (xs, gs) = (self.clone(), grid.clone());
        Ok(Tensor::from_op(
            vec![c, oh, ow],
            out,
            "grid_sample",
            vec![self.clone(), grid.clone()],
            Box::new(move |g, _, needs| {
                let x = xs.data();
                let gd = gs.data();
                let mut gx = needs[0].then(|| vec![0.0; c * plane]);
                let mut gg = needs[1].then(|| vec![0.0; 2 * oplane]);
                for o in 0..oplane {
                    let (x0, x1, wx, sx) = taps(gd[2 * o], w);
                    let (y0, y1, wy, sy) = taps(gd[2 * o + 1], h);
                    let (mut dgx, mut dgy) = (0.0, 0.0);
                    for ci in 0..c {
                        let go = g[ci * oplane + o];
                        if let Some(gx) = gx.as_mut() {
                            let p = &mut gx[ci * plane..];
                            p[y0 * w + x0] += go * (1.0 - wx) * (1.0 - wy);
                            p[y0 * w + x1] += go * wx * (1.0 - wy);
                            p[y1 * w + x0] += go * (1.0 - wx) * wy;
                            p[y1 * w + x1] += go * wx * wy;
                        }
                        if gg.is_some() {
                            let p = &x[ci * plane..];
                            let (v00, v01) = (p[y0 * w + x0], p[y0 * w + x1]);
                            let (v10, v11) = (p[y1 * w + x0], p[y1 * w + x1]);
                            dgx += go * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
                            dgy += go * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
                        }
                    }
                    if let Some(gg) = gg.as_mut() {
                        gg[2 * o] = dgx * sx;
                        gg[2 * o + 1] = dgy * sy;
                    }
                }
                vec![gx, gg]
            }),
        ))
    }
}

/// Grid whose samples land exactly on the output pixel centers.
pub fn identity_grid(h: usize, w: usize) -> Tensor {
    let mut data = Vec::with_capacity(h * w * 2);
    for i in 0..h {
        for j in 0..w {
            data.push(normalize(j as f64, w));
            data.push(normalize(i as f64, h));
        }
    }
    Tensor::new(&[h, w, 2], data).expect("grid shape")
}

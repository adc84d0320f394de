//! Single-level pyramid reconstruction: the high-frequency residual of the
//! original crop is added back onto the upsampled low-resolution output.

use fat_tensor::{identity_grid, Tensor};

use crate::error::{FatError, Result};

/// Pixel rectangle inside a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl std::str::FromStr for CropBox {
    type Err = FatError;

    /// `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| FatError::param("crop_box", format!("expected x,y,w,h, got {s:?}")))?;
        match v[..] {
            [x, y, width, height] => Ok(CropBox { x, y, width, height }),
            _ => Err(FatError::param(
                "crop_box",
                format!("expected 4 fields, got {}", v.len()),
            )),
        }
    }
}

/// Bilinear resampling of `C×H×W` to `C×h×w` on pixel centers, border
/// clamped. Same-size resampling is the identity.
pub fn resize(image: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    if image.rank() != 3 || h == 0 || w == 0 {
        return Err(FatError::param(
            "resize",
            format!("cannot resize {:?} to {h}×{w}", image.shape()),
        ));
    }
    Ok(image.detach().grid_sample(&identity_grid(h, w))?)
}

fn crop(frame: &Tensor, b: CropBox) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 || b.width == 0 || b.height == 0 || b.x + b.width > s[2] || b.y + b.height > s[1] {
        return Err(FatError::param("crop", format!("box {b:?} outside frame {s:?}")));
    }
    let (c, fw) = (s[0], s[2]);
    let d = frame.data();
    let mut out = Vec::with_capacity(c * b.width * b.height);
    for ch in 0..c {
        for i in b.y..b.y + b.height {
            let row = (ch * s[1] + i) * fw;
            out.extend_from_slice(&d[row + b.x..row + b.x + b.width]);
        }
    }
    Ok(Tensor::new(&[c, b.height, b.width], out)?)
}

/// Original crop `x̃`, its low-resolution resize `x`, and where it came from.
#[derive(Clone, Debug)]
pub struct HighResPair {
    pub high: Tensor,
    pub low: Tensor,
    pub bbox: CropBox,
}

pub fn crop_and_resize(frame: &Tensor, bbox: CropBox, low_size: usize) -> Result<HighResPair> {
    let high = crop(frame, bbox)?;
    let low = resize(&high, low_size, low_size)?;
    Ok(HighResPair { high, low, bbox })
}

/// `x̃ − up(x) + up(z)` without clamping.
pub fn pyramid_reconstruct_unclamped(pair: &HighResPair, z: &Tensor) -> Result<Tensor> {
    if z.shape() != pair.low.shape() {
        return Err(FatError::param(
            "pyramid_reconstruct",
            format!(
                "output {:?} does not match low-resolution input {:?}",
                z.shape(),
                pair.low.shape()
            ),
        ));
    }
    let (h, w) = (pair.high.shape()[1], pair.high.shape()[2]);
    let up_x = resize(&pair.low, h, w)?;
    let up_z = resize(z, h, w)?;
    let (hi, ux, uz) = (pair.high.data(), up_x.data(), up_z.data());
    Ok(Tensor::from_fn(pair.high.shape(), |i| (hi[i] - ux[i]) + uz[i]))
}

/// [`pyramid_reconstruct_unclamped`] clamped to `[0, 1]`.
pub fn pyramid_reconstruct(pair: &HighResPair, z: &Tensor) -> Result<Tensor> {
    let t = pyramid_reconstruct_unclamped(pair, z)?;
    Ok(Tensor::from_fn(t.shape(), |i| t.data()[i].clamp(0.0, 1.0)))
}

/// The frame with `patch` written over `bbox`.
pub fn paste_back(frame: &Tensor, bbox: CropBox, patch: &Tensor) -> Result<Tensor> {
    let s = frame.shape();
    if patch.shape() != [s[0], bbox.height, bbox.width] || bbox.x + bbox.width > s[2] || bbox.y + bbox.height > s[1] {
        return Err(FatError::param(
            "paste_back",
            format!("patch {:?} does not fit box {bbox:?} in frame {s:?}", patch.shape()),
        ));
    }
    let mut out = frame.to_vec();
    let p = patch.data();
    for ch in 0..s[0] {
        for i in 0..bbox.height {
            let dst = (ch * s[1] + bbox.y + i) * s[2] + bbox.x;
            let src = (ch * bbox.height + i) * bbox.width;
            out[dst..dst + bbox.width].copy_from_slice(&p[src..src + bbox.width]);
        }
    }
    Ok(Tensor::new(s, out)?)
}

/// Energy of the 4-neighbour discrete Laplacian over interior pixels.
pub fn laplacian_energy(image: &Tensor) -> f64 {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let d = image.data();
    let mut e = 0.0;
    for ch in 0..c {
        for i in 1..h.saturating_sub(1) {
            for j in 1..w.saturating_sub(1) {
                let at = |a: usize, b: usize| d[(ch * h + a) * w + b];
                let l = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j);
                e += l * l;
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_parsing() {
        assert_eq!(
            "1, 2,3,4".parse::<CropBox>().unwrap(),
            CropBox {
                x: 1,
                y: 2,
                width: 3,
                height: 4
            }
        );
        assert!("1,2,3".parse::<CropBox>().is_err());
        assert!("a,2,3,4".parse::<CropBox>().is_err());
    }

    #[test]
    fn out_of_bounds_box_is_rejected() {
        let f = Tensor::zeros(&[3, 8, 8]);
        let b = CropBox {
            x: 4,
            y: 0,
            width: 5,
            height: 2,
        };
        assert!(crop_and_resize(&f, b, 4).is_err());
    }
}

//! Spatial FAT: predicts thin-plate-spline targets for a regular control
//! lattice from source and aligned reference features, then warps the
//! color-transformed source features inside the active parsing labels.

use fat_tensor::{identity_grid, normalize, Module, Tensor};
use rand::Rng;

use crate::attention::{fat_forward, FatParams};
use crate::error::{FatError, Result};
use crate::face::ParsingMask;
use crate::tps::{geometry_defect, Point, TpsSystem};

/// Reference features laid out against the source: a FAT pass with the
/// roles of source and reference exchanged.
pub fn align_reference(y: &Tensor, x: &Tensor, le_y: &Tensor, le_x: &Tensor, p: &FatParams) -> Result<Tensor> {
    fat_forward(y, x, le_y, le_x, p)
}

/// Pixel-center lattice of `n×n` points in `[-1, 1]²`, row-major.
pub fn lattice(n: usize) -> Vec<Point> {
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [normalize(j as f64, n), normalize(i as f64, n)]))
        .collect()
}

/// Control-point predictor: a 3×3 convolution to two channels with a
/// per-position bias map, squashed by tanh.
#[derive(Clone, Debug)]
pub struct SpatialParams {
    /// `2×C×3×3`.
    pub w: Tensor,
    /// `2×n×n`: channel 0 is x, channel 1 is y.
    pub bias: Tensor,
    pub lattice: usize,
}

impl SpatialParams {
    /// Zero weights and `atanh(lattice)` bias: the prediction is the
    /// lattice itself, so the warp starts as the identity.
    pub fn identity(channels: usize, lattice_size: usize) -> Self {
        let pts = lattice(lattice_size);
        let k = pts.len();
        let mut bias = vec![0.0; 2 * k];
        for (i, p) in pts.iter().enumerate() {
            bias[i] = p[0].atanh();
            bias[k + i] = p[1].atanh();
        }
        SpatialParams {
            w: Tensor::zeros(&[2, channels, 3, 3]).requires_grad(),
            bias: Tensor::param(&[2, lattice_size, lattice_size], bias).expect("shape"),
            lattice: lattice_size,
        }
    }

    /// Identity bias with random weights of the given scale.
    pub fn perturbed<R: Rng + ?Sized>(channels: usize, lattice_size: usize, std: f64, rng: &mut R) -> Self {
        let mut p = Self::identity(channels, lattice_size);
        p.w = Tensor::randn(&[2, channels, 3, 3], std, rng).requires_grad();
        p
    }
}

impl Module for SpatialParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("w", &self.w);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("w", &mut self.w);
        f("bias", &mut self.bias);
    }
}

/// Lattice sources and predicted targets (`K×2`, strictly inside `(-1, 1)`).
#[derive(Clone, Debug)]
pub struct ControlGrid {
    pub source: Vec<Point>,
    pub targets: Tensor,
}

impl ControlGrid {
    pub fn target_points(&self) -> Vec<Point> {
        self.targets.data().chunks_exact(2).map(|c| [c[0], c[1]]).collect()
    }
}

/// Targets from `C×n×n` features.
pub fn predict_control_points(features: &Tensor, p: &SpatialParams) -> Result<ControlGrid> {
    let s = features.shape();
    if s.len() != 3 || s[1] != p.lattice || s[2] != p.lattice {
        return Err(FatError::param(
            "predict_control_points",
            format!("features {s:?} do not match the {0}×{0} lattice", p.lattice),
        ));
    }
    let zero = Tensor::zeros(&[2]);
    let k = p.lattice * p.lattice;
    let raw = features.conv2d(&p.w, &zero, 1)?.add(&p.bias)?.tanh();
    Ok(ControlGrid {
        source: lattice(p.lattice),
        targets: raw.reshape(&[2, k])?.t()?,
    })
}

/// Result of a gated warp.
#[derive(Clone, Debug)]
pub struct Warped {
    pub output: Tensor,
    /// Set when the targets were degenerate and the identity grid was used.
    pub fallback: bool,
}

/// Samples `input` (`C×H×W`) through the control grid's TPS where the mask
/// (resized by nearest neighbour) carries an active label, and through the
/// identity grid elsewhere.
pub fn masked_tps_warp(input: &Tensor, grid: &ControlGrid, mask: &ParsingMask, active: &[u8]) -> Result<Warped> {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let gate = mask.resize_nearest(h, w).indicator(active);
    if gate.iter().all(|&g| g == 0.0) {
        return Ok(Warped {
            output: input.clone(),
            fallback: false,
        });
    }
    if geometry_defect(&grid.target_points()).is_some() {
        return Ok(Warped {
            output: input.clone(),
            fallback: true,
        });
    }
    let system = TpsSystem::new(&grid.source)?;
    let k = grid.source.len();
    let weights = Tensor::new(&[h * w, k], system.grid_weights(h, w))?;
    let tps = weights.matmul(&grid.targets)?.reshape(&[h, w, 2])?;
    let sample_grid = if gate.iter().all(|&g| g == 1.0) {
        tps
    } else {
        let id = identity_grid(h, w);
        let m: Vec<f64> = gate.iter().flat_map(|&g| [g, g]).collect();
        let keep: Vec<f64> = id.data().iter().zip(&m).map(|(v, g)| v * (1.0 - g)).collect();
        tps.mul(&Tensor::new(&[h, w, 2], m)?)?
            .add(&Tensor::new(&[h, w, 2], keep)?)?
    };
    Ok(Warped {
        output: input.grid_sample(&sample_grid)?,
        fallback: false,
    })
}

/// FAT, then a TPS warp of the color-transformed source features driven
/// by targets predicted from `[x̂', align(ŷ)]` pooled to the lattice.
pub fn spatial_fat_forward(
    x: &Tensor,
    y: &Tensor,
    le_x: &Tensor,
    le_y: &Tensor,
    mask: &ParsingMask,
    active: &[u8],
    fat: &FatParams,
    spatial: &SpatialParams,
) -> Result<Warped> {
    let colored = fat_forward(x, y, le_x, le_y, fat)?;
    let aligned = align_reference(y, x, le_y, le_x, fat)?;
    let h = x.shape()[1];
    if h % spatial.lattice != 0 || x.shape()[2] != h {
        return Err(FatError::param(
            "spatial_fat",
            format!("features {:?} cannot pool to a {} lattice", x.shape(), spatial.lattice),
        ));
    }
    let joint = Tensor::concat(&[&colored, &aligned], 0)?;
    let pooled = joint.avg_pool2d(h / spatial.lattice)?;
    let grid = predict_control_points(&pooled, spatial)?;
    masked_tps_warp(&colored, &grid, mask, active)
}

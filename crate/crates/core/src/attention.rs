//! Cross-face attention: landmark embeddings, multi-head attention between
//! source and reference features, attribute estimation and transfer, and
//! the per-position color modulation. Also the parameter-free static
//! attention baseline.
//!
//! Feature maps are `d×h×w`; attention works on their flattened `M×d` form
//! with `M = h·w` in row-major pixel order.

use fat_tensor::{Module, Tensor};
use rand::Rng;

use crate::error::{FatError, Result};
use crate::face::LandmarkSet;
use crate::layers::Conv;

/// Default dilution of visual features in static attention.
pub const STATIC_OMEGA: f64 = 0.01;

/// `(h·w)×2N` map: row `m` holds `cor_m − L_i` for every landmark,
/// normalized to unit length (all-zero rows stay zero). `cor_m` is the
/// pixel center in `[0, 1]²`.
pub fn landmark_embedding(h: usize, w: usize, landmarks: &LandmarkSet) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(FatError::param("landmark_embedding", format!("empty {h}×{w} map")));
    }
    let pts = landmarks.points();
    let n2 = 2 * pts.len();
    let mut data = Vec::with_capacity(h * w * n2);
    for i in 0..h {
        for j in 0..w {
            let cor = [(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64];
            embed_row(cor, pts, &mut data);
        }
    }
    Ok(Tensor::new(&[h * w, n2], data)?)
}

fn embed_row(cor: [f64; 2], pts: &[[f64; 2]], out: &mut Vec<f64>) {
    let start = out.len();
    for p in pts {
        out.extend([cor[0] - p[0], cor[1] - p[1]]);
    }
    let norm = out[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out[start..].iter_mut().for_each(|v| *v /= norm);
    }
}

/// Flattens `d×h×w` features to `M×d`.
pub fn to_rows(features: &Tensor) -> Result<Tensor> {
    let s = features.shape();
    if s.len() != 3 {
        return Err(FatError::param("features", format!("expected d×h×w, got {s:?}")));
    }
    Ok(features.reshape(&[s[0], s[1] * s[2]])?.t()?)
}

/// Inverse of [`to_rows`].
pub fn from_rows(rows: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let d = rows.shape()[1];
    Ok(rows.t()?.reshape(&[d, h, w])?)
}

/// Learnable FAT parameters.
#[derive(Clone, Debug)]
pub struct FatParams {
    /// `(d+2N)×(k·d_k)`: head `i` owns columns `i·d_k..(i+1)·d_k`.
    pub wx: Tensor,
    pub wy: Tensor,
    /// Head logits; mixing weights are `softmax(wo)`.
    pub wo: Tensor,
    /// `d → d`, 1×1.
    pub est1: Conv,
    /// `d → 2d`, 3×3; output channels are `d` scales then `d` biases.
    pub est2: Conv,
    pub heads: usize,
    pub d_k: usize,
}

impl FatParams {
    /// Random projections; the estimator's last layer starts near the
    /// identity modulation (scale 1, bias 0).
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d: usize, num_landmarks: usize, heads: usize, d_k: usize) -> Result<Self> {
        if heads == 0 || d == 0 || d_k == 0 {
            return Err(FatError::param("fat_params", "d, heads and d_k must be positive"));
        }
        let din = d + 2 * num_landmarks;
        let std = 1.0 / (din as f64).sqrt();
        let wx = Tensor::randn(&[din, heads * d_k], std, rng).requires_grad();
        let wy = Tensor::randn(&[din, heads * d_k], std, rng).requires_grad();
        let wo = Tensor::param(&[heads], vec![0.0; heads])?;
        let est1 = Conv::new(rng, d, d, 1);
        let mut est2 = Conv::new(rng, d, 2 * d, 3);
        est2.w = est2.w.scale(0.1).detach().requires_grad();
        est2.b = identity_bias(d);
        Ok(FatParams {
            wx,
            wy,
            wo,
            est1,
            est2,
            heads,
            d_k,
        })
    }

    /// Zeroes the estimator's last weights so `γ` is exactly scale 1,
    /// bias 0 for every input.
    pub fn with_identity_estimator(mut self) -> Self {
        self.est2.w = Tensor::zeros(self.est2.w.shape()).requires_grad();
        self.est2.b = identity_bias(self.est2.b.numel() / 2);
        self
    }

    pub fn feature_dim(&self) -> usize {
        self.est1.w.shape()[1]
    }
}

fn identity_bias(d: usize) -> Tensor {
    let mut b = vec![1.0; d];
    b.resize(2 * d, 0.0);
    Tensor::param(&[2 * d], b).expect("shape")
}

impl Module for FatParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("wx", &self.wx);
        f("wy", &self.wy);
        f("wo", &self.wo);
        self.est1.visit_as("est1", f);
        self.est2.visit_as("est2", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("wx", &mut self.wx);
        f("wy", &mut self.wy);
        f("wo", &mut self.wo);
        self.est1.visit_mut_as("est1", f);
        self.est2.visit_mut_as("est2", f);
    }
}

/// Projects `[rows, LE]` through `w` into `k×M×d_k` per-head queries/keys.
fn project(rows: &Tensor, le: &Tensor, w: &Tensor, heads: usize, d_k: usize) -> Result<Tensor> {
    let m = rows.shape()[0];
    let joint = Tensor::concat(&[rows, le], 1)?;
    Ok(joint.matmul(w)?.reshape(&[m, heads, d_k])?.permute(&[1, 0, 2])?)
}

/// All heads at once: `k×M×M'`, each slice row-stochastic.
pub fn head_attention(x: &Tensor, y: &Tensor, le_x: &Tensor, le_y: &Tensor, p: &FatParams) -> Result<Tensor> {
    let q = project(x, le_x, &p.wx, p.heads, p.d_k)?;
    let k = project(y, le_y, &p.wy, p.heads, p.d_k)?;
    let logits = q.bmm(&k.permute(&[0, 2, 1])?)?.scale(1.0 / (p.d_k as f64).sqrt());
    Ok(logits.softmax(2)?)
}

/// Single head `i`: `softmax(x̂W_x(ŷW_y)ᵀ/√d_k)` over the reference axis.
pub fn attention_head(
    x: &Tensor,
    y: &Tensor,
    le_x: &Tensor,
    le_y: &Tensor,
    p: &FatParams,
    head: usize,
) -> Result<Tensor> {
    if head >= p.heads {
        return Err(FatError::param("attention_head", format!("head {head} of {}", p.heads)));
    }
    let q = Tensor::concat(&[x, le_x], 1)?.matmul(&p.wx.narrow(1, head * p.d_k, p.d_k)?)?;
    let k = Tensor::concat(&[y, le_y], 1)?.matmul(&p.wy.narrow(1, head * p.d_k, p.d_k)?)?;
    let logits = q.matmul(&k.t()?)?.scale(1.0 / (p.d_k as f64).sqrt());
    Ok(logits.softmax(1)?)
}

/// `Â = Σᵢ softmax(W_o)ᵢ·Aᵢ`, computed in one batched pass.
pub fn multi_head(x: &Tensor, y: &Tensor, le_x: &Tensor, le_y: &Tensor, p: &FatParams) -> Result<Tensor> {
    let (m, m2) = (x.shape()[0], y.shape()[0]);
    let a = head_attention(x, y, le_x, le_y, p)?.reshape(&[p.heads, m * m2])?;
    let mix = p.wo.softmax(0)?.reshape(&[1, p.heads])?;
    Ok(mix.matmul(&a)?.reshape(&[m, m2])?)
}

/// `γ_y` (`M'×2d`) from reference features `d×h×w`: 1×1 conv, ReLU, 3×3 conv.
pub fn estimate_attributes(y: &Tensor, p: &FatParams) -> Result<Tensor> {
    let hidden = p.est1.forward(y, 1)?.relu();
    to_rows(&p.est2.forward(&hidden, 1)?)
}

/// `γ_x = Â·γ_y`.
pub fn transfer_attributes(a: &Tensor, gamma_y: &Tensor) -> Result<Tensor> {
    Ok(a.matmul(gamma_y)?)
}

/// `x̂'[m,c] = γ[m,c]·x̂[m,c] + γ[m,d+c]`.
pub fn color_transform(x: &Tensor, gamma: &Tensor) -> Result<Tensor> {
    let d = x.shape()[1];
    if gamma.rank() != 2 || gamma.shape() != [x.shape()[0], 2 * d] {
        return Err(fat_tensor::TensorError::Dimension {
            op: "color_transform",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        }
        .into());
    }
    Ok(gamma.narrow(1, 0, d)?.mul(x)?.add(&gamma.narrow(1, d, d)?)?)
}

/// Full FAT pass on `d×h×w` source and reference features; returns the
/// color-transformed source features, same shape as `x`.
pub fn fat_forward(x: &Tensor, y: &Tensor, le_x: &Tensor, le_y: &Tensor, p: &FatParams) -> Result<Tensor> {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let xr = to_rows(x)?;
    let a = multi_head(&xr, &to_rows(y)?, le_x, le_y, p)?;
    let gamma_x = transfer_attributes(&a, &estimate_attributes(y, p)?)?;
    from_rows(&color_transform(&xr, &gamma_x)?, h, w)
}

/// `softmax(Concat(ωx̂, LE_x)·Concat(ωŷ, LE_y)ᵀ)` on `M×d` rows.
pub fn static_attention(x: &Tensor, y: &Tensor, le_x: &Tensor, le_y: &Tensor, omega: f64) -> Result<Tensor> {
    if !(omega > 0.0) {
        return Err(FatError::param(
            "static_attention",
            format!("omega must be positive, got {omega}"),
        ));
    }
    let q = Tensor::concat(&[&x.scale(omega), le_x], 1)?;
    let k = Tensor::concat(&[&y.scale(omega), le_y], 1)?;
    Ok(q.matmul(&k.t()?)?.softmax(1)?)
}

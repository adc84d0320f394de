//! Inference timing: batched multi-head FAT against a sequential
//! per-part static-attention pipeline on the same feature shapes.

use std::time::Instant;

use fat_tensor::{Module, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    color_transform, estimate_attributes, fat_forward, from_rows, landmark_embedding, static_attention, to_rows,
    transfer_attributes, FatParams, STATIC_OMEGA,
};
use crate::error::{FatError, Result};
use crate::face::{LEFT_BROW, LEFT_EYE, LIPS, RIGHT_BROW, RIGHT_EYE};
use crate::model::GeneratorConfig;
use crate::synth::{corpus_params, synth_face};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchReport {
    pub fat_ms: f64,
    pub sequential_ms: f64,
    pub iters: usize,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        format!("fat_ms={:.4}\nsequential_ms={:.4}\n", self.fat_ms, self.sequential_ms)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "fat_ms,sequential_ms,iters\n{},{},{}\n",
            self.fat_ms, self.sequential_ms, self.iters
        )
    }
}

/// Per-part static attention, one full pass per part: each pass estimates
/// attributes, attends, transfers and modulates, then keeps its part.
pub fn sequential_static(
    x: &Tensor,
    y: &Tensor,
    le_x: &Tensor,
    le_y: &Tensor,
    part_gates: &[Vec<f64>],
    p: &FatParams,
) -> Result<Tensor> {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let xr = to_rows(x)?;
    let yr = to_rows(y)?;
    let d = xr.shape()[1];
    let mut out = xr.to_vec();
    for gate in part_gates {
        let a = static_attention(&xr, &yr, le_x, le_y, STATIC_OMEGA)?;
        let gamma = transfer_attributes(&a, &estimate_attributes(y, p)?)?;
        let part = color_transform(&xr, &gamma)?;
        for (m, &g) in gate.iter().enumerate() {
            if g > 0.0 {
                out[m * d..(m + 1) * d].copy_from_slice(&part.data()[m * d..(m + 1) * d]);
            }
        }
    }
    from_rows(&Tensor::new(&[h * w, d], out)?, h, w)
}

/// Mean milliseconds per forward of both designs at image size `size`
/// (features at `size/4` with the default generator width), interleaved
/// over `iters` iterations after a short warm-up.
pub fn run(size: usize, heads: usize, iters: usize, seed: u64) -> Result<BenchReport> {
    if iters == 0 {
        return Err(FatError::param("bench", "iters must be positive"));
    }
    let config = GeneratorConfig {
        size,
        heads,
        ..Default::default()
    };
    config.validate()?;
    let n = config.bottleneck_size();
    let d = config.bottleneck_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = FatParams::new(&mut rng, d, config.num_landmarks, heads, config.d_k)?;
    params.visit_mut(&mut |_, t| *t = t.detach());
    let x = Tensor::randn(&[d, n, n], 1.0, &mut rng);
    let y = Tensor::randn(&[d, n, n], 1.0, &mut rng);
    let (_, src_params) = corpus_params(0, size, seed);
    let (_, ref_params) = corpus_params(1, size, seed);
    let src = synth_face(&src_params)?;
    let reference = synth_face(&ref_params)?;
    let le_x = landmark_embedding(n, n, &src.landmarks)?;
    let le_y = landmark_embedding(n, n, &reference.landmarks)?;
    let small = src.mask.resize_nearest(n, n);
    let gates = vec![
        small.indicator(&[LIPS]),
        small.indicator(&[LEFT_BROW, RIGHT_BROW, LEFT_EYE, RIGHT_EYE]),
    ];

    for _ in 0..3 {
        fat_forward(&x, &y, &le_x, &le_y, &params)?;
        sequential_static(&x, &y, &le_x, &le_y, &gates, &params)?;
    }
    let (mut fat, mut seq) = (0.0, 0.0);
    for _ in 0..iters {
        let t = Instant::now();
        std::hint::black_box(fat_forward(&x, &y, &le_x, &le_y, &params)?);
        fat += t.elapsed().as_secs_f64();
        let t = Instant::now();
        std::hint::black_box(sequential_static(&x, &y, &le_x, &le_y, &gates, &params)?);
        seq += t.elapsed().as_secs_f64();
    }
    Ok(BenchReport {
        fat_ms: 1e3 * fat / iters as f64,
        sequential_ms: 1e3 * seq / iters as f64,
        iters,
    })
}

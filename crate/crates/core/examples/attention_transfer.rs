//! Cross-face attention between two synthetic faces: row-stochastic
//! attention maps, landmark-guided correspondence and the per-pixel
//! scale/bias transfer.
//!
//! cargo run --example attention_transfer

use fat_core::attention::{
    estimate_attributes, fat_forward, landmark_embedding, multi_head, static_attention, to_rows, transfer_attributes,
    FatParams, STATIC_OMEGA,
};
use fat_core::synth::{corpus_params, synth_face};
use fat_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fat_core::Result<()> {
    let n = 16;
    let d = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x_face = synth_face(&corpus_params(0, 64, 21).1)?;
    let y_face = synth_face(&corpus_params(1, 64, 21).1)?;
    let le_x = landmark_embedding(n, n, &x_face.landmarks)?;
    let le_y = landmark_embedding(n, n, &y_face.landmarks)?;
    let x = Tensor::randn(&[d, n, n], 1.0, &mut rng);
    let y = Tensor::randn(&[d, n, n], 1.0, &mut rng);

    let params = FatParams::new(&mut rng, d, x_face.landmarks.len(), 2, 16)?;
    let (xr, yr) = (to_rows(&x)?, to_rows(&y)?);
    let a = multi_head(&xr, &yr, &le_x, &le_y, &params)?;
    let m = n * n;
    let worst = a
        .data()
        .chunks_exact(m)
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("mixed attention {m}x{m}, worst row-sum deviation {worst:.1e}");

    // With features zeroed, static attention only sees the landmark
    // embedding: each source position attends to the reference position
    // with the same landmark-relative layout.
    let zeros = Tensor::zeros(&[m, d]);
    let st = static_attention(&zeros, &zeros, &le_x, &le_y, STATIC_OMEGA)?;
    let at = |i: usize, j: usize| (i * n + j) * m;
    let row = &st.data()[at(n / 2, n / 2)..at(n / 2, n / 2) + m];
    let best = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    println!("center pixel of x attends most to y pixel ({}, {})", best / n, best % n);

    let gamma_y = estimate_attributes(&y, &params)?;
    let gamma_x = transfer_attributes(&a, &gamma_y)?;
    let (lo, hi) = gamma_y
        .data()
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    let inside = gamma_x.data().iter().all(|v| (lo - 1e-12..=hi + 1e-12).contains(v));
    println!(
        "transferred attributes {:?}, inside reference range: {inside}",
        gamma_x.shape()
    );

    let out = fat_forward(&x, &y, &le_x, &le_y, &params)?;
    let delta = out.max_abs_diff(&x);
    println!(
        "fat_forward output {:?}, max change from source features {delta:.4}",
        out.shape()
    );
    Ok(())
}

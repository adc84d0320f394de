//! Spatial FAT: starts as the identity warp, and once the predictor moves
//! it warps only the active parts.
//!
//! cargo run --example spatial_fat

use fat_core::attention::{fat_forward, landmark_embedding, FatParams};
use fat_core::face::{LEFT_BROW, LIPS, RIGHT_BROW};
use fat_core::spatial::{spatial_fat_forward, SpatialParams};
use fat_core::synth::{corpus_params, synth_face};
use fat_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fat_core::Result<()> {
    let n = 16;
    let d = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x_face = synth_face(&corpus_params(2, 64, 4).1)?;
    let y_face = synth_face(&corpus_params(3, 64, 4).1)?;
    let le_x = landmark_embedding(n, n, &x_face.landmarks)?;
    let le_y = landmark_embedding(n, n, &y_face.landmarks)?;
    let mask = x_face.mask.resize_nearest(n, n);
    let x = Tensor::randn(&[d, n, n], 1.0, &mut rng);
    let y = Tensor::randn(&[d, n, n], 1.0, &mut rng);
    let fat = FatParams::new(&mut rng, d, 30, 2, 8)?;
    let brows = [LEFT_BROW, RIGHT_BROW];

    let plain = fat_forward(&x, &y, &le_x, &le_y, &fat)?;
    let ident = spatial_fat_forward(
        &x,
        &y,
        &le_x,
        &le_y,
        &mask,
        &brows,
        &fat,
        &SpatialParams::identity(2 * d, 4),
    )?;
    println!(
        "identity predictor: max |spatial - plain| = {:.2e}",
        ident.output.max_abs_diff(&plain)
    );

    let moved = SpatialParams::perturbed(2 * d, 4, 0.05, &mut rng);
    let warped = spatial_fat_forward(&x, &y, &le_x, &le_y, &mask, &brows, &fat, &moved)?;
    let labels = mask.labels();
    let (mut brow_change, mut lip_change) = (0.0f64, 0.0f64);
    for c in 0..d {
        for (m, &l) in labels.iter().enumerate() {
            let diff = (warped.output.data()[c * n * n + m] - plain.data()[c * n * n + m]).abs();
            if brows.contains(&l) {
                brow_change = brow_change.max(diff);
            } else if l == LIPS {
                lip_change = lip_change.max(diff);
            }
        }
    }
    println!("perturbed predictor (fallback: {}):", warped.fallback);
    println!("  max change on brow positions {brow_change:.4}");
    println!("  max change on lip positions  {lip_change:.1e}");
    Ok(())
}

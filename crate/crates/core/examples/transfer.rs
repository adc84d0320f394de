//! Short training run, checkpoint round trip and inference on an unseen
//! pair.
//!
//! cargo run --release --example transfer -- [out_dir]

use std::path::PathBuf;

use fat_core::io;
use fat_core::model::Side;
use fat_core::synth::synth_pairs;
use fat_core::train::{fit, load_generator, prepare_pairs, TrainConfig};

fn main() -> fat_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/transfer".into()));
    std::fs::create_dir_all(&dir).map_err(|e| fat_core::FatError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let config = TrainConfig {
        steps: 40,
        seed: 3,
        ..Default::default()
    };
    let pairs = prepare_pairs(synth_pairs(16, 64, 5)?, &config.generator)?;
    let state = fit(&pairs, config, |row| {
        if row.iter % 10 == 0 {
            println!("iter {:>3}  J_G {:.4}  J_D {:.4}", row.iter, row.j_g, row.j_d);
        }
    })?;
    let ckpt = dir.join("model.fatw");
    state.save(&ckpt)?;

    let loaded = load_generator(&ckpt)?;
    let (x, y) = synth_pairs(1, 64, 404)?.remove(0);
    let live = state.generator.forward(Side::from(&x), Side::from(&y))?.image;
    let restored = loaded.forward(Side::from(&x), Side::from(&y))?.image;
    // Checkpoints store f32, so the reloaded model matches to single precision.
    println!("reloaded vs live output: max diff {:.2e}", restored.max_abs_diff(&live));
    io::write_ppm(dir.join("source.ppm"), &x.image)?;
    io::write_ppm(dir.join("reference.ppm"), &y.image)?;
    io::write_ppm(dir.join("output.ppm"), &restored.detach())?;
    println!("wrote {}", dir.display());
    Ok(())
}

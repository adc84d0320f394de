//! Trains the generator on synthetic pairs and prints the loss curve.
//!
//! cargo run --release --example train_toy -- [pairs] [steps] [--spatial]

use std::time::Instant;

use fat_core::face::LIPS;
use fat_core::model::Side;
use fat_core::pgt::region_mae;
use fat_core::synth::synth_pairs;
use fat_core::train::{fit, prepare_pairs, TrainConfig};

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> fat_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spatial = args.iter().any(|a| a == "--spatial");
    let nums: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let pairs = nums.first().copied().unwrap_or(200);
    let steps = nums.get(1).copied().unwrap_or(300);

    let mut config = TrainConfig {
        steps,
        seed: 1,
        ..Default::default()
    };
    config.generator.spatial = spatial;
    let t0 = Instant::now();
    let data = prepare_pairs(synth_pairs(pairs, config.generator.size, 11)?, &config.generator)?;
    println!("prepared {pairs} pairs in {:.1}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let state = fit(&data, config, |r| {
        if r.iter % 25 == 0 {
            println!(
                "iter {:4}  J_D {:.3}  J_G {:.3}  adv {:.3}  cyc {:.4}  per {:.4}  make {:.4}  ({:.2}s)",
                r.iter,
                r.j_d,
                r.j_g,
                r.adv,
                r.cyc,
                r.per,
                r.make,
                t0.elapsed().as_secs_f64()
            );
        }
    })?;
    let h = &state.history;
    let n = h.len().min(10);
    println!(
        "make: first {:.4} last {:.4}; cyc: first {:.4} last {:.4}; {:.2}s/step",
        mean(h[..n].iter().map(|r| r.make)),
        mean(h[h.len() - n..].iter().map(|r| r.make)),
        mean(h[..n].iter().map(|r| r.cyc)),
        mean(h[h.len() - n..].iter().map(|r| r.cyc)),
        t0.elapsed().as_secs_f64() / h.len() as f64
    );

    let held_out = prepare_pairs(
        synth_pairs(20, state.config.generator.size, 99)?,
        &state.config.generator,
    )?;
    let (mut generated, mut raw) = (0.0, 0.0);
    for p in &held_out {
        let z = state.generator.forward(Side::from(&p.x), Side::from(&p.y))?.image;
        generated += region_mae(&z, &p.pgt_xy, &p.x.mask, &[LIPS]).unwrap_or(0.0);
        raw += region_mae(&p.x.image, &p.pgt_xy, &p.x.mask, &[LIPS]).unwrap_or(0.0);
    }
    println!(
        "held-out lip error vs PGT: generated {:.4}, raw source {:.4}, ratio {:.3}",
        generated / 20.0,
        raw / 20.0,
        generated / raw
    );
    Ok(())
}

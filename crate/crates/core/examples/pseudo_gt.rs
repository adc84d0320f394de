//! Every pseudo-ground-truth recipe on one plain/makeup pair, written as
//! PPM files with their sidecar lines.
//!
//! cargo run --example pseudo_gt -- [out_dir]

use std::path::PathBuf;

use fat_core::face::LIPS;
use fat_core::io;
use fat_core::pgt::{blend_pgt, color_pgt, histogram_pgt, region_mae, spatial_pgt, BLEND_ALPHA};
use fat_core::synth::synth_pairs;

fn main() -> fat_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/pseudo_gt".into()));
    std::fs::create_dir_all(&dir).map_err(|e| fat_core::FatError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let (source, reference) = synth_pairs(1, 96, 13)?.remove(0);
    io::save_sample(dir.join("source.ppm"), &source)?;
    io::save_sample(dir.join("reference.ppm"), &reference)?;

    let color = color_pgt(&source, &reference)?;
    let results = [
        ("tps", color.clone()),
        ("tps_brows", {
            let left = spatial_pgt(&color, &source, &reference, 2)?;
            spatial_pgt(&left, &source, &reference, 3)?
        }),
        ("hist", histogram_pgt(&source, &reference)?),
        ("blend", blend_pgt(&source, &reference, BLEND_ALPHA)?),
    ];

    // Mean lip color of the PGT over the source lips vs the reference lips.
    let lip_mean = |img: &fat_tensor::Tensor, mask: &fat_core::ParsingMask| {
        let ind = mask.indicator(&[LIPS]);
        let count = ind.iter().sum::<f64>();
        let hw = ind.len();
        [0, 1, 2].map(|c| (0..hw).map(|m| ind[m] * img.data()[c * hw + m]).sum::<f64>() / count)
    };
    let want = lip_mean(&reference.image, &reference.mask);
    for (name, r) in &results {
        io::write_ppm(dir.join(format!("{name}.ppm")), &r.image)?;
        let got = lip_mean(&r.image, &source.mask);
        let err = (0..3).map(|c| (got[c] - want[c]).abs()).fold(0.0, f64::max);
        let vs_source = region_mae(&r.image, &source.image, &source.mask, &[LIPS]).unwrap_or(0.0);
        println!(
            "{name:<10} {:<40} lip mean error {err:.4}, change vs source {vs_source:.4}",
            r.sidecar()
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

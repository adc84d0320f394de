//! Solves a thin-plate spline from a handful of control points, checks the
//! interpolation and side conditions, and warps a synthetic face with it.
//!
//! cargo run --example tps_warp -- [out.ppm]

use fat_core::io;
use fat_core::synth::{corpus_params, synth_face};
use fat_core::tps::{tps_solve, warp_image, ControlPoints};

fn main() -> fat_core::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/tps_warp.ppm".into());
    let (_, params) = corpus_params(0, 96, 3);
    let face = synth_face(&params)?;

    // Corners pinned, the mouth corners pulled outward and up.
    let source = vec![
        [-1.0, -1.0],
        [1.0, -1.0],
        [-1.0, 1.0],
        [1.0, 1.0],
        [-0.2, 0.45],
        [0.2, 0.45],
        [0.0, -0.2],
    ];
    let target = vec![
        [-1.0, -1.0],
        [1.0, -1.0],
        [-1.0, 1.0],
        [1.0, 1.0],
        [-0.26, 0.40],
        [0.26, 0.40],
        [0.0, -0.2],
    ];
    let tps = tps_solve(&ControlPoints::new(source.clone(), target.clone())?)?;
    let worst = source
        .iter()
        .zip(&target)
        .map(|(s, t)| {
            let p = tps.apply(*s);
            (p[0] - t[0]).abs().max((p[1] - t[1]).abs())
        })
        .fold(0.0, f64::max);
    println!("interpolation error: {worst:.2e}");
    println!(
        "side-condition residuals: {:?}",
        tps.boundary_residuals().map(|r| format!("{r:.1e}"))
    );
    println!("affine part: {:?}", tps.affine());

    // The grid maps output pixels to input positions, so content at the
    // target points comes from the source points.
    let grid = tps.grid(face.height(), face.width())?;
    let warped = warp_image(&face.image, &grid)?;
    io::write_ppm(&out, &warped)?;
    println!("mean |warped - input| = {:.4}", {
        let (a, b) = (warped.data(), face.image.data());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    });
    println!("wrote {out}");
    Ok(())
}

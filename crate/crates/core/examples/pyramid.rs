//! High-resolution output from a low-resolution transfer: the detail the
//! downsampling removed is added back onto the upsampled result.
//!
//! cargo run --example pyramid

use fat_core::highres::{
    crop_and_resize, laplacian_energy, paste_back, pyramid_reconstruct_unclamped, resize, CropBox,
};
use fat_core::synth::{corpus_params, synth_face};
use fat_tensor::Tensor;

fn main() -> fat_core::Result<()> {
    let mut params = corpus_params(0, 256, 17).1;
    params.noise = 0.04;
    let face = synth_face(&params)?;
    // A 256×256 face inside a wider frame.
    let frame = Tensor::from_fn(&[3, 256, 320], |i| {
        let (c, r) = (i / (256 * 320), i % (256 * 320));
        let (y, x) = (r / 320, r % 320);
        if (32..288).contains(&x) {
            face.image.data()[(c * 256 + y) * 256 + x - 32]
        } else {
            0.2
        }
    });
    let bbox = CropBox {
        x: 32,
        y: 0,
        width: 256,
        height: 256,
    };
    let pair = crop_and_resize(&frame, bbox, 64)?;

    let same = pyramid_reconstruct_unclamped(&pair, &pair.low)?;
    println!(
        "z = x reproduces the crop: max error {:.1e}",
        same.max_abs_diff(&pair.high)
    );

    // A stand-in edit: a global lip-tint style color shift at low resolution.
    let z = Tensor::from_fn(pair.low.shape(), |i| {
        let c = i / (64 * 64);
        (pair.low.data()[i] + [0.08, -0.03, -0.03][c]).clamp(0.0, 1.0)
    });
    let plain_up = resize(&z, 256, 256)?;
    let restored = pyramid_reconstruct_unclamped(&pair, &z)?;
    println!("detail (Laplacian energy):");
    println!("  original crop        {:.2}", laplacian_energy(&pair.high));
    println!("  upsampled edit       {:.2}", laplacian_energy(&plain_up));
    println!("  pyramid reconstruct  {:.2}", laplacian_energy(&restored));
    let pasted = paste_back(&frame, bbox, &restored)?;
    println!("frame {:?} with the edited crop pasted back", pasted.shape());
    Ok(())
}

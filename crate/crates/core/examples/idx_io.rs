//! Writes a small dataset as IDX bytes, parses it back, resizes it to 32×32
//! and converts it to three channels.

use tilted_vae::data::{gen_blobs, idx_image_bytes, parse_idx_images, resize_nearest, to_grayscale, to_rgb, BlobRecipe};
use tilted_vae::sampler::RngStream;

pub fn main() -> tilted_vae::Result<()> {
    let ds = gen_blobs(&mut RngStream::new(3), 4, 16, 16, &BlobRecipe::two_modes())?;
    let bytes = idx_image_bytes(&ds);
    println!("{} images -> {} IDX bytes", ds.len(), bytes.len());

    let back = parse_idx_images(&bytes)?;
    let max_err = back
        .samples()
        .iter()
        .zip(ds.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round trip max error {max_err:.5} (8-bit quantization)");

    let big = resize_nearest(&back, 32, 32)?;
    let rgb = to_rgb(&big)?;
    println!("resized {}x{}x{}, as RGB d_x = {}", big.height(), big.width(), big.channels(), rgb.d_x());
    assert_eq!(to_grayscale(&rgb)?.samples(), big.samples());
    Ok(())
}

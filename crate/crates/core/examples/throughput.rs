//! Times single-pass scoring against 256-draw scoring on an untrained model.

use tilted_vae::cli::bench_scoring;
use tilted_vae::data::gen_noise;
use tilted_vae::sampler::RngStream;
use tilted_vae::tilted::TiltedPrior;
use tilted_vae::vae::{Prior, VaeModel, DEFAULT_HIDDEN};

pub fn main() -> tilted_vae::Result<()> {
    let data = gen_noise(&mut RngStream::new(1), 200, 16, 16, 1)?;
    let model = VaeModel::new(256, 10, Prior::Tilted(TiltedPrior::new(10.0, 10)?), &DEFAULT_HIDDEN, 7)?;
    let (single, multi) = bench_scoring(&model, &data, 3, 256, 0)?;
    println!("single pass: {:.0} images/s", single.images_per_sec_mean);
    println!("256 draws:   {:.0} images/s", multi.images_per_sec_mean);
    println!("ratio {:.1}", single.images_per_sec_mean / multi.images_per_sec_mean);
    Ok(())
}

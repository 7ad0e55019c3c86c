//! Draws from the tilted prior by rejection and from the two-step
//! aggregated-posterior sampler, then checks their radial laws.

use tilted_vae::sampler::{ks_distance, sample_model_latent, sample_tilted_prior, RadialLaw, RngStream};
use tilted_vae::specfn::chi_mean;
use tilted_vae::tilted::TiltedPrior;

fn norms(zs: &[Vec<f64>]) -> Vec<f64> {
    zs.iter().map(|z| z.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

pub fn main() -> tilted_vae::Result<()> {
    let mut rng = RngStream::new(42);
    let n = 20_000;

    let flat = TiltedPrior::new(0.0, 10)?;
    let zs: Vec<Vec<f64>> = (0..n).map(|_| sample_tilted_prior(&mut rng, &flat)).collect::<Result<_, _>>()?;
    let mean_norm = norms(&zs).iter().sum::<f64>() / n as f64;
    println!("tau=0: mean |z| {mean_norm:.4} vs chi mean {:.4}", chi_mean(10)?);

    let tilted = TiltedPrior::new(10.0, 10)?;
    let zs: Vec<Vec<f64>> = (0..n).map(|_| sample_tilted_prior(&mut rng, &tilted)).collect::<Result<_, _>>()?;
    let r = norms(&zs);
    println!("tau=10: mean |z| {:.4}", r.iter().sum::<f64>() / n as f64);

    let law = RadialLaw::new(10.15)?;
    let zs: Vec<Vec<f64>> = (0..n).map(|_| sample_model_latent(&mut rng, &law, 10)).collect::<Result<_, _>>()?;
    let ks = ks_distance(&norms(&zs), |x| law.cdf(x));
    println!("aggregated posterior z_bar=10.15: KS distance of |z| {ks:.4}");
    Ok(())
}

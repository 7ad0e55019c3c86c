//! Trains a tilted VAE briefly, saves a checkpoint with its manifest, and
//! reloads it.

use tilted_vae::data::{gen_blobs, BlobRecipe};
use tilted_vae::sampler::RngStream;
use tilted_vae::tilted::TiltedPrior;
use tilted_vae::vae::{
    exact_elbo, load_checkpoint, radial_diagnostics, save_checkpoint, train, Prior, TrainConfig, VaeModel,
};

pub fn main() -> tilted_vae::Result<()> {
    let data = gen_blobs(&mut RngStream::new(1), 400, 16, 16, &BlobRecipe::two_modes())?;
    let prior = TiltedPrior::new(5.0, 4)?;
    let model = VaeModel::new(data.d_x(), 4, Prior::Tilted(prior), &[64, 32], 7)?;
    let config = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let (mut model, log) = train(model, &data, &config)?;
    for e in &log {
        println!("epoch {}: recon {:.3} kld {:.3}", e.epoch, e.recon, e.kld);
    }
    let diag = radial_diagnostics(&model, &data, &mut RngStream::substream(7, 3))?;
    model.set_z_bar(Some(diag.z_bar));
    println!("gamma {:.3}, z_bar {:.3}, sigma {:.3}", prior.gamma(), diag.z_bar, diag.sigma);

    let terms = exact_elbo(&model, &data)?;
    let gap: f64 = terms.iter().map(|t| t.quadratic_kld - t.exact_kld).sum::<f64>() / terms.len() as f64;
    println!("mean quadratic − exact KL: {gap:.4}");

    let dir = std::env::temp_dir().join("tilted-vae-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.bin");
    let manifest = save_checkpoint(&model, &path)?;
    assert_eq!(load_checkpoint(&path)?, model);
    println!("saved {} and {}", path.display(), manifest.display());
    Ok(())
}

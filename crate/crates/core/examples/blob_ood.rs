//! Trains tilted and Gaussian VAEs on two-mode blobs and compares their
//! AUROC against uniform noise and against shifted blobs.

use std::time::Instant;

use tilted_vae::data::{gen_blobs, gen_noise, BlobRecipe};
use tilted_vae::ood::{roc, score_batch};
use tilted_vae::sampler::RngStream;
use tilted_vae::tilted::TiltedPrior;
use tilted_vae::vae::{radial_diagnostics, radial_ks, train, Prior, TrainConfig, VaeModel, DEFAULT_HIDDEN};

fn main() -> tilted_vae::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(50, |s| s.parse().unwrap());
    let train_set = gen_blobs(&mut RngStream::substream(1, 0), 2000, 16, 16, &BlobRecipe::two_modes())?;
    let test_in = gen_blobs(&mut RngStream::substream(1, 1), 500, 16, 16, &BlobRecipe::two_modes())?;
    let noise = gen_noise(&mut RngStream::substream(1, 2), 500, 16, 16, 1)?;
    let shifted = gen_blobs(&mut RngStream::substream(1, 3), 500, 16, 16, &BlobRecipe::shifted())?;
    let config = TrainConfig { epochs, ..TrainConfig::default() };

    let tilted = TiltedPrior::new(10.0, 10)?;
    for prior in [Prior::Tilted(tilted), Prior::Gaussian] {
        let start = Instant::now();
        let model = VaeModel::new(256, 10, prior, &DEFAULT_HIDDEN, 7)?;
        let (model, log) = train(model, &train_set, &config)?;
        let first = log.first().unwrap();
        let last = log.last().unwrap();
        println!(
            "{}: loss {:.3} -> {:.3} (recon {:.3}, kld {:.3}) in {:.1?}",
            prior.name(),
            first.loss(),
            last.loss(),
            last.recon,
            last.kld,
            start.elapsed()
        );
        let s_in: Vec<f64> = score_batch(&model, test_in.samples().view())?.iter().map(|s| s.score).collect();
        for (name, ds) in [("noise", &noise), ("shifted", &shifted)] {
            let s_out: Vec<f64> = score_batch(&model, ds.samples().view())?.iter().map(|s| s.score).collect();
            println!("  AUROC vs {name}: {:.4}", roc(&s_in, &s_out)?.auroc);
        }
        if let Prior::Tilted(p) = prior {
            let diag = radial_diagnostics(&model, &train_set, &mut RngStream::substream(7, 5))?;
            let ks = radial_ks(&diag)?;
            println!(
                "  gamma {:.3}, z_bar {:.3}, sigma {:.3}, mean |mu| {:.3}, KS {:.4}",
                p.gamma(),
                diag.z_bar,
                diag.sigma,
                diag.mu_bar,
                ks
            );
        }
    }
    Ok(())
}

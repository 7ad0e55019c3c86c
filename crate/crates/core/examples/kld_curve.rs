//! Prints the exact KL divergence and its quadratic surrogate as CSV for
//! τ = 15, d_z = 10.

use tilted_vae::tilted::{mu_grid, TiltedPrior};

pub fn main() -> tilted_vae::Result<()> {
    let prior = TiltedPrior::new(15.0, 10)?;
    println!("mu_norm,exact,quadratic");
    for m in mu_grid(31, 30.0) {
        println!("{m},{},{}", prior.exact_kld(m)?, prior.quadratic_kld(m));
    }
    eprintln!("gamma = {:.4}, committed rate = {:.4}", prior.gamma(), prior.committed_rate());
    Ok(())
}

//! Solves for γ, the committed rate δ and log Z_τ at a few (τ, d_z) pairs.

use tilted_vae::tilted::TiltedPrior;

pub fn main() -> tilted_vae::Result<()> {
    println!("{:>6} {:>5} {:>10} {:>10} {:>12}", "tau", "d_z", "gamma", "delta", "log Z");
    for (tau, d_z) in [(10.0, 10), (20.0, 10), (30.0, 10), (15.0, 100), (25.0, 100), (40.0, 100)] {
        let p = TiltedPrior::new(tau, d_z)?;
        println!(
            "{tau:>6} {d_z:>5} {:>10.4} {:>10.4} {:>12.4}",
            p.gamma(),
            p.committed_rate(),
            p.log_z_tau()
        );
    }
    Ok(())
}

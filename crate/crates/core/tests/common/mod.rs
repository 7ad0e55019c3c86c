#![allow(dead_code)]

use tilted_vae::sampler::RngStream;
use tilted_vae::tilted::TiltedPrior;

pub fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `E‖z‖` for `z ~ N(μ, I)` with `‖μ‖ = mu_norm`, by sampling.
pub fn mc_norm_mean(d: usize, mu_norm: f64, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = RngStream::new(seed);
    let mut z = vec![0.0; d];
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            rng.fill_normal(&mut z);
            z[0] += mu_norm;
            norm(&z)
        })
        .collect();
    mean_se(&xs)
}

fn ln_gamma_half_integer(k: usize) -> f64 {
    // ln Γ(k/2) by Γ(x+1) = xΓ(x) from Γ(1) = 1 or Γ(1/2) = √π.
    let (mut x, mut acc) = if k.is_multiple_of(2) { (1.0, 0.0) } else { (0.5, 0.5 * std::f64::consts::PI.ln()) };
    while x < k as f64 / 2.0 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// `log E[e^{τ‖z‖}]` for standard normal `z` in `d` dimensions, estimated by
/// importance sampling the radius from `N(m, 1.5²)` centred on the tilted
/// radial mode. Returns the estimate and the relative standard error of the
/// un-logged estimate.
pub fn mc_log_normalizer(tau: f64, d: usize, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = RngStream::new(seed);
    let k = d as f64 - 1.0;
    let mode = 0.5 * (tau + (tau * tau + 4.0 * k).sqrt());
    let s = 1.5;
    let log_chi_norm = (d as f64 / 2.0 - 1.0) * 2f64.ln() + ln_gamma_half_integer(d);
    let log_prop_norm = (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_w: Vec<f64> = (0..n)
        .map(|_| {
            let r = mode + s * rng.normal();
            if r <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let log_target = tau * r + k * r.ln() - 0.5 * r * r - log_chi_norm;
            let log_prop = -0.5 * ((r - mode) / s).powi(2) - log_prop_norm;
            log_target - log_prop
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let (mean, se) = mean_se(&w);
    (max + mean.ln(), se / mean)
}

/// Plain `log E[e^{τ‖z‖}]` by sampling `z` directly.
pub fn mc_log_normalizer_direct(tau: f64, d: usize, n: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut z = vec![0.0; d];
    let s: Vec<f64> = (0..n)
        .map(|_| {
            rng.fill_normal(&mut z);
            tau * norm(&z)
        })
        .collect();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + (s.iter().map(|v| (v - max).exp()).sum::<f64>() / n as f64).ln()
}

/// `E_{z~N(μ,I)}[log q(z) − log ρ_τ(z)]` by sampling, with its standard error.
pub fn mc_kld(prior: &TiltedPrior, mu_norm: f64, n: usize, seed: u64) -> (f64, f64) {
    let d = prior.d_z();
    let mut rng = RngStream::new(seed);
    let mut eps = vec![0.0; d];
    let tau = prior.tau();
    let log_z = prior.log_z_tau();
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            rng.fill_normal(&mut eps);
            let e2: f64 = eps.iter().map(|v| v * v).sum();
            let mut z = eps.clone();
            z[0] += mu_norm;
            let r = norm(&z);
            -0.5 * e2 - tau * r + 0.5 * r * r + log_z
        })
        .collect();
    mean_se(&xs)
}

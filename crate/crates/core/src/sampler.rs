//! Random generation: seeded streams, the two-step aggregated-posterior
//! sampler `z = r U`, and an exact rejection sampler for the tilted prior.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tilted::TiltedPrior;

/// A reproducible random stream identified by `(seed, stream id)`.
///
/// Distinct stream ids under one seed give independent sequences, so parallel
/// workers can each own a stream and still produce deterministic output.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Radial model `‖z‖ ~ N(z̄, σ_r²)` of the aggregated posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialLaw {
    z_bar: f64,
    sigma_r: f64,
}

impl RadialLaw {
    pub fn new(z_bar: f64) -> Result<Self> {
        Self::with_sigma(z_bar, 1.0)
    }

    pub fn with_sigma(z_bar: f64, sigma_r: f64) -> Result<Self> {
        if !(z_bar > 0.0 && z_bar.is_finite()) {
            return Err(Error::domain(format!("z_bar must be positive, got {z_bar}")));
        }
        if !(sigma_r > 0.0 && sigma_r.is_finite()) {
            return Err(Error::domain(format!("sigma_r must be positive, got {sigma_r}")));
        }
        Ok(RadialLaw { z_bar, sigma_r })
    }

    /// Mean and standard deviation of the given radii.
    pub fn estimate(radii: &[f64]) -> Result<Self> {
        if radii.len() < 2 {
            return Err(Error::domain("need at least two radii to estimate a law"));
        }
        let n = radii.len() as f64;
        let mean = radii.iter().sum::<f64>() / n;
        let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self::with_sigma(mean, var.sqrt())
    }

    pub fn z_bar(&self) -> f64 {
        self.z_bar
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    /// CDF of `N(z̄, σ_r²)` truncated to `(0, ∞)`.
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let lo = normal_cdf(-self.z_bar / self.sigma_r);
        (normal_cdf((r - self.z_bar) / self.sigma_r) - lo) / (1.0 - lo)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// A uniformly distributed unit vector in `d_z` dimensions.
pub fn sample_unit_sphere(rng: &mut RngStream, d_z: usize) -> Result<Vec<f64>> {
    if d_z == 0 {
        return Err(Error::domain("d_z must be >= 1"));
    }
    let mut v = vec![0.0; d_z];
    loop {
        rng.fill_normal(&mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for x in &mut v {
                *x /= norm;
            }
            return Ok(v);
        }
    }
}

/// Draws `r ~ N(z̄, σ_r²)`, redrawing non-positive values.
pub fn sample_posterior_radius(rng: &mut RngStream, law: &RadialLaw) -> f64 {
    loop {
        let r = law.z_bar + law.sigma_r * rng.normal();
        if r > 0.0 {
            return r;
        }
    }
}

/// `z = r U` with `U` uniform on the sphere and `r` from the radial law.
pub fn sample_model_latent(rng: &mut RngStream, law: &RadialLaw, d_z: usize) -> Result<Vec<f64>> {
    let r = sample_posterior_radius(rng, law);
    let mut u = sample_unit_sphere(rng, d_z)?;
    for x in &mut u {
        *x *= r;
    }
    Ok(u)
}

/// Proposals without an acceptance after which the proposal is declared unfit.
const REJECTION_WARMUP: usize = 1000;

/// Mode of the radial density `x^{d−1} e^{τx − x²/2}`.
pub fn radial_mode(tau: f64, d_z: usize) -> f64 {
    let k = d_z as f64 - 1.0;
    0.5 * (tau + (tau * tau + 4.0 * k).sqrt())
}

/// Exact draw from the tilted prior.
///
/// The radius is sampled by rejection from `N(mode, 1)`; the log acceptance
/// ratio `(d−1)(ln(x/m) − x/m + 1)` is never positive.
pub fn sample_tilted_prior(rng: &mut RngStream, prior: &TiltedPrior) -> Result<Vec<f64>> {
    let d_z = prior.d_z();
    let mode = radial_mode(prior.tau(), d_z);
    let k = d_z as f64 - 1.0;
    let mut proposals = 0usize;
    let r = loop {
        proposals += 1;
        if proposals > REJECTION_WARMUP {
            return Err(Error::SamplerConfig(format!(
                "no acceptance in {REJECTION_WARMUP} proposals (tau={}, d_z={d_z})",
                prior.tau()
            )));
        }
        let x = mode + rng.normal();
        if x <= 0.0 {
            continue;
        }
        let log_accept = if k == 0.0 {
            0.0
        } else {
            let t = x / mode;
            k * (t.ln() - t + 1.0)
        };
        if rng.uniform().ln() < log_accept {
            break x;
        }
    };
    let mut u = sample_unit_sphere(rng, d_z)?;
    for x in &mut u {
        *x *= r;
    }
    Ok(u)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Writes one latent vector per row, columns `z0..z{d-1}`.
pub fn write_latents_csv<W: Write>(out: W, latents: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    if let Some(first) = latents.first() {
        let header: Vec<String> = (0..first.len()).map(|i| format!("z{i}")).collect();
        wtr.write_record(&header)?;
    }
    for z in latents {
        wtr.write_record(z.iter().map(|v| format!("{v:e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

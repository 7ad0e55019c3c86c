//! A small MLP variational autoencoder trained against either the standard
//! Gaussian prior or the tilted prior's quadratic KL surrogate.

mod checkpoint;
mod mlp;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sampler::{ks_distance, RadialLaw, RngStream};
use crate::tilted::TiltedPrior;

pub use checkpoint::{
    load_checkpoint, manifest_path, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointManifest,
    CHECKPOINT_VERSION,
};
pub use mlp::{Dense, Mlp, INIT_STD};

/// Hidden widths of the encoder; the decoder mirrors them.
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 128];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Tilted(TiltedPrior),
    /// Standard normal prior with a learned diagonal encoder scale.
    Gaussian,
    /// Standard normal prior with the encoder scale fixed at one.
    GaussianUnitSigma,
}

impl Prior {
    /// Whether the encoder also emits `log σ`.
    pub fn learns_sigma(&self) -> bool {
        matches!(self, Prior::Gaussian)
    }

    pub fn tilted(&self) -> Option<&TiltedPrior> {
        match self {
            Prior::Tilted(p) => Some(p),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::Tilted(_) => "tilted",
            Prior::Gaussian => "gaussian",
            Prior::GaussianUnitSigma => "gaussian-unit-sigma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    encoder: Mlp,
    decoder: Mlp,
    prior: Prior,
    d_x: usize,
    d_z: usize,
    z_bar: Option<f64>,
}

/// Encoder output for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub mu: Vec<f64>,
    pub log_sigma: Option<Vec<f64>>,
}

/// Batched encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEncoding {
    pub mu: Array2<f64>,
    pub log_sigma: Option<Array2<f64>>,
}

/// Per-sample ELBO pieces: squared-l2 reconstruction error and KL term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ElboTerms {
    pub recon: f64,
    pub kld: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.recon + self.kld
    }
}

impl VaeModel {
    /// Encoder widths `d_x → hidden… → d_z (·2 when σ is learned)` and a
    /// mirrored decoder, initialised from `seed`.
    pub fn new(d_x: usize, d_z: usize, prior: Prior, hidden: &[usize], seed: u64) -> Result<Self> {
        if d_x == 0 || d_z == 0 {
            return Err(Error::domain("d_x and d_z must be positive"));
        }
        if let Prior::Tilted(p) = &prior {
            if p.d_z() != d_z {
                return Err(Error::DimensionMismatch {
                    expected: d_z,
                    got: p.d_z(),
                });
            }
        }
        let enc_out = if prior.learns_sigma() { 2 * d_z } else { d_z };
        let mut enc_dims = vec![d_x];
        enc_dims.extend_from_slice(hidden);
        enc_dims.push(enc_out);
        let mut dec_dims = vec![d_z];
        dec_dims.extend(hidden.iter().rev());
        dec_dims.push(d_x);
        let mut rng = RngStream::substream(seed, 0);
        let encoder = Mlp::new(&enc_dims, &mut rng)?;
        let decoder = Mlp::new(&dec_dims, &mut rng)?;
        Ok(VaeModel {
            encoder,
            decoder,
            prior,
            d_x,
            d_z,
            z_bar: None,
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, prior: Prior, z_bar: Option<f64>) -> Result<Self> {
        let d_x = encoder.input_dim();
        let d_z = decoder.input_dim();
        let enc_out = if prior.learns_sigma() { 2 * d_z } else { d_z };
        if encoder.output_dim() != enc_out {
            return Err(Error::DimensionMismatch {
                expected: enc_out,
                got: encoder.output_dim(),
            });
        }
        if decoder.output_dim() != d_x {
            return Err(Error::DimensionMismatch {
                expected: d_x,
                got: decoder.output_dim(),
            });
        }
        if let Prior::Tilted(p) = &prior {
            if p.d_z() != d_z {
                return Err(Error::DimensionMismatch {
                    expected: d_z,
                    got: p.d_z(),
                });
            }
        }
        Ok(VaeModel {
            encoder,
            decoder,
            prior,
            d_x,
            d_z,
            z_bar,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    /// Mean encoded norm over the training set, once computed.
    pub fn z_bar(&self) -> Option<f64> {
        self.z_bar
    }

    pub fn set_z_bar(&mut self, z_bar: Option<f64>) {
        self.z_bar = z_bar;
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.decoder.parameter_count()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Encoding> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let enc = self.encode_batch(view)?;
        Ok(Encoding {
            mu: enc.mu.row(0).to_vec(),
            log_sigma: enc.log_sigma.map(|ls| ls.row(0).to_vec()),
        })
    }

    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<BatchEncoding> {
        let out = self.encoder.forward(x)?;
        Ok(self.split_encoding(out))
    }

    fn split_encoding(&self, out: Array2<f64>) -> BatchEncoding {
        if self.prior.learns_sigma() {
            BatchEncoding {
                mu: out.slice(s![.., ..self.d_z]).to_owned(),
                log_sigma: Some(out.slice(s![.., self.d_z..]).to_owned()),
            }
        } else {
            BatchEncoding {
                mu: out,
                log_sigma: None,
            }
        }
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, z.len()), z).expect("row view");
        Ok(self.decoder.forward(view)?.row(0).to_vec())
    }

    pub fn decode_batch(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.decoder.forward(z)
    }

    /// Per-sample KL term for encoder outputs `mu` (and `log σ`).
    fn kld_row(&self, mu: ArrayView1<'_, f64>, log_sigma: Option<ArrayView1<'_, f64>>) -> f64 {
        match (&self.prior, log_sigma) {
            (Prior::Tilted(p), _) => p.quadratic_kld(norm(mu)),
            (_, Some(ls)) => gaussian_kld(mu, ls),
            (_, None) => 0.5 * mu.iter().map(|m| m * m).sum::<f64>(),
        }
    }

    /// Mean negative ELBO over `x` with fixed reparameterization noise `eps`,
    /// optionally with the gradient of every parameter.
    pub fn loss_with_noise(
        &self,
        x: ArrayView2<'_, f64>,
        eps: ArrayView2<'_, f64>,
        with_grad: bool,
    ) -> Result<(ElboTerms, Option<Gradients>)> {
        let b = x.nrows();
        if x.ncols() != self.d_x {
            return Err(Error::DimensionMismatch {
                expected: self.d_x,
                got: x.ncols(),
            });
        }
        let (enc_out, enc_tape) = self.encoder.forward_tape(x, with_grad)?;
        let enc = self.split_encoding(enc_out);
        let sigma = enc.log_sigma.as_ref().map(|ls| ls.mapv(f64::exp));
        let mut z = enc.mu.clone();
        match &sigma {
            Some(sg) => z += &(&eps * sg),
            None => z += &eps,
        }
        let (x_hat, dec_tape) = self.decoder.forward_tape(z.view(), with_grad)?;
        let diff = &x_hat - &x;

        let mut terms = ElboTerms::default();
        for i in 0..b {
            terms.recon += diff.row(i).iter().map(|d| d * d).sum::<f64>();
            let ls = enc.log_sigma.as_ref().map(|l| l.row(i));
            terms.kld += self.kld_row(enc.mu.row(i), ls);
        }
        terms.recon /= b as f64;
        terms.kld /= b as f64;
        if !with_grad {
            return Ok((terms, None));
        }

        let scale = 1.0 / b as f64;
        let (dec_grads, g_z) = self.decoder.backward(&dec_tape, diff.mapv(|d| 2.0 * d * scale));
        let mut g_mu = g_z.clone();
        match &self.prior {
            Prior::Tilted(p) => {
                for (mut g_row, mu_row) in g_mu.rows_mut().into_iter().zip(enc.mu.rows()) {
                    let kg = tilted_kld_grad(mu_row, p.gamma());
                    g_row.scaled_add(scale, &kg);
                }
            }
            _ => g_mu.scaled_add(scale, &enc.mu),
        }
        let g_enc = match (&enc.log_sigma, &sigma) {
            (Some(_), Some(sg)) => {
                // dz/dlogσ = ε σ; dKL/dlogσ = σ² − 1.
                let mut g_ls = &g_z * &eps * sg;
                g_ls.scaled_add(scale, &sg.mapv(|s| s * s - 1.0));
                ndarray::concatenate(Axis(1), &[g_mu.view(), g_ls.view()]).expect("same rows")
            }
            _ => g_mu,
        };
        let (enc_grads, _) = self.encoder.backward(&enc_tape, g_enc);
        Ok((
            terms,
            Some(Gradients {
                encoder: enc_grads,
                decoder: dec_grads,
            }),
        ))
    }

    fn draw_noise(&self, rng: &mut RngStream, rows: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.d_z), || rng.normal())
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self
            .encoder
            .layers_mut()
            .iter_mut()
            .chain(self.decoder.layers_mut().iter_mut())
        {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// All parameters in a fixed order (encoder then decoder, weight then bias).
    pub fn parameters(&self) -> Vec<f64> {
        self.encoder
            .layers()
            .iter()
            .chain(self.decoder.layers())
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                got: values.len(),
            });
        }
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&values[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `½ Σ (σ² + μ² − 1 − ln σ²)`.
fn gaussian_kld(mu: ArrayView1<'_, f64>, log_sigma: ArrayView1<'_, f64>) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, ls)| (2.0 * ls).exp() + m * m - 1.0 - 2.0 * ls)
        .sum::<f64>()
}

/// Gradient of `½(‖μ‖ − γ)²` with respect to `μ`: `(‖μ‖ − γ) μ / ‖μ‖`,
/// taken as zero at the origin.
pub fn tilted_kld_grad(mu: ArrayView1<'_, f64>, gamma: f64) -> Array1<f64> {
    let n = norm(mu);
    if n == 0.0 {
        return Array1::zeros(mu.len());
    }
    mu.mapv(|m| (n - gamma) * m / n)
}

/// Parameter gradients in the same layout as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
}

impl Gradients {
    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [l.weight.as_slice().expect("layout"), l.bias.as_slice().expect("layout")])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// `z = μ + ε ⊙ σ` with fresh `ε ~ N(0, I)`; `σ ≡ 1` when `log_sigma` is absent.
pub fn reparameterize(rng: &mut RngStream, mu: &[f64], log_sigma: Option<&[f64]>) -> Result<Vec<f64>> {
    if let Some(ls) = log_sigma {
        if ls.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: ls.len(),
            });
        }
    }
    Ok(mu
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let sigma = log_sigma.map_or(1.0, |ls| ls[i].exp());
            m + rng.normal() * sigma
        })
        .collect())
}

/// Single-draw ELBO terms for one input.
pub fn elbo_terms(model: &VaeModel, rng: &mut RngStream, x: &[f64]) -> Result<ElboTerms> {
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::domain("bad input"))?;
    let eps = model.draw_noise(rng, 1);
    Ok(model.loss_with_noise(view, eps.view(), false)?.0)
}

/// Training hyperparameters; the optimizer is Adam with the usual decay
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            grad_clip: 100.0,
            seed: 7,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("epochs and batch_size must be positive"));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("grad_clip", self.grad_clip),
            ("adam_eps", self.adam_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::domain("Adam decay constants must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adam state plus the noise stream for one training run.
pub struct Trainer {
    config: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    noise: RngStream,
}

/// Mean ELBO terms of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub terms: ElboTerms,
    pub grad_norm: f64,
}

impl Trainer {
    pub fn new(model: &VaeModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = model.parameter_count();
        Ok(Trainer {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            noise: RngStream::substream(config.seed, 2),
        })
    }

    /// One Adam step on the mean negative ELBO of `batch`, after clipping the
    /// global gradient norm at `grad_clip`.
    pub fn step(&mut self, model: &mut VaeModel, batch: ArrayView2<'_, f64>) -> Result<StepStats> {
        if batch.nrows() == 0 {
            return Err(Error::domain("empty batch"));
        }
        let eps = model.draw_noise(&mut self.noise, batch.nrows());
        let (terms, grads) = model.loss_with_noise(batch, eps.view(), true)?;
        if !(terms.recon.is_finite() && terms.kld.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch: 0,
                batch: 0,
                recon: terms.recon,
                kld: terms.kld,
            });
        }
        let grads = grads.expect("gradients requested");
        let grad_norm = grads.norm();
        let clip = if grad_norm > self.config.grad_clip {
            self.config.grad_clip / grad_norm
        } else {
            1.0
        };

        self.t += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t);
        let bias2 = 1.0 - c.beta2.powi(self.t);
        let mut k = 0;
        for (param, grad) in model.param_slices_mut().into_iter().zip(grads.slices()) {
            for (p, &g) in param.iter_mut().zip(grad) {
                let g = g * clip;
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *p -= c.learning_rate * (*m / bias1) / ((*v / bias2).sqrt() + c.adam_eps);
                k += 1;
            }
        }
        Ok(StepStats { terms, grad_norm })
    }
}

/// One step with a fresh optimizer state, for callers that only need a single
/// update.
pub fn grad_step(model: &mut VaeModel, batch: ArrayView2<'_, f64>, config: TrainConfig) -> Result<StepStats> {
    Trainer::new(model, config)?.step(model, batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub kld: f64,
}

impl EpochLog {
    pub fn loss(&self) -> f64 {
        self.recon + self.kld
    }
}

/// Trains for `config.epochs` passes over shuffled mini-batches. Deterministic
/// for a given `(model, dataset, config)`.
pub fn train(mut model: VaeModel, dataset: &Dataset, config: &TrainConfig) -> Result<(VaeModel, Vec<EpochLog>)> {
    if dataset.d_x() != model.d_x {
        return Err(Error::DimensionMismatch {
            expected: model.d_x,
            got: dataset.d_x(),
        });
    }
    let mut trainer = Trainer::new(&model, *config)?;
    let mut order_rng = RngStream::substream(config.seed, 1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order_rng.shuffle(&mut order);
        let mut sums = ElboTerms::default();
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = dataset.samples().select(Axis(0), chunk);
            let stats = trainer.step(&mut model, batch.view()).map_err(|e| match e {
                Error::NonFiniteLoss { recon, kld, .. } => Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    recon,
                    kld,
                },
                other => other,
            })?;
            let w = chunk.len() as f64;
            sums.recon += stats.terms.recon * w;
            sums.kld += stats.terms.kld * w;
        }
        let n = dataset.len() as f64;
        log.push(EpochLog {
            epoch,
            recon: sums.recon / n,
            kld: sums.kld / n,
        });
    }
    Ok((model, log))
}

/// Deterministic per-sample terms using the encoder mean, with the tilted
/// KL evaluated both exactly and by its quadratic surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactTerms {
    pub recon: f64,
    pub exact_kld: f64,
    pub quadratic_kld: f64,
}

pub fn exact_elbo(model: &VaeModel, dataset: &Dataset) -> Result<Vec<ExactTerms>> {
    let prior = model
        .prior
        .tilted()
        .ok_or_else(|| Error::Unsupported("exact KL needs a tilted-prior model".into()))?;
    let enc = model.encode_batch(dataset.samples().view())?;
    let x_hat = model.decode_batch(enc.mu.view())?;
    let mut out = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let m = norm(enc.mu.row(i));
        let recon = (&x_hat.row(i) - &dataset.row(i)).iter().map(|d| d * d).sum();
        out.push(ExactTerms {
            recon,
            exact_kld: prior.exact_kld(m)?,
            quadratic_kld: prior.quadratic_kld(m),
        });
    }
    Ok(out)
}

/// Radial statistics of encoded data.
///
/// `z_norms` are norms of one posterior draw `z = μ + ε ⊙ σ` per sample, and
/// `z_bar`/`sigma` are their mean and standard deviation. The encoder-mean
/// norms are kept alongside for comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialDiagnostics {
    pub mu_norms: Vec<f64>,
    pub z_norms: Vec<f64>,
    pub mu_bar: f64,
    pub z_bar: f64,
    pub sigma: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

pub fn radial_diagnostics(model: &VaeModel, dataset: &Dataset, rng: &mut RngStream) -> Result<RadialDiagnostics> {
    if dataset.is_empty() {
        return Err(Error::domain("radial diagnostics need a non-empty dataset"));
    }
    let enc = model.encode_batch(dataset.samples().view())?;
    let mu_norms: Vec<f64> = enc.mu.rows().into_iter().map(norm).collect();
    let mut z = enc.mu.clone();
    let eps = model.draw_noise(rng, z.nrows());
    match &enc.log_sigma {
        Some(ls) => z += &(&eps * &ls.mapv(f64::exp)),
        None => z += &eps,
    }
    let z_norms: Vec<f64> = z.rows().into_iter().map(norm).collect();
    let (mu_bar, _) = mean_sd(&mu_norms);
    let (z_bar, sigma) = mean_sd(&z_norms);
    Ok(RadialDiagnostics {
        mu_norms,
        z_norms,
        mu_bar,
        z_bar,
        sigma,
    })
}

/// KS distance between the sampled latent norms and `N(z̄, 1)`.
pub fn radial_ks(diag: &RadialDiagnostics) -> Result<f64> {
    let law = RadialLaw::new(diag.z_bar)?;
    Ok(ks_distance(&diag.z_norms, |r| law.cdf(r)))
}

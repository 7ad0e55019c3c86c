//! The `tiltvae` command line.
//!
//! Every command writes its outputs plus a `<output>.manifest.toml` holding
//! the fully resolved job. `tiltvae replay <manifest> --out-dir DIR` runs the
//! same job again with outputs redirected into `DIR`.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{DataSpec, Dataset};
use crate::error::{Error, Result};
use crate::ood::{
    read_scores_csv, roc, roc_summary_json, score_batch, score_batch_averaged, write_roc_csv, write_scores_csv,
    ScoredSample,
};
use crate::sampler::{sample_model_latent, sample_tilted_prior, write_latents_csv, RadialLaw, RngStream};
use crate::tilted::{verify_bound_sweep_with, GammaSolverConfig, TiltedPrior};
use crate::vae::{
    load_checkpoint, radial_diagnostics, save_checkpoint, train, Prior, TrainConfig, VaeModel,
};

#[derive(Debug, Parser)]
#[command(name = "tiltvae", version, about = "Tilted-Gaussian VAE toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for γ and report the committed rate and log Z_τ.
    Gamma(GammaArgs),
    /// Tabulate the exact and quadratic KL against ‖μ‖.
    KldTable(KldTableArgs),
    /// Check the quadratic surrogate against the exact KL over a (d_z, τ) grid.
    Sweep(SweepArgs),
    /// Train a VAE from a TOML config.
    Train(TrainArgs),
    /// Score a dataset with a trained model.
    Score(ScoreArgs),
    /// ROC curve and AUROC from two score files.
    Roc(RocArgs),
    /// Draw latents (or decoded samples) from the prior or aggregated posterior.
    Sample(SampleArgs),
    /// Compare single-pass and multi-draw scoring throughput.
    Bench(BenchArgs),
    /// Re-run a job from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Gradient-descent learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Central-difference half-width.
    #[arg(long, default_value_t = 1e-3)]
    pub fd_step: f64,
}

impl SolverArgs {
    fn config(&self) -> GammaSolverConfig {
        GammaSolverConfig {
            learning_rate: self.lr,
            steps: self.steps,
            fd_step: self.fd_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GammaArgs {
    #[arg(long)]
    pub tau: f64,
    #[arg(long = "dz")]
    pub d_z: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "gamma.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct KldTableArgs {
    #[arg(long)]
    pub tau: f64,
    #[arg(long = "dz")]
    pub d_z: usize,
    #[arg(long, default_value_t = 30.0)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 301)]
    pub points: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "kld_table.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Latent dimensions, as a list `2,5,10` or inclusive range `2..200`.
    #[arg(long, default_value = "2,5,10,25,50,100,200")]
    pub d_grid: String,
    /// Tilt exponents w (τ = 1.2^w), same syntax as `--d-grid`.
    #[arg(long, default_value = "-20..25", allow_hyphen_values = true)]
    pub w_grid: String,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long, default_value_t = 200.0)]
    pub mu_max: f64,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset spec, e.g. `noise:n=500,h=16,w=16,seed=3`.
    #[arg(long)]
    pub data: String,
    /// Average the reconstruction term over this many latent draws.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RocArgs {
    #[arg(long)]
    pub in_scores: PathBuf,
    #[arg(long)]
    pub out_scores: PathBuf,
    #[arg(long, default_value = "roc.csv")]
    pub out: PathBuf,
    /// AUROC summary JSON; defaults to the ROC path with a `.json` extension.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Checkpoint supplying d_z and z̄ (and the decoder with `--decode`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "dz")]
    pub d_z: Option<usize>,
    /// Radial mean of the aggregated posterior.
    #[arg(long)]
    pub zbar: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write decoded images instead of latents.
    #[arg(long)]
    pub decode: bool,
    #[arg(long, default_value = "samples.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, default_value_t = 256)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "bench.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Resolved training configuration, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub spec: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `tilted`, `gaussian` or `gaussian-unit-sigma`.
    pub prior: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub d_z: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

const TRAIN_DEFAULTS: &str = r#"
[model]
hidden = [256, 128]
seed = 7

[train]
epochs = 50
batch_size = 64
learning_rate = 1e-3
grad_clip = 100.0
seed = 7
beta1 = 0.9
beta2 = 0.999
adam_eps = 1e-8
"#;

const TRAIN_REQUIRED: [&str; 4] = ["data.spec", "model.prior", "model.d_z", "output.checkpoint"];

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn lookup<'a>(table: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let mut parts = key.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    // Bare words that are not TOML literals are taken as strings.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("config key `{p}` is not a table")))?;
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

impl TrainFile {
    /// Defaults, then `text`, then `overrides`; reports the first missing
    /// required key by its dotted name.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = TRAIN_DEFAULTS.parse().expect("built-in defaults parse");
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        merge(&mut table, file);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        for key in TRAIN_REQUIRED {
            if lookup(&table, key).is_none() {
                return Err(Error::Config(format!("missing config key `{key}`")));
            }
        }
        if lookup(&table, "model.prior").and_then(|v| v.as_str()) == Some("tilted")
            && lookup(&table, "model.tau").is_none()
        {
            return Err(Error::Config("missing config key `model.tau`".into()));
        }
        if lookup(&table, "output.log").is_none() {
            let ckpt = lookup(&table, "output.checkpoint")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Config("`output.checkpoint` must be a path string".into()))?
                .to_string();
            apply_override(&mut table, &format!("output.log=\"{}.log.csv\"", ckpt.replace('\\', "/")))?;
        }
        let resolved: TrainFile = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        resolved.train.validate()?;
        resolved.prior()?;
        Ok(resolved)
    }

    pub fn prior(&self) -> Result<Prior> {
        match self.model.prior.as_str() {
            "tilted" => {
                let tau = self
                    .model
                    .tau
                    .ok_or_else(|| Error::Config("missing config key `model.tau`".into()))?;
                Ok(Prior::Tilted(TiltedPrior::new(tau, self.model.d_z)?))
            }
            "gaussian" => Ok(Prior::Gaussian),
            "gaussian-unit-sigma" => Ok(Prior::GaussianUnitSigma),
            other => Err(Error::Config(format!("unknown prior `{other}`"))),
        }
    }
}

/// A command with every default and path resolved; what manifests store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Gamma(GammaArgs),
    KldTable(KldTableArgs),
    Sweep(SweepArgs),
    Train(TrainFile),
    Score(ScoreArgs),
    Roc(RocArgs),
    Sample(SampleArgs),
    Bench(BenchArgs),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Gamma(_) => "gamma",
            Job::KldTable(_) => "kld-table",
            Job::Sweep(_) => "sweep",
            Job::Train(_) => "train",
            Job::Score(_) => "score",
            Job::Roc(_) => "roc",
            Job::Sample(_) => "sample",
            Job::Bench(_) => "bench",
        }
    }

    fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Job::Gamma(a) => vec![&mut a.out],
            Job::KldTable(a) => vec![&mut a.out],
            Job::Sweep(a) => vec![&mut a.out],
            Job::Train(t) => vec![&mut t.output.checkpoint, &mut t.output.log],
            Job::Score(a) => vec![&mut a.out],
            Job::Roc(a) => {
                let mut v = vec![&mut a.out];
                v.extend(a.summary.as_mut());
                v
            }
            Job::Sample(a) => vec![&mut a.out],
            Job::Bench(a) => vec![&mut a.out],
        }
    }

    fn primary_output(&self) -> PathBuf {
        let mut job = self.clone();
        job.outputs_mut()[0].clone()
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Job::Train(t) => Some(t.train.seed),
            Job::Score(a) => Some(a.seed),
            Job::Sample(a) => Some(a.seed),
            Job::Bench(a) => Some(a.seed),
            _ => None,
        }
    }

    /// Points every output at `dir`, keeping file names.
    pub fn redirect_outputs(&mut self, dir: &Path) {
        for p in self.outputs_mut() {
            let name = p.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("output"));
            *p = dir.join(name);
        }
    }
}

/// Record of one run, written as `<primary output>.manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub library_version: String,
    pub seed: Option<u64>,
    /// Pixel scaling applied to every loaded dataset.
    pub pixel_range: String,
    pub duration_secs: f64,
    pub artifacts: Vec<PathBuf>,
    pub job: Job,
}

pub fn run_manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::file(path, e))
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::file(p, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::file(path, e))?))
}

fn load_data(spec: &str) -> Result<Dataset> {
    spec.parse::<DataSpec>()?.load()
}

/// Parses `1,2,3` or the inclusive range `a..b`.
pub fn parse_grid<T: TryFrom<i64>>(text: &str) -> Result<Vec<T>> {
    let bad = || Error::Config(format!("invalid grid `{text}`"));
    let text = text.trim();
    let values: Vec<i64> = if let Some((a, b)) = text.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    values.into_iter().map(|v| T::try_from(v).map_err(|_| bad())).collect()
}

/// What a job produced; `deferred` is an error to report after the manifest
/// has been written.
struct Outcome {
    artifacts: Vec<PathBuf>,
    deferred: Option<Error>,
}

impl Outcome {
    fn done(artifacts: Vec<PathBuf>) -> Self {
        Outcome {
            artifacts,
            deferred: None,
        }
    }
}

fn run_gamma(a: &GammaArgs) -> Result<Outcome> {
    let prior = TiltedPrior::with_solver(a.tau, a.d_z, &a.solver.config())?;
    println!("gamma = {}", prior.gamma());
    println!("committed_rate = {}", prior.committed_rate());
    println!("log_z_tau = {}", prior.log_z_tau());
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["tau", "d_z", "gamma", "committed_rate", "log_z_tau"])?;
    w.write_record([
        format!("{:e}", a.tau),
        a.d_z.to_string(),
        format!("{:e}", prior.gamma()),
        format!("{:e}", prior.committed_rate()),
        format!("{:e}", prior.log_z_tau()),
    ])?;
    w.flush()?;
    Ok(Outcome::done(vec![a.out.clone()]))
}

fn run_kld_table(a: &KldTableArgs) -> Result<Outcome> {
    if a.points < 2 || !(a.mu_max > 0.0 && a.mu_max.is_finite()) {
        return Err(Error::domain("kld-table needs --points ≥ 2 and a positive --mu-max"));
    }
    let prior = TiltedPrior::with_solver(a.tau, a.d_z, &a.solver.config())?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["mu_norm", "exact", "quadratic"])?;
    for m in crate::tilted::mu_grid(a.points, a.mu_max) {
        w.write_record([
            format!("{m:e}"),
            format!("{:e}", prior.exact_kld(m)?),
            format!("{:e}", prior.quadratic_kld(m)),
        ])?;
    }
    w.flush()?;
    println!("gamma = {}, committed_rate = {}", prior.gamma(), prior.committed_rate());
    Ok(Outcome::done(vec![a.out.clone()]))
}

fn run_sweep(a: &SweepArgs) -> Result<Outcome> {
    let d_grid: Vec<usize> = parse_grid(&a.d_grid)?;
    let w_grid: Vec<i32> = parse_grid(&a.w_grid)?;
    let report = verify_bound_sweep_with(&d_grid, &w_grid, a.points, a.mu_max, &GammaSolverConfig::default())?;
    report.write_csv(create(&a.out)?)?;
    let violations = report.violations().count();
    let failures = report.failures().count();
    println!(
        "{} cells, {violations} violation(s), {failures} failure(s)",
        report.cells.len()
    );
    if let Some(worst) = report
        .cells
        .iter()
        .filter(|c| c.min_margin.is_finite())
        .min_by(|x, y| x.min_margin.total_cmp(&y.min_margin))
    {
        println!(
            "worst margin {:e} at d_z={}, w={}, |mu|={}",
            worst.min_margin, worst.d_z, worst.w, worst.argmin_mu
        );
    }
    let deferred = if violations + failures > 0 {
        Some(Error::BoundViolated {
            cells: violations + failures,
        })
    } else {
        None
    };
    Ok(Outcome {
        artifacts: vec![a.out.clone()],
        deferred,
    })
}

fn run_train(t: &TrainFile) -> Result<Outcome> {
    let data = load_data(&t.data.spec)?;
    let prior = t.prior()?;
    let model = VaeModel::new(data.d_x(), t.model.d_z, prior, &t.model.hidden, t.model.seed)?;
    let (mut model, log) = train(model, &data, &t.train)?;
    let diag = radial_diagnostics(&model, &data, &mut RngStream::substream(t.train.seed, 3))?;
    model.set_z_bar(Some(diag.z_bar));

    let mut w = csv::Writer::from_writer(create(&t.output.log)?);
    w.write_record(["epoch", "recon", "kld", "loss"])?;
    for e in &log {
        w.write_record([
            e.epoch.to_string(),
            format!("{:e}", e.recon),
            format!("{:e}", e.kld),
            format!("{:e}", e.loss()),
        ])?;
    }
    w.flush()?;
    if let Some(dir) = t.output.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let ckpt_manifest = save_checkpoint(&model, &t.output.checkpoint)?;

    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        println!("loss {:.4} -> {:.4} over {} epochs", first.loss(), last.loss(), log.len());
    }
    match model.prior() {
        Prior::Tilted(p) => println!(
            "gamma = {}, committed_rate = {}, z_bar = {}, mean |mu| = {} ({})",
            p.gamma(),
            p.committed_rate(),
            diag.z_bar,
            diag.mu_bar,
            if diag.z_bar > p.gamma() { "above gamma" } else { "not above gamma" }
        ),
        _ => println!("z_bar = {}", diag.z_bar),
    }
    Ok(Outcome::done(vec![
        t.output.checkpoint.clone(),
        ckpt_manifest,
        t.output.log.clone(),
    ]))
}

fn run_score(a: &ScoreArgs) -> Result<Outcome> {
    let model = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let scores: Vec<ScoredSample> = match a.draws {
        None => score_batch(&model, data.samples().view())?,
        Some(draws) => {
            let mut rng = RngStream::new(a.seed);
            score_batch_averaged(&model, &mut rng, data.samples().view(), draws)?
        }
    };
    write_scores_csv(create(&a.out)?, &scores, data.tag())?;
    let mean = scores.iter().map(|s| s.score).sum::<f64>() / scores.len() as f64;
    println!("{} samples, mean score {mean}", scores.len());
    Ok(Outcome::done(vec![a.out.clone()]))
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_scores_csv(f)
}

fn run_roc(a: &RocArgs) -> Result<Outcome> {
    let curve = roc(&read_scores(&a.in_scores)?, &read_scores(&a.out_scores)?)?;
    write_roc_csv(create(&a.out)?, &curve)?;
    let summary = a.summary.clone().unwrap_or_else(|| a.out.with_extension("json"));
    let json = roc_summary_json(&curve);
    fs::write(&summary, format!("{json}\n")).map_err(|e| Error::file(&summary, e))?;
    println!("{json}");
    Ok(Outcome::done(vec![a.out.clone(), summary]))
}

fn write_images_csv(path: &Path, images: &ndarray::Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record((0..images.ncols()).map(|i| format!("x{i}")))?;
    for row in images.rows() {
        w.write_record(row.iter().map(|v| format!("{:e}", v.clamp(0.0, 1.0))))?;
    }
    w.flush()?;
    Ok(())
}

fn run_sample(a: &SampleArgs) -> Result<Outcome> {
    if a.n == 0 {
        return Err(Error::domain("--n must be positive"));
    }
    let mut rng = RngStream::new(a.seed);
    let model = a.model.as_deref().map(load_checkpoint).transpose()?;
    let d_z = match (&model, a.d_z) {
        (Some(m), Some(d)) if m.d_z() != d => {
            return Err(Error::DimensionMismatch {
                expected: m.d_z(),
                got: d,
            })
        }
        (Some(m), _) => m.d_z(),
        (None, Some(d)) => d,
        (None, None) => return Err(Error::Config("sample needs --model or --dz".into())),
    };
    let z_bar = a.zbar.or_else(|| model.as_ref().and_then(|m| m.z_bar()));
    let latents: Vec<Vec<f64>> = match (z_bar, a.tau) {
        (Some(z_bar), _) => {
            let law = RadialLaw::new(z_bar)?;
            (0..a.n)
                .map(|_| sample_model_latent(&mut rng, &law, d_z))
                .collect::<Result<_>>()?
        }
        (None, Some(tau)) if model.is_none() => {
            let prior = TiltedPrior::new(tau, d_z)?;
            (0..a.n)
                .map(|_| sample_tilted_prior(&mut rng, &prior))
                .collect::<Result<_>>()?
        }
        _ => return Err(Error::Config("sample needs --zbar, a checkpoint with z_bar, or --tau".into())),
    };
    if a.decode {
        let model = model.ok_or_else(|| Error::Config("--decode needs --model".into()))?;
        let flat: Vec<f64> = latents.concat();
        let z = ndarray::Array2::from_shape_vec((a.n, d_z), flat).expect("latent shape");
        write_images_csv(&a.out, &model.decode_batch(z.view())?)?;
    } else {
        write_latents_csv(create(&a.out)?, &latents)?;
    }
    Ok(Outcome::done(vec![a.out.clone()]))
}

/// Throughput of one scoring mode across repeats.
#[derive(Debug, Clone, Serialize)]
pub struct Throughput {
    pub draws: usize,
    pub images_per_sec_mean: f64,
    pub images_per_sec_min: f64,
}

fn time_repeats(repeat: usize, n: usize, mut f: impl FnMut() -> Result<()>) -> Result<(f64, f64)> {
    let mut rates = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let start = Instant::now();
        f()?;
        rates.push(n as f64 / start.elapsed().as_secs_f64().max(1e-9));
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((mean, min))
}

/// Single-pass scoring against `draws`-sample scoring on the same data.
pub fn bench_scoring(
    model: &VaeModel,
    data: &Dataset,
    repeat: usize,
    draws: usize,
    seed: u64,
) -> Result<(Throughput, Throughput)> {
    if repeat == 0 {
        return Err(Error::domain("--repeat must be positive"));
    }
    let x = data.samples().view();
    let (mean1, min1) = time_repeats(repeat, data.len(), || score_batch(model, x).map(drop))?;
    let mut rng = RngStream::new(seed);
    let (mean_b, min_b) = time_repeats(repeat, data.len(), || {
        score_batch_averaged(model, &mut rng, x, draws).map(drop)
    })?;
    Ok((
        Throughput {
            draws: 1,
            images_per_sec_mean: mean1,
            images_per_sec_min: min1,
        },
        Throughput {
            draws,
            images_per_sec_mean: mean_b,
            images_per_sec_min: min_b,
        },
    ))
}

fn run_bench(a: &BenchArgs) -> Result<Outcome> {
    let model = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let (single, multi) = bench_scoring(&model, &data, a.repeat, a.draws, a.seed)?;
    let ratio = single.images_per_sec_mean / multi.images_per_sec_mean;
    let json = serde_json::json!({
        "images": data.len(),
        "repeat": a.repeat,
        "single": single,
        "multi": multi,
        "ratio": ratio,
    });
    let text = serde_json::to_string_pretty(&json).expect("json");
    fs::write(&a.out, format!("{text}\n")).map_err(|e| Error::file(&a.out, e))?;
    println!("{text}");
    Ok(Outcome::done(vec![a.out.clone()]))
}

/// Runs a resolved job and writes its manifest.
pub fn execute(job: &Job) -> Result<RunManifest> {
    let start = Instant::now();
    let outcome = match job {
        Job::Gamma(a) => run_gamma(a),
        Job::KldTable(a) => run_kld_table(a),
        Job::Sweep(a) => run_sweep(a),
        Job::Train(t) => run_train(t),
        Job::Score(a) => run_score(a),
        Job::Roc(a) => run_roc(a),
        Job::Sample(a) => run_sample(a),
        Job::Bench(a) => run_bench(a),
    }?;
    let manifest = RunManifest {
        command: job.name().to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: job.seed(),
        pixel_range: "[0,1]".to_string(),
        duration_secs: start.elapsed().as_secs_f64(),
        artifacts: outcome.artifacts,
        job: job.clone(),
    };
    manifest.write(&run_manifest_path(&job.primary_output()))?;
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Turns parsed arguments into a job with absolute paths and materialized
/// defaults. `Replay` has no job of its own and yields `None`.
pub fn resolve(command: Command) -> Result<Option<Job>> {
    let job = match command {
        Command::Gamma(mut a) => {
            a.out = absolute(&a.out)?;
            Job::Gamma(a)
        }
        Command::KldTable(mut a) => {
            a.out = absolute(&a.out)?;
            Job::KldTable(a)
        }
        Command::Sweep(mut a) => {
            a.out = absolute(&a.out)?;
            Job::Sweep(a)
        }
        Command::Train(a) => {
            let text = fs::read_to_string(&a.config).map_err(|e| Error::file(&a.config, e))?;
            let mut t = TrainFile::resolve(&text, &a.overrides)?;
            t.output.checkpoint = absolute(&t.output.checkpoint)?;
            t.output.log = absolute(&t.output.log)?;
            Job::Train(t)
        }
        Command::Score(mut a) => {
            a.model = absolute(&a.model)?;
            a.out = absolute(&a.out)?;
            Job::Score(a)
        }
        Command::Roc(mut a) => {
            a.in_scores = absolute(&a.in_scores)?;
            a.out_scores = absolute(&a.out_scores)?;
            a.out = absolute(&a.out)?;
            a.summary = Some(absolute(&a.summary.take().unwrap_or_else(|| a.out.with_extension("json")))?);
            Job::Roc(a)
        }
        Command::Sample(mut a) => {
            a.model = a.model.as_deref().map(absolute).transpose()?;
            a.out = absolute(&a.out)?;
            Job::Sample(a)
        }
        Command::Bench(mut a) => {
            a.model = absolute(&a.model)?;
            a.out = absolute(&a.out)?;
            Job::Bench(a)
        }
        Command::Replay(_) => return Ok(None),
    };
    Ok(Some(job))
}

/// Re-runs the job recorded in `manifest` with outputs written into `out_dir`.
pub fn replay(manifest: &Path, out_dir: &Path) -> Result<RunManifest> {
    let mut job = RunManifest::read(manifest)?.job;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    job.redirect_outputs(&absolute(out_dir)?);
    execute(&job)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    match cli.command {
        Command::Replay(r) => replay(&r.manifest, &r.out_dir),
        other => execute(&resolve(other)?.expect("non-replay command")),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Replay(r) => replay(&r.manifest, &r.out_dir),
        other => resolve(other).and_then(|job| execute(&job.expect("non-replay command"))),
    };
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Out-of-distribution scoring and ROC analysis.
//!
//! The score of `x` is `‖clamp(decode(μ(x))) − x‖ + ½(‖μ(x)‖ − γ)²` for a
//! tilted model, with the Gaussian KL in place of the second term for
//! Gaussian baselines. Higher means more anomalous.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sampler::RngStream;
use crate::vae::{Prior, VaeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    InDistribution,
    OutOfDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredSample {
    pub recon_term: f64,
    pub kld_term: f64,
    pub score: f64,
    pub label: Option<Label>,
}

impl ScoredSample {
    pub fn new(recon_term: f64, kld_term: f64) -> Self {
        ScoredSample {
            recon_term,
            kld_term,
            score: recon_term + kld_term,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

fn kld_terms(model: &VaeModel, mu: ArrayView2<'_, f64>, log_sigma: Option<ArrayView2<'_, f64>>) -> Vec<f64> {
    mu.rows()
        .into_iter()
        .enumerate()
        .map(|(i, m)| match (model.prior(), log_sigma) {
            (Prior::Tilted(p), _) => 0.5 * (m.dot(&m).sqrt() - p.gamma()).powi(2),
            (_, Some(ls)) => {
                0.5 * m
                    .iter()
                    .zip(ls.row(i))
                    .map(|(mu, l)| (2.0 * l).exp() + mu * mu - 1.0 - 2.0 * l)
                    .sum::<f64>()
            }
            (_, None) => 0.5 * m.dot(&m),
        })
        .collect()
}

fn recon_l2(x_hat: &Array2<f64>, x: ArrayView2<'_, f64>) -> Vec<f64> {
    x_hat
        .rows()
        .into_iter()
        .zip(x.rows())
        .map(|(xh, xr)| {
            xh.iter()
                .zip(xr)
                .map(|(a, b)| (a.clamp(0.0, 1.0) - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn check_width(model: &VaeModel, got: usize) -> Result<()> {
    if got != model.d_x() {
        return Err(Error::DimensionMismatch {
            expected: model.d_x(),
            got,
        });
    }
    Ok(())
}

/// Deterministic score of one input, using the encoder mean.
pub fn score(model: &VaeModel, x: &[f64]) -> Result<ScoredSample> {
    check_width(model, x.len())?;
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    Ok(score_batch(model, view)?[0])
}

/// Scores every row of `x` with one batched forward pass.
pub fn score_batch(model: &VaeModel, x: ArrayView2<'_, f64>) -> Result<Vec<ScoredSample>> {
    check_width(model, x.ncols())?;
    let enc = model.encode_batch(x)?;
    let x_hat = model.decode_batch(enc.mu.view())?;
    let recon = recon_l2(&x_hat, x);
    let kld = kld_terms(model, enc.mu.view(), enc.log_sigma.as_ref().map(|a| a.view()));
    Ok(recon
        .into_iter()
        .zip(kld)
        .map(|(r, k)| ScoredSample::new(r, k))
        .collect())
}

/// Like [`score_batch`], but the reconstruction term averages over `draws`
/// reparameterized latents per input. All draws of a row are decoded in one
/// matrix product.
pub fn score_batch_averaged(
    model: &VaeModel,
    rng: &mut RngStream,
    x: ArrayView2<'_, f64>,
    draws: usize,
) -> Result<Vec<ScoredSample>> {
    if draws == 0 {
        return Err(Error::domain("draws must be at least 1"));
    }
    check_width(model, x.ncols())?;
    let enc = model.encode_batch(x)?;
    let kld = kld_terms(model, enc.mu.view(), enc.log_sigma.as_ref().map(|a| a.view()));
    let d_z = model.d_z();
    let mut out = Vec::with_capacity(x.nrows());
    for (i, xr) in x.rows().into_iter().enumerate() {
        let mut z = Array2::from_shape_simple_fn((draws, d_z), || rng.normal());
        if let Some(ls) = &enc.log_sigma {
            let sigma = ls.row(i).mapv(f64::exp);
            z *= &sigma;
        }
        z += &enc.mu.row(i);
        let x_hat = model.decode_batch(z.view())?;
        let target = xr.insert_axis(Axis(0));
        let target = target.broadcast((draws, x.ncols())).expect("broadcast row");
        let recon = recon_l2(&x_hat, target);
        let mean = recon.iter().sum::<f64>() / draws as f64;
        out.push(ScoredSample::new(mean, kld[i]));
    }
    Ok(out)
}

/// Scores a whole dataset, labelling each sample.
pub fn score_dataset(model: &VaeModel, ds: &Dataset, label: Label) -> Result<Vec<ScoredSample>> {
    Ok(score_batch(model, ds.samples().view())?
        .into_iter()
        .map(|s| s.with_label(label))
        .collect())
}

/// `score ≤ threshold` is in-distribution.
pub fn threshold_classify(scores: &[f64], threshold: f64) -> Vec<Label> {
    scores
        .iter()
        .map(|&s| {
            if s <= threshold {
                Label::InDistribution
            } else {
                Label::OutOfDistribution
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    /// Samples scoring strictly above this are flagged.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
    pub n_in: usize,
    pub n_out: usize,
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::domain(format!("{name} scores are empty")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain(format!("{name} scores contain NaN")));
    }
    Ok(())
}

/// ROC curve with a point at every distinct score. The first point uses an
/// infinite threshold (nothing flagged) so the curve starts at (0, 0).
pub fn roc(in_scores: &[f64], out_scores: &[f64]) -> Result<RocCurve> {
    check_scores("in-distribution", in_scores)?;
    check_scores("out-of-distribution", out_scores)?;
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(out_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (n_in, n_out) = (in_scores.len() as f64, out_scores.len() as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut auroc = 0.0;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Lowering the threshold below `t` flags every sample scoring `t`.
        let next_threshold = if i < all.len() { all[i].0 } else { f64::NEG_INFINITY };
        let prev = points[points.len() - 1];
        let p = RocPoint {
            threshold: next_threshold,
            fpr: fp as f64 / n_in,
            tpr: tp as f64 / n_out,
        };
        auroc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve {
        points,
        auroc,
        n_in: in_scores.len(),
        n_out: out_scores.len(),
    })
}

/// `P(out > in) + ½ P(out = in)` by sorting.
pub fn mann_whitney_auroc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    check_scores("in-distribution", in_scores)?;
    check_scores("out-of-distribution", out_scores)?;
    let mut sorted = in_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &o in out_scores {
        let below = sorted.partition_point(|&s| s < o);
        let not_above = sorted.partition_point(|&s| s <= o);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (in_scores.len() as f64 * out_scores.len() as f64))
}

pub fn write_scores_csv<W: Write>(out: W, scores: &[ScoredSample], tag: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_index", "recon_term", "kld_term", "score", "dataset_tag"])?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:e}", s.recon_term),
            format!("{:e}", s.kld_term),
            format!("{:e}", s.score),
            tag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `score` column of a scores CSV.
pub fn read_scores_csv<R: std::io::Read>(input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "score")
        .ok_or_else(|| Error::Config("scores CSV has no `score` column".into()))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("");
        let v = field.parse::<f64>().map_err(|_| {
            Error::Config(format!("row {}: invalid score {field:?}", line + 1))
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_roc_csv<W: Write>(out: W, curve: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &curve.points {
        w.write_record([format!("{:e}", p.threshold), format!("{:e}", p.fpr), format!("{:e}", p.tpr)])?;
    }
    w.flush()?;
    Ok(())
}

/// One-line `{"auroc":…,"n_in":…,"n_out":…}`.
pub fn roc_summary_json(curve: &RocCurve) -> String {
    serde_json::json!({
        "auroc": curve.auroc,
        "n_in": curve.n_in,
        "n_out": curve.n_out,
    })
    .to_string()
}

//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "TVAE" | version u32 | d_x u64 | d_z u64 | prior tag u8
//! tau f64 | gamma f64 | committed_rate f64 | has_z_bar u8 | z_bar f64
//! encoder layer count u32 | decoder layer count u32
//! per layer: inputs u64 | outputs u64 | weight (row-major) | bias
//! ```
//!
//! A TOML manifest with the same header fields is written next to the file.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, Mlp, Prior, VaeModel};
use crate::error::{Error, Result};
use crate::tilted::TiltedPrior;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TVAE";

const TAG_TILTED: u8 = 0;
const TAG_GAUSSIAN: u8 = 1;
const TAG_UNIT_SIGMA: u8 = 2;

/// Key-value summary written alongside each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub prior: String,
    pub d_x: usize,
    pub d_z: usize,
    pub tau: f64,
    pub gamma: f64,
    pub committed_rate: f64,
    pub z_bar: Option<f64>,
    pub parameters: usize,
}

impl CheckpointManifest {
    pub fn of(model: &VaeModel) -> Self {
        let (tau, gamma, committed_rate) = prior_numbers(model.prior());
        CheckpointManifest {
            format_version: CHECKPOINT_VERSION,
            prior: model.prior().name().to_string(),
            d_x: model.d_x(),
            d_z: model.d_z(),
            tau,
            gamma,
            committed_rate,
            z_bar: model.z_bar(),
            parameters: model.parameter_count(),
        }
    }
}

/// Path of the manifest that accompanies `checkpoint`.
pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".toml");
    PathBuf::from(name)
}

fn prior_numbers(prior: &Prior) -> (f64, f64, f64) {
    match prior {
        Prior::Tilted(p) => (p.tau(), p.gamma(), p.committed_rate()),
        _ => (0.0, 0.0, 0.0),
    }
}

pub fn write_checkpoint(model: &VaeModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.d_x() as u64).to_le_bytes());
    out.extend_from_slice(&(model.d_z() as u64).to_le_bytes());
    out.push(match model.prior() {
        Prior::Tilted(_) => TAG_TILTED,
        Prior::Gaussian => TAG_GAUSSIAN,
        Prior::GaussianUnitSigma => TAG_UNIT_SIGMA,
    });
    let (tau, gamma, delta) = prior_numbers(model.prior());
    for v in [tau, gamma, delta] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(model.z_bar().is_some() as u8);
    out.extend_from_slice(&model.z_bar().unwrap_or(0.0).to_le_bytes());
    out.extend_from_slice(&(model.encoder().layers().len() as u32).to_le_bytes());
    out.extend_from_slice(&(model.decoder().layers().len() as u32).to_le_bytes());
    for layer in model.encoder().layers().iter().chain(model.decoder().layers()) {
        out.extend_from_slice(&(layer.inputs() as u64).to_le_bytes());
        out.extend_from_slice(&(layer.outputs() as u64).to_le_bytes());
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                expected: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| parse(at, "size does not fit in memory"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let at = self.pos;
        let len = n.checked_mul(8).ok_or_else(|| parse(at, "tensor size overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn layer(&mut self) -> Result<Dense> {
        let at = self.pos;
        let inputs = self.usize()?;
        let outputs = self.usize()?;
        let n = inputs
            .checked_mul(outputs)
            .ok_or_else(|| parse(at, "layer size overflows"))?;
        let weight = Array2::from_shape_vec((inputs, outputs), self.f64s(n)?).expect("shape checked");
        let bias = Array1::from(self.f64s(outputs)?);
        Ok(Dense { weight, bias })
    }
}

fn parse(offset: usize, message: &str) -> Error {
    Error::Parse {
        offset,
        message: message.to_string(),
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<VaeModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(parse(0, "not a model checkpoint"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(parse(4, &format!("unsupported checkpoint version {version}")));
    }
    let d_x = r.usize()?;
    let d_z = r.usize()?;
    let tag_at = r.pos;
    let tag = r.u8()?;
    let tau = r.f64()?;
    let gamma = r.f64()?;
    let delta = r.f64()?;
    let has_z_bar = r.u8()?;
    let z_bar = r.f64()?;
    let prior = match tag {
        TAG_TILTED => Prior::Tilted(TiltedPrior::from_parts(tau, d_z, gamma, delta)?),
        TAG_GAUSSIAN => Prior::Gaussian,
        TAG_UNIT_SIGMA => Prior::GaussianUnitSigma,
        other => return Err(parse(tag_at, &format!("unknown prior tag {other}"))),
    };
    let n_enc = r.u32()? as usize;
    let n_dec = r.u32()? as usize;
    let enc = (0..n_enc).map(|_| r.layer()).collect::<Result<Vec<_>>>()?;
    let dec = (0..n_dec).map(|_| r.layer()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(parse(r.pos, "trailing bytes after checkpoint"));
    }
    let model = VaeModel::from_parts(
        Mlp::from_layers(enc)?,
        Mlp::from_layers(dec)?,
        prior,
        (has_z_bar != 0).then_some(z_bar),
    )?;
    if model.d_x() != d_x || model.d_z() != d_z {
        return Err(parse(8, "header dimensions disagree with the layers"));
    }
    Ok(model)
}

/// Writes the checkpoint and its `.toml` manifest; returns the manifest path.
pub fn save_checkpoint(model: &VaeModel, path: &Path) -> Result<PathBuf> {
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::file(path, e))?;
    let manifest = toml::to_string(&CheckpointManifest::of(model))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(|e| Error::file(&mpath, e))?;
    Ok(mpath)
}

pub fn load_checkpoint(path: &Path) -> Result<VaeModel> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    read_checkpoint(&bytes)
}

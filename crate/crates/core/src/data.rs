//! Datasets: IDX (MNIST-family) files, synthetic Noise/Constant/blob images,
//! and channel conversions.
//!
//! Pixels are always stored as `f64` in `[0, 1]`, one image per row, laid out
//! height-major then width then channel.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::RngStream;

pub const IDX_UBYTE_LABELS: u32 = 0x0000_0801;
pub const IDX_UBYTE_IMAGES: u32 = 0x0000_0803;
pub const IDX_UBYTE_IMAGES_RGB: u32 = 0x0000_0804;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
    height: usize,
    width: usize,
    channels: usize,
    tag: String,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        samples: Array2<f64>,
        height: usize,
        width: usize,
        channels: usize,
        tag: impl Into<String>,
    ) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::domain("dataset must contain at least one sample"));
        }
        if height * width * channels != samples.ncols() {
            return Err(Error::domain(format!(
                "shape {height}x{width}x{channels} does not match d_x = {}",
                samples.ncols()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Dataset {
            samples,
            height,
            width,
            channels,
            tag: tag.into(),
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn d_x(&self) -> usize {
        self.samples.ncols()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select(Axis(0), indices),
            height: self.height,
            width: self.width,
            channels: self.channels,
            tag: self.tag.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Seeded uniform subsample without replacement, keeping the original order.
    pub fn subsample(&self, max_samples: usize, rng: &mut RngStream) -> Dataset {
        if self.len() <= max_samples {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut idx);
        idx.truncate(max_samples);
        idx.sort_unstable();
        self.select(&idx)
    }

    /// CSV with one image per row, columns `p0..p{d_x-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.d_x()).map(|i| format!("p{i}")).collect();
        wtr.write_record(&header)?;
        for row in self.samples.rows() {
            wtr.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let slice = self.bytes.get(self.pos..end).ok_or(Error::Parse {
            offset: self.pos,
            message: "unexpected end of header".into(),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
    }
}

/// Parsed IDX header plus payload.
struct Idx<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse_idx<'a>(bytes: &'a [u8], allowed: &[u32]) -> Result<Idx<'a>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.u32_be()?;
    if !allowed.contains(&magic) {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic 0x{magic:08x}"),
        });
    }
    let ndim = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let at = r.pos;
        let d = r.u32_be()? as usize;
        if d == 0 {
            return Err(Error::Parse {
                offset: at,
                message: "zero dimension".into(),
            });
        }
        dims.push(d);
    }
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::Parse {
            offset: 4,
            message: "dimension product overflows".into(),
        })?;
    let available = bytes.len() - r.pos;
    if available < expected {
        return Err(Error::Truncated {
            expected,
            available,
        });
    }
    if available > expected {
        return Err(Error::Parse {
            offset: r.pos + expected,
            message: format!("{} trailing bytes after payload", available - expected),
        });
    }
    Ok(Idx {
        dims,
        payload: &bytes[r.pos..],
    })
}

/// Parses an IDX image container (`0x0803` grayscale or `0x0804` with a
/// trailing channel axis). Pixels are scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Dataset> {
    let idx = parse_idx(bytes, &[IDX_UBYTE_IMAGES, IDX_UBYTE_IMAGES_RGB])?;
    let (n, h, w, c) = match idx.dims[..] {
        [n, h, w] => (n, h, w, 1),
        [n, h, w, c] => (n, h, w, c),
        _ => unreachable!("magic fixes the rank"),
    };
    let samples = Array2::from_shape_fn((n, h * w * c), |(i, j)| {
        idx.payload[i * h * w * c + j] as f64 / 255.0
    });
    Dataset::new(samples, h, w, c, "idx")
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let idx = parse_idx(bytes, &[IDX_UBYTE_LABELS])?;
    Ok(idx.payload.to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let bytes = std::fs::read(images_path).map_err(|e| Error::file(images_path, e))?;
    let mut ds = parse_idx_images(&bytes)?.with_tag(format!("idx:{}", images_path.display()));
    if let Some(lp) = labels_path {
        let lb = std::fs::read(lp).map_err(|e| Error::file(lp, e))?;
        let labels = parse_idx_labels(&lb)?;
        if labels.len() != ds.len() {
            return Err(Error::domain(format!(
                "{} labels for {} images",
                labels.len(),
                ds.len()
            )));
        }
        ds.labels = Some(labels);
    }
    Ok(ds)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// IDX bytes for a dataset, quantized to 8 bits.
pub fn idx_image_bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + ds.len() * ds.d_x());
    if ds.channels == 1 {
        out.extend_from_slice(&IDX_UBYTE_IMAGES.to_be_bytes());
    } else {
        out.extend_from_slice(&IDX_UBYTE_IMAGES_RGB.to_be_bytes());
    }
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&(ds.height as u32).to_be_bytes());
    out.extend_from_slice(&(ds.width as u32).to_be_bytes());
    if ds.channels != 1 {
        out.extend_from_slice(&(ds.channels as u32).to_be_bytes());
    }
    out.extend(ds.samples.iter().map(|&v| quantize(v)));
    out
}

pub fn idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_UBYTE_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Nearest-neighbour resize to `height × width`.
pub fn resize_nearest(ds: &Dataset, height: usize, width: usize) -> Result<Dataset> {
    if height == 0 || width == 0 {
        return Err(Error::domain("resize target must be non-empty"));
    }
    let (h0, w0, c) = (ds.height, ds.width, ds.channels);
    let src_index: Vec<usize> = (0..height * width * c)
        .map(|j| {
            let (y, rest) = (j / (width * c), j % (width * c));
            let (x, ch) = (rest / c, rest % c);
            let sy = y * h0 / height;
            let sx = x * w0 / width;
            (sy * w0 + sx) * c + ch
        })
        .collect();
    let samples = Array2::from_shape_fn((ds.len(), height * width * c), |(i, j)| {
        ds.samples[[i, src_index[j]]]
    });
    let mut out = Dataset::new(samples, height, width, c, ds.tag.clone())?;
    out.labels = ds.labels.clone();
    Ok(out)
}

/// Uniform pixels on the 256 levels `{0, …, 255} / 255`.
pub fn gen_noise(rng: &mut RngStream, n: usize, h: usize, w: usize, c: usize) -> Result<Dataset> {
    check_shape(n, h, w, c)?;
    let samples = Array2::from_shape_simple_fn((n, h * w * c), || rng.below(256) as f64 / 255.0);
    Dataset::new(samples, h, w, c, "noise")
}

/// Each image is a single uniform level repeated over every pixel.
pub fn gen_constant(rng: &mut RngStream, n: usize, h: usize, w: usize, c: usize) -> Result<Dataset> {
    check_shape(n, h, w, c)?;
    let d = h * w * c;
    let mut samples = Array2::zeros((n, d));
    for mut row in samples.rows_mut() {
        row.fill(rng.below(256) as f64 / 255.0);
    }
    Dataset::new(samples, h, w, c, "constant")
}

fn check_shape(n: usize, h: usize, w: usize, c: usize) -> Result<()> {
    if n == 0 || h == 0 || w == 0 || c == 0 {
        return Err(Error::domain("dataset dimensions must be positive"));
    }
    Ok(())
}

/// One component of a blob dataset: a soft disc at `center` (row, column in
/// pixels) whose intensity falls off as `exp(−½(dist/radius)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobMode {
    pub center: (f64, f64),
    pub radius: f64,
    pub intensity: f64,
}

impl fmt::Display for BlobMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{};r={};i={})",
            self.center.0, self.center.1, self.radius, self.intensity
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRecipe {
    pub modes: Vec<BlobMode>,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    /// Per-image standard deviation of the center position, in pixels.
    pub jitter: f64,
}

impl BlobRecipe {
    /// Two separated discs on a 16×16 canvas, the default in-distribution set.
    pub fn two_modes() -> Self {
        BlobRecipe {
            modes: vec![
                BlobMode {
                    center: (4.5, 4.5),
                    radius: 2.0,
                    intensity: 0.9,
                },
                BlobMode {
                    center: (11.0, 11.0),
                    radius: 2.5,
                    intensity: 0.7,
                },
            ],
            noise: 0.02,
            jitter: 0.5,
        }
    }

    /// The two-mode recipe with both discs moved to the other diagonal.
    pub fn shifted() -> Self {
        let mut r = Self::two_modes();
        r.modes[0].center = (4.5, 11.0);
        r.modes[1].center = (11.0, 4.5);
        r
    }

    fn tag(&self) -> String {
        let modes: Vec<String> = self.modes.iter().map(|m| m.to_string()).collect();
        format!(
            "blobs[{}|noise={}|jitter={}]",
            modes.join(","),
            self.noise,
            self.jitter
        )
    }
}

fn render_blob(out: &mut [f64], h: usize, w: usize, center: (f64, f64), mode: &BlobMode) {
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - center.0;
            let dx = x as f64 - center.1;
            let d2 = dy * dy + dx * dx;
            let v = if mode.radius > 0.0 {
                mode.intensity * (-0.5 * d2 / (mode.radius * mode.radius)).exp()
            } else if d2 == 0.0 {
                mode.intensity
            } else {
                0.0
            };
            out[y * w + x] += v;
        }
    }
}

/// Grayscale images, each rendering one randomly chosen mode plus pixel noise.
pub fn gen_blobs(
    rng: &mut RngStream,
    n: usize,
    h: usize,
    w: usize,
    recipe: &BlobRecipe,
) -> Result<Dataset> {
    check_shape(n, h, w, 1)?;
    if recipe.modes.is_empty() {
        return Err(Error::domain("blob recipe needs at least one mode"));
    }
    let d = h * w;
    let mut samples = Array2::zeros((n, d));
    let mut buf = vec![0.0; d];
    for mut row in samples.rows_mut() {
        let mode = &recipe.modes[rng.below(recipe.modes.len())];
        let center = if recipe.jitter > 0.0 {
            (
                mode.center.0 + recipe.jitter * rng.normal(),
                mode.center.1 + recipe.jitter * rng.normal(),
            )
        } else {
            mode.center
        };
        buf.fill(0.0);
        render_blob(&mut buf, h, w, center, mode);
        for (dst, &v) in row.iter_mut().zip(&buf) {
            let noisy = if recipe.noise > 0.0 {
                v + recipe.noise * rng.normal()
            } else {
                v
            };
            *dst = noisy.clamp(0.0, 1.0);
        }
    }
    Dataset::new(samples, h, w, 1, recipe.tag())
}

/// Keeps the first of three channels.
pub fn to_grayscale(ds: &Dataset) -> Result<Dataset> {
    if ds.channels != 3 {
        return Err(Error::domain(format!(
            "to_grayscale needs 3 channels, got {}",
            ds.channels
        )));
    }
    let cols: Vec<usize> = (0..ds.height * ds.width).map(|p| p * 3).collect();
    let mut out = Dataset::new(
        ds.samples.select(Axis(1), &cols),
        ds.height,
        ds.width,
        1,
        ds.tag.clone(),
    )?;
    out.labels = ds.labels.clone();
    Ok(out)
}

/// Repeats the single channel three times.
pub fn to_rgb(ds: &Dataset) -> Result<Dataset> {
    if ds.channels != 1 {
        return Err(Error::domain(format!(
            "to_rgb needs 1 channel, got {}",
            ds.channels
        )));
    }
    let cols: Vec<usize> = (0..ds.d_x() * 3).map(|j| j / 3).collect();
    let mut out = Dataset::new(
        ds.samples.select(Axis(1), &cols),
        ds.height,
        ds.width,
        3,
        ds.tag.clone(),
    )?;
    out.labels = ds.labels.clone();
    Ok(out)
}

/// A textual dataset description such as `noise:n=500,h=16,w=16,seed=3`.
///
/// Kinds: `noise`, `constant`, `blobs` (with `preset=two|shifted`), and
/// `idx` (with `images=PATH[,labels=PATH][,resize=N][,max=N]`). Every kind
/// accepts `channels=1|3` to convert after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub kind: String,
    pub params: Vec<(String, String)>,
}

impl FromStr for DataSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = kind.trim().to_string();
        if kind.is_empty() {
            return Err(Error::Config("empty data spec".into()));
        }
        let mut params = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("data spec parameter `{part}` is not key=value")))?;
            params.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(DataSpec { kind, params })
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.kind)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            f.write_str(if i == 0 { ":" } else { "," })?;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl DataSpec {
    fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("data spec `{key}={v}` is not valid"))),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.params {
            if !allowed.contains(&k.as_str()) && k != "channels" {
                return Err(Error::Config(format!(
                    "unknown key `{k}` for data kind `{}`",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Dataset> {
        let shape = ["n", "h", "w", "c", "seed", "stream"];
        let ds = match self.kind.as_str() {
            "noise" | "constant" => {
                self.check_keys(&shape)?;
                let mut rng = RngStream::substream(self.parse("seed", 0)?, self.parse("stream", 0)?);
                let (n, h, w, c) = (
                    self.parse("n", 1000)?,
                    self.parse("h", 16)?,
                    self.parse("w", 16)?,
                    self.parse("c", 1)?,
                );
                if self.kind == "noise" {
                    gen_noise(&mut rng, n, h, w, c)?
                } else {
                    gen_constant(&mut rng, n, h, w, c)?
                }
            }
            "blobs" => {
                self.check_keys(&["n", "h", "w", "seed", "stream", "preset", "noise", "jitter"])?;
                let mut rng = RngStream::substream(self.parse("seed", 0)?, self.parse("stream", 0)?);
                let mut recipe = match self.get("preset").unwrap_or("two") {
                    "two" => BlobRecipe::two_modes(),
                    "shifted" => BlobRecipe::shifted(),
                    other => return Err(Error::Config(format!("unknown blob preset `{other}`"))),
                };
                recipe.noise = self.parse("noise", recipe.noise)?;
                recipe.jitter = self.parse("jitter", recipe.jitter)?;
                gen_blobs(
                    &mut rng,
                    self.parse("n", 2000)?,
                    self.parse("h", 16)?,
                    self.parse("w", 16)?,
                    &recipe,
                )?
            }
            "idx" => {
                self.check_keys(&["images", "labels", "resize", "max", "seed"])?;
                let images = self
                    .get("images")
                    .ok_or_else(|| Error::Config("idx data spec needs `images=PATH`".into()))?;
                let mut ds = load_idx(Path::new(images), self.get("labels").map(Path::new))?;
                if let Some(side) = self.get("resize") {
                    let side: usize = side
                        .parse()
                        .map_err(|_| Error::Config(format!("resize `{side}` is not an integer")))?;
                    ds = resize_nearest(&ds, side, side)?;
                }
                if let Some(max) = self.get("max") {
                    let max: usize = max
                        .parse()
                        .map_err(|_| Error::Config(format!("max `{max}` is not an integer")))?;
                    ds = ds.subsample(max, &mut RngStream::new(self.parse("seed", 0)?));
                }
                ds
            }
            other => return Err(Error::Config(format!("unknown data kind `{other}`"))),
        };
        let ds = match self.get("channels") {
            None => ds,
            Some("1") if ds.channels() == 3 => to_grayscale(&ds)?,
            Some("3") if ds.channels() == 1 => to_rgb(&ds)?,
            Some(c) if c.parse::<usize>().ok() == Some(ds.channels()) => ds,
            Some(c) => return Err(Error::Config(format!("unsupported channels={c}"))),
        };
        Ok(ds.with_tag(self.kind.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_images() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        for d in [2u32, 28, 28] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend((0..1568u32).map(|i| (i % 256) as u8));
        bytes
    }

    #[test]
    fn parses_image_fixture() {
        let ds = parse_idx_images(&fixture_images()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.d_x(), 784);
        assert_eq!((ds.height(), ds.width(), ds.channels()), (28, 28, 1));
        assert_eq!(ds.row(0)[255], 1.0);
        assert_eq!(ds.row(1)[0], (784 % 256) as f64 / 255.0);
    }

    #[test]
    fn parses_label_fixture() {
        let mut bytes = 0x0000_0801u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[7, 3]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7, 3]);
    }

    #[test]
    fn reports_truncation_and_bad_magic() {
        let mut bytes = fixture_images();
        bytes.truncate(16 + 1000);
        match parse_idx_images(&bytes) {
            Err(Error::Truncated {
                expected,
                available,
            }) => assert_eq!((expected, available), (1568, 1000)),
            other => panic!("{other:?}"),
        }
        let mut bytes = fixture_images();
        bytes[3] = 0x02;
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_idx_images(&[0, 0, 8]),
            Err(Error::Parse { offset: 0, .. })
        ));
        let mut bytes = fixture_images();
        bytes.push(0);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Parse { offset: 1584, .. })
        ));
    }

    #[test]
    fn noise_statistics() {
        let mut rng = RngStream::new(1);
        let ds = gen_noise(&mut rng, 10_000, 8, 8, 1).unwrap();
        let mean = ds.samples().mean().unwrap();
        assert!((mean - 0.5).abs() < 0.01);
        let again = gen_noise(&mut RngStream::new(1), 10_000, 8, 8, 1).unwrap();
        assert_eq!(ds, again);
        let one = gen_noise(&mut rng, 1, 4, 4, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(ds.tag(), "noise");
    }

    #[test]
    fn constant_images_are_flat_and_uniform() {
        let mut rng = RngStream::new(2);
        let ds = gen_constant(&mut rng, 10_000, 4, 4, 1).unwrap();
        let mut counts = [0usize; 256];
        for row in ds.samples().rows() {
            let (lo, hi) = row
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            assert_eq!(hi - lo, 0.0);
            counts[(row[0] * 255.0).round() as usize] += 1;
        }
        let expected = 10_000.0 / 256.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 255 degrees of freedom: p = 0.001 at chi² ≈ 330.5.
        assert!(chi2 < 330.5, "{chi2}");
        assert_eq!(ds, gen_constant(&mut RngStream::new(2), 10_000, 4, 4, 1).unwrap());
    }

    #[test]
    fn degenerate_blob_is_a_single_pixel() {
        let recipe = BlobRecipe {
            modes: vec![BlobMode {
                center: (3.0, 5.0),
                radius: 0.0,
                intensity: 0.8,
            }],
            noise: 0.0,
            jitter: 0.0,
        };
        let ds = gen_blobs(&mut RngStream::new(0), 3, 8, 8, &recipe).unwrap();
        for row in ds.samples().rows() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if j == 3 * 8 + 5 { 0.8 } else { 0.0 });
            }
        }
    }

    #[test]
    fn blobs_are_deterministic_and_in_range() {
        let r = BlobRecipe::two_modes();
        let a = gen_blobs(&mut RngStream::new(9), 200, 16, 16, &r).unwrap();
        let b = gen_blobs(&mut RngStream::new(9), 200, 16, 16, &r).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(gen_blobs(
            &mut RngStream::new(0),
            1,
            4,
            4,
            &BlobRecipe {
                modes: vec![],
                noise: 0.0,
                jitter: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn channel_rules() {
        let mut rng = RngStream::new(3);
        let gray = gen_noise(&mut rng, 5, 4, 4, 1).unwrap();
        let rgb = to_rgb(&gray).unwrap();
        assert_eq!(rgb.channels(), 3);
        for p in 0..16 {
            let g = gray.row(2)[p];
            assert_eq!(
                [rgb.row(2)[3 * p], rgb.row(2)[3 * p + 1], rgb.row(2)[3 * p + 2]],
                [g, g, g]
            );
        }
        assert_eq!(to_grayscale(&rgb).unwrap(), gray);

        let color = gen_noise(&mut rng, 2, 2, 2, 3).unwrap();
        let g = to_grayscale(&color).unwrap();
        for p in 0..4 {
            assert_eq!(g.row(1)[p], color.row(1)[3 * p]);
        }
        assert!(to_grayscale(&gray).is_err());
        assert!(to_rgb(&color).is_err());
    }

    #[test]
    fn nearest_resize() {
        let samples = Array2::from_shape_fn((1, 4), |(_, j)| j as f64 / 3.0);
        let ds = Dataset::new(samples, 2, 2, 1, "t").unwrap();
        let up = resize_nearest(&ds, 4, 4).unwrap();
        assert_eq!(up.row(0)[0], ds.row(0)[0]);
        assert_eq!(up.row(0)[1], ds.row(0)[0]);
        assert_eq!(up.row(0)[2], ds.row(0)[1]);
        assert_eq!(up.row(0)[15], ds.row(0)[3]);
    }

    #[test]
    fn data_spec_round_trip_and_errors() {
        let spec: DataSpec = "noise:n=10,h=4,w=4,seed=5".parse().unwrap();
        assert_eq!(spec.to_string(), "noise:n=10,h=4,w=4,seed=5");
        let ds = spec.load().unwrap();
        assert_eq!((ds.len(), ds.d_x()), (10, 16));
        assert!("noise:n".parse::<DataSpec>().is_err());
        assert!("bogus:n=1".parse::<DataSpec>().unwrap().load().is_err());
        assert!("noise:q=1".parse::<DataSpec>().unwrap().load().is_err());
        let rgb = "blobs:n=5,channels=3".parse::<DataSpec>().unwrap().load().unwrap();
        assert_eq!(rgb.channels(), 3);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let samples = Array2::from_elem((1, 4), 1.5);
        assert!(Dataset::new(samples, 2, 2, 1, "bad").is_err());
    }
}

//! Dataset ingestion, preprocessing, splitting and synthetic fixtures.
//!
//! # Formats
//!
//! * IDX: big-endian `u32` magic (`0x00000803` images, `0x00000801`
//!   labels), then one big-endian `u32` per dimension, then `u8` payload.
//! * Delimited text: one sample per line, `label` followed by the feature
//!   values, separated by commas and/or whitespace. Blank lines and lines
//!   starting with `#` are skipped.
//!
//! # Synthetic generators
//!
//! All generators draw from a `ChaCha8Rng` seeded with the given seed and
//! append the bias component 1.
//!
//! * `Gaussians`: class `k` has center `μ_k ~ N(0, separation² I_d)`;
//!   members are `μ_k + noise · N(0, I_d)`. Sample `i` belongs to class
//!   `i mod c + 1`.
//! * `Circles`: two classes at radii `r_1 < r_2`; angle `θ ~ U[0, 2π)`,
//!   point `(r_k + noise · N(0,1)) (cos θ, sin θ)`. Classes alternate.
//! * `Xor`: `(a, b) ~ U[-1, 1]²`, class 1 when `a · b > 0`, else class 2,
//!   followed by `dim − 2` distractor features `~ U[-1, 1]`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Preprocessing};
use crate::error::{HopeError, Result};
use crate::matrix::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelKind {
    /// 0..=255 integers.
    Byte,
    Real,
}

/// Features and labels as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub pixels: Matrix,
    pub labels: Vec<i64>,
    pub kind: PixelKind,
    pub source: String,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            let idx: Vec<usize> = (0..n).collect();
            self.pixels = self.pixels.select_rows(&idx);
            self.labels.truncate(n);
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HopeError::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| HopeError::Truncated {
            path: path.to_path_buf(),
            needed: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(HopeError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes
        .get(header..header + len)
        .ok_or_else(|| HopeError::Truncated {
            path: path.to_path_buf(),
            needed: header + len,
            found: bytes.len(),
        })
}

/// Reads an IDX image file into an `n × (rows·cols)` matrix of byte values.
pub fn read_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_IMAGES_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let d = rows * cols;
    let data = payload(&bytes, 16, n * d, path)?;
    Matrix::from_vec(n, d, data.iter().map(|&b| f64::from(b)).collect())
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<i64>> {
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_LABELS_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, n, path)?
        .iter()
        .map(|&b| i64::from(b))
        .collect())
}

/// Loads a paired IDX image/label file set.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<RawDataset> {
    let pixels = read_idx_images(image_path)?;
    let labels = read_idx_labels(label_path)?;
    if pixels.rows() != labels.len() {
        return Err(HopeError::CountMismatch {
            images: pixels.rows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(HopeError::InvalidDataset(format!(
            "{} holds no samples",
            image_path.display()
        )));
    }
    Ok(RawDataset {
        pixels,
        labels,
        kind: PixelKind::Byte,
        source: format!("idx:{}+{}", image_path.display(), label_path.display()),
    })
}

/// Loads delimited text: `label, v_1, ..., v_d` per line.
pub fn load_delimited(path: &Path) -> Result<RawDataset> {
    let text = fs::read_to_string(path).map_err(|e| HopeError::io(path, e))?;
    let parse_err = |line: usize, reason: String| HopeError::Parse {
        path: PathBuf::from(path),
        line,
        reason,
    };
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty());
        let label_str = fields.next().expect("non-empty line");
        let label = label_str
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0)
            .ok_or_else(|| parse_err(ln + 1, format!("label `{label_str}` is not an integer")))?;
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(ln + 1, format!("bad value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    ln + 1,
                    format!("{} values, expected {w}", values.len()),
                ))
            }
            _ => {}
        }
        labels.push(label as i64);
        data.extend(values);
    }
    let d = width.ok_or_else(|| HopeError::InvalidDataset(format!("{} is empty", path.display())))?;
    let n = labels.len();
    let kind = if data.iter().all(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v)) {
        PixelKind::Byte
    } else {
        PixelKind::Real
    };
    Ok(RawDataset {
        pixels: Matrix::from_vec(n, d, data)?,
        labels,
        kind,
        source: format!("text:{}", path.display()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Byte sources are divided by 255; real sources pass through.
    Scale01,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Scale01 => "scale_0_1",
        }
    }
}

/// Scales features, appends the bias component and maps labels to `1..=c`.
///
/// With `label_map` (as stored in a model document) labels are looked up in
/// it; otherwise the sorted distinct labels of `raw` define the mapping.
pub fn preprocess(raw: &RawDataset, scheme: Scheme, label_map: Option<&[i64]>) -> Result<LabeledDataset> {
    let map: Vec<i64> = match label_map {
        Some(m) => m.to_vec(),
        None => {
            let mut v = raw.labels.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    let labels = raw
        .labels
        .iter()
        .map(|l| {
            map.iter()
                .position(|m| m == l)
                .map(|p| p as u32 + 1)
                .ok_or(HopeError::UnknownLabel(*l))
        })
        .collect::<Result<Vec<u32>>>()?;
    let scale = match (scheme, raw.kind) {
        (Scheme::Scale01, PixelKind::Byte) => 255.0,
        (Scheme::Scale01, PixelKind::Real) => 1.0,
    };
    let (n, d) = (raw.pixels.rows(), raw.pixels.cols());
    let mut x = Matrix::zeros(n, d + 1);
    for i in 0..n {
        let row = x.row_mut(i);
        for (o, &v) in row.iter_mut().zip(raw.pixels.row(i)) {
            *o = v / scale;
        }
        row[d] = 1.0;
    }
    let pre = Preprocessing {
        scheme: scheme.name().to_string(),
        input_scale: scale,
        label_map: map.clone(),
    };
    if label_map.is_some() {
        // evaluation sets may legitimately miss classes
        return LabeledDataset::with_partial_classes(x, labels, map.len(), pre);
    }
    LabeledDataset::with_preprocessing(x, labels, map.len(), pre)
}

/// Applies a stored preprocessing descriptor (from a model document) to new
/// raw data, so test rows get the same scale and label mapping as training.
pub fn preprocess_like(raw: &RawDataset, pre: &Preprocessing) -> Result<LabeledDataset> {
    let labels = raw
        .labels
        .iter()
        .map(|l| {
            pre.label_map
                .iter()
                .position(|m| m == l)
                .map(|p| p as u32 + 1)
                .ok_or(HopeError::UnknownLabel(*l))
        })
        .collect::<Result<Vec<u32>>>()?;
    let (n, d) = (raw.pixels.rows(), raw.pixels.cols());
    let mut x = Matrix::zeros(n, d + 1);
    for i in 0..n {
        let row = x.row_mut(i);
        for (o, &v) in row.iter_mut().zip(raw.pixels.row(i)) {
            *o = v / pre.input_scale;
        }
        row[d] = 1.0;
    }
    LabeledDataset::with_partial_classes(x, labels, pre.label_map.len(), pre.clone())
}

/// Stratified, seeded split. Each class sends `round(fraction · n_k)`
/// members to validation while keeping at least one in training; classes
/// with fewer than two members stay entirely in training.
pub fn split(
    data: &LabeledDataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, val) = split_indices(data, validation_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&val)))
}

pub fn split_indices(
    data: &LabeledDataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(HopeError::Config(format!(
            "validation fraction {validation_fraction} not in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (k, mut idx) in data.class_indices().into_iter().enumerate() {
        let n = idx.len();
        let take = ((validation_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        if n < 2 {
            log::warn!("class {} is too small to split; kept in training", k + 1);
        }
        idx.shuffle(&mut rng);
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Gaussians,
    Circles,
    Xor,
}

impl std::str::FromStr for SyntheticKind {
    type Err = HopeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussians" => Ok(SyntheticKind::Gaussians),
            "circles" => Ok(SyntheticKind::Circles),
            "xor" => Ok(SyntheticKind::Xor),
            other => Err(HopeError::Config(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

/// Parameters for [`make_synthetic`]. Unused fields are ignored per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    /// Gaussians only.
    pub classes: usize,
    /// Feature dimension before the bias (Gaussians, Xor).
    pub dim: usize,
    pub noise: f64,
    /// Gaussians: spread of the class centers.
    pub separation: f64,
    /// Circles: inner and outer radius.
    pub radii: (f64, f64),
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n: 300,
            classes: 3,
            dim: 2,
            noise: 0.1,
            separation: 3.0,
            radii: (1.0, 3.0),
        }
    }
}

pub fn make_synthetic(kind: SyntheticKind, params: &SyntheticParams, seed: u64) -> Result<LabeledDataset> {
    let p = params;
    let invalid = |m: &str| Err(HopeError::Config(format!("synthetic {kind:?}: {m}")));
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return invalid("noise must be finite and nonnegative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let (rows, labels, c): (Vec<Vec<f64>>, Vec<u32>, usize) = match kind {
        SyntheticKind::Gaussians => {
            if p.classes == 0 || p.dim == 0 || p.n < p.classes {
                return invalid("need classes >= 1, dim >= 1, n >= classes");
            }
            let centers: Vec<Vec<f64>> = (0..p.classes)
                .map(|_| (0..p.dim).map(|_| p.separation * normal(&mut rng)).collect())
                .collect();
            let mut rows = Vec::with_capacity(p.n);
            let mut labels = Vec::with_capacity(p.n);
            for i in 0..p.n {
                let k = i % p.classes;
                let mut r: Vec<f64> = centers[k]
                    .iter()
                    .map(|&m| m + p.noise * normal(&mut rng))
                    .collect();
                r.push(1.0);
                rows.push(r);
                labels.push(k as u32 + 1);
            }
            (rows, labels, p.classes)
        }
        SyntheticKind::Circles => {
            let (r1, r2) = p.radii;
            if p.n < 2 || !(0.0 <= r1 && r1 < r2) {
                return invalid("need n >= 2 and 0 <= r1 < r2");
            }
            let mut rows = Vec::with_capacity(p.n);
            let mut labels = Vec::with_capacity(p.n);
            for i in 0..p.n {
                let k = i % 2;
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = [r1, r2][k] + p.noise * normal(&mut rng);
                rows.push(vec![r * theta.cos(), r * theta.sin(), 1.0]);
                labels.push(k as u32 + 1);
            }
            (rows, labels, 2)
        }
        SyntheticKind::Xor => {
            if p.dim < 2 || p.n < 2 {
                return invalid("need dim >= 2 and n >= 2");
            }
            let mut rows = Vec::with_capacity(p.n);
            let mut labels = Vec::with_capacity(p.n);
            for _ in 0..p.n {
                let mut r: Vec<f64> = (0..p.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                labels.push(if r[0] * r[1] > 0.0 { 1 } else { 2 });
                r.push(1.0);
                rows.push(r);
            }
            (rows, labels, 2)
        }
    };
    LabeledDataset::new(Matrix::from_rows(&rows)?, labels, c)
}

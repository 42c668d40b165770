//! Self-describing JSON documents for models and exemplar sets.
//!
//! Float arrays are stored row-major as base64 of little-endian `f64` bytes,
//! so a round trip reproduces every bit.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "kind": "model",
//!   "variant": "hope" | "shope",
//!   "O": 3, "H": 785, "h": 2, "F": 300, "m": 0,
//!   "parameters": {
//!     "C": { "rows": F, "cols": H, "data": "<base64>" },
//!     "P": { ... }, "w": { ... }, "b": { ... }
//!   },
//!   "preprocessing": { "scheme": "scale_0_1", "input_scale": 255.0, "label_map": [0, 1, ...] }
//! }
//! ```
//!
//! Exemplar documents use `"kind": "exemplars"` with `z`, `H`, `s`,
//! `labels` and an `E` array of the same encoding.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::dataset::Preprocessing;
use crate::error::{HopeError, Result};
use crate::exemplar::ExemplarSet;
use crate::matrix::Matrix;
use crate::model::{HighOrderModel, Shape, Variant};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedArray {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl EncodedArray {
    pub fn encode(rows: usize, cols: usize, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        EncodedArray {
            rows,
            cols,
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| HopeError::Document(format!("base64: {e}")))?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(HopeError::Document(format!(
                "array declares {}x{} but holds {} bytes",
                self.rows,
                self.cols,
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    #[serde(rename = "C")]
    pub c: EncodedArray,
    #[serde(rename = "P")]
    pub p: EncodedArray,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w: Option<EncodedArray>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<EncodedArray>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: String,
    pub variant: Variant,
    #[serde(rename = "O")]
    pub order: u32,
    #[serde(rename = "H")]
    pub input_dim: usize,
    #[serde(rename = "h")]
    pub embed_dim: usize,
    #[serde(rename = "F")]
    pub num_factors: usize,
    #[serde(rename = "m")]
    pub num_units: usize,
    pub parameters: ModelParameters,
    pub preprocessing: Preprocessing,
}

impl ModelDocument {
    pub fn from_model(model: &HighOrderModel, preprocessing: &Preprocessing) -> Self {
        let s = model.shape();
        let (p_rows, p_cols) = match s.variant {
            Variant::Hope => (s.num_factors, s.embed_dim),
            Variant::Shope => (s.embed_dim, s.num_units),
        };
        let shope = s.variant == Variant::Shope;
        ModelDocument {
            format_version: FORMAT_VERSION,
            kind: "model".into(),
            variant: s.variant,
            order: s.order,
            input_dim: s.input_dim,
            embed_dim: s.embed_dim,
            num_factors: s.num_factors,
            num_units: s.num_units,
            parameters: ModelParameters {
                c: EncodedArray::encode(s.num_factors, s.input_dim, model.c()),
                p: EncodedArray::encode(p_rows, p_cols, model.p()),
                w: shope.then(|| EncodedArray::encode(s.num_factors, s.num_units, model.w())),
                b: shope.then(|| EncodedArray::encode(1, s.num_units, model.b())),
            },
            preprocessing: preprocessing.clone(),
        }
    }

    pub fn to_model(&self) -> Result<(HighOrderModel, Preprocessing)> {
        if self.format_version != FORMAT_VERSION || self.kind != "model" {
            return Err(HopeError::Document(format!(
                "expected model document version {FORMAT_VERSION}, got kind `{}` version {}",
                self.kind, self.format_version
            )));
        }
        let shape = match self.variant {
            Variant::Hope => Shape::hope(self.order, self.input_dim, self.embed_dim, self.num_factors),
            Variant::Shope => Shape::shope(
                self.order,
                self.input_dim,
                self.embed_dim,
                self.num_factors,
                self.num_units,
            ),
        };
        let mut params = self.parameters.c.decode()?;
        params.extend(self.parameters.p.decode()?);
        if self.variant == Variant::Shope {
            let missing = || HopeError::Document("S-HOPE document lacks `w` or `b`".into());
            params.extend(self.parameters.w.as_ref().ok_or_else(missing)?.decode()?);
            params.extend(self.parameters.b.as_ref().ok_or_else(missing)?.decode()?);
        }
        let model = HighOrderModel::from_params(shape, params)?;
        Ok((model, self.preprocessing.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExemplarDocument {
    pub format_version: u32,
    pub kind: String,
    pub z: usize,
    #[serde(rename = "H")]
    pub input_dim: usize,
    #[serde(rename = "s")]
    pub per_class: usize,
    pub labels: Vec<u32>,
    #[serde(rename = "E")]
    pub e: EncodedArray,
    pub preprocessing: Preprocessing,
}

impl ExemplarDocument {
    pub fn from_set(set: &ExemplarSet, preprocessing: &Preprocessing) -> Self {
        ExemplarDocument {
            format_version: FORMAT_VERSION,
            kind: "exemplars".into(),
            z: set.len(),
            input_dim: set.e().cols(),
            per_class: set.per_class(),
            labels: set.labels().to_vec(),
            e: EncodedArray::encode(set.len(), set.e().cols(), set.e().as_slice()),
            preprocessing: preprocessing.clone(),
        }
    }

    pub fn to_set(&self) -> Result<ExemplarSet> {
        if self.format_version != FORMAT_VERSION || self.kind != "exemplars" {
            return Err(HopeError::Document(format!(
                "expected exemplar document version {FORMAT_VERSION}, got kind `{}` version {}",
                self.kind, self.format_version
            )));
        }
        let e = Matrix::from_vec(self.z, self.input_dim, self.e.decode()?)?;
        ExemplarSet::new(e, self.labels.clone(), self.per_class)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| HopeError::Document(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HopeError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HopeError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HopeError::Document(format!("{}: {e}", path.display())))
}

pub fn save_model(path: &Path, model: &HighOrderModel, preprocessing: &Preprocessing) -> Result<()> {
    write_json(path, &ModelDocument::from_model(model, preprocessing))
}

pub fn load_model(path: &Path) -> Result<(HighOrderModel, Preprocessing)> {
    read_json::<ModelDocument>(path)?.to_model()
}

pub fn save_exemplars(path: &Path, set: &ExemplarSet, preprocessing: &Preprocessing) -> Result<()> {
    write_json(path, &ExemplarDocument::from_set(set, preprocessing))
}

pub fn load_exemplars(path: &Path) -> Result<(ExemplarSet, Preprocessing)> {
    let doc: ExemplarDocument = read_json(path)?;
    Ok((doc.to_set()?, doc.preprocessing.clone()))
}

/// Writes any serializable value as pretty JSON.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

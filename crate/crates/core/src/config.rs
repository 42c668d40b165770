//! Run settings shared by the configuration document and the command line.
//!
//! The document is flat TOML whose keys are the field names below; each key
//! also exists as a `--kebab-case` flag. Resolution order is built-in
//! defaults, then the document, then flags. Unknown keys are rejected.
//!
//! ```toml
//! variant = "shope"
//! order = 2
//! factors = 400
//! units = 400
//! batch_size = 1000
//! cg_variant = "polak_ribiere_plus"
//! synthetic = "gaussians"
//! synthetic_n = 300
//! ```

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::cg::CgVariant;
use crate::data_io::{SyntheticKind, SyntheticParams};
use crate::error::{HopeError, Result};
use crate::model::{Shape, Variant};
use crate::optimizer::TrainConfig;

macro_rules! text_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl std::str::FromStr for $name {
            type Err = HopeError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(HopeError::Config(format!(
                        "unknown {} `{other}`", stringify!($name)
                    ))),
                }
            }
        }
    };
}

text_enum!(
    /// How the `exemplars` command builds its set.
    ExemplarMethod {
        KmeansInput => "kmeans-input",
        KmeansEmbed => "kmeans-embed",
        Joint => "joint",
    }
);

text_enum!(
    /// Reference sets scored by the `evaluate` command.
    RefSet {
        Train => "train",
        Exemplars => "exemplars",
        Both => "both",
        Test => "test",
    }
);

text_enum!(
    DataSplit {
        Train => "train",
        Test => "test",
    }
);

/// Every setting is optional here; [`Settings::resolve`] fills defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Model family: hope or shope.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Interaction order O.
    #[arg(long)]
    pub order: Option<u32>,
    /// Number of interaction filters F.
    #[arg(long)]
    pub factors: Option<usize>,
    /// Number of sigmoid units m (shope only).
    #[arg(long)]
    pub units: Option<usize>,
    /// Embedding dimension h.
    #[arg(long)]
    pub embed_dim: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub cg_iters_per_batch: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// polak_ribiere_plus or fletcher_reeves.
    #[arg(long)]
    pub cg_variant: Option<CgVariant>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub backtrack: Option<f64>,
    #[arg(long)]
    pub armijo: Option<f64>,
    #[arg(long)]
    pub max_line_search_evals: Option<usize>,
    #[arg(long)]
    pub warmup_epochs_alternating: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Seeds initialization, shuffling, splits, k-means and synthetic data.
    #[arg(long)]
    pub seed: Option<u64>,

    /// IDX image file for training.
    #[arg(long)]
    pub train_images: Option<PathBuf>,
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    /// Delimited text file for training (label first on each row).
    #[arg(long)]
    pub train_text: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub test_text: Option<PathBuf>,
    /// Keep only the first N training rows.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Keep only the first N test rows.
    #[arg(long)]
    pub test_limit: Option<usize>,

    /// Generate data instead of reading files: gaussians, circles or xor.
    #[arg(long)]
    pub synthetic: Option<SyntheticKind>,
    #[arg(long)]
    pub synthetic_n: Option<usize>,
    #[arg(long)]
    pub synthetic_classes: Option<usize>,
    #[arg(long)]
    pub synthetic_dim: Option<usize>,
    #[arg(long)]
    pub synthetic_noise: Option<f64>,
    #[arg(long)]
    pub synthetic_separation: Option<f64>,
    #[arg(long)]
    pub synthetic_inner_radius: Option<f64>,
    #[arg(long)]
    pub synthetic_outer_radius: Option<f64>,
    /// Share of generated points held out as the test split.
    #[arg(long)]
    pub test_fraction: Option<f64>,

    /// kmeans-input, kmeans-embed or joint.
    #[arg(long)]
    pub method: Option<ExemplarMethod>,
    /// Exemplars per class.
    #[arg(long)]
    pub per_class: Option<usize>,

    /// Neighbors for kNN evaluation.
    #[arg(long)]
    pub k: Option<usize>,
    /// train, exemplars, both or test.
    #[arg(long)]
    pub refs: Option<RefSet>,
    /// Which split `embed` and `plot` read: train or test.
    #[arg(long)]
    pub split: Option<DataSplit>,

    /// Directory receiving artifacts.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Model document to read (default: <out_dir>/model.json).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Exemplar document to read (default: <out_dir>/exemplars.json).
    #[arg(long)]
    pub exemplar_file: Option<PathBuf>,
    /// Primary output file of `embed`, `plot` or `evaluate`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (default: HOPE_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Settings {
    /// Built-in defaults for every non-path setting.
    pub fn defaults() -> Self {
        let t = TrainConfig::default();
        let s = SyntheticParams::default();
        Settings {
            variant: Some(Variant::Hope),
            order: Some(3),
            factors: Some(300),
            units: Some(400),
            embed_dim: Some(2),
            batch_size: Some(t.batch_size),
            cg_iters_per_batch: Some(t.cg_iters_per_batch),
            max_epochs: Some(t.max_epochs),
            cg_variant: Some(t.cg_variant),
            initial_step: Some(t.initial_step),
            backtrack: Some(t.backtrack),
            armijo: Some(t.armijo),
            max_line_search_evals: Some(t.max_line_search_evals),
            warmup_epochs_alternating: Some(t.warmup_epochs_alternating),
            patience: Some(t.patience),
            validation_fraction: Some(t.validation_fraction),
            seed: Some(t.seed),
            synthetic_n: Some(s.n),
            synthetic_classes: Some(s.classes),
            synthetic_dim: Some(s.dim),
            synthetic_noise: Some(s.noise),
            synthetic_separation: Some(s.separation),
            synthetic_inner_radius: Some(s.radii.0),
            synthetic_outer_radius: Some(s.radii.1),
            test_fraction: Some(0.1),
            method: Some(ExemplarMethod::KmeansInput),
            per_class: Some(2),
            k: Some(crate::evaluation::DEFAULT_K),
            out_dir: Some(PathBuf::from(".")),
            ..Settings::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HopeError::Config(e.to_string().replace('\n', " ")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HopeError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat settings serialize")
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(&self, over: &Settings) -> Settings {
        let mut base = serde_json::to_value(self).expect("settings serialize");
        let top = serde_json::to_value(over).expect("settings serialize");
        if let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) {
            for (k, v) in t {
                if !v.is_null() {
                    b.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(base).expect("merged settings deserialize")
    }

    /// Defaults, then `file`, then `cli`.
    pub fn resolve(file: Option<&Settings>, cli: &Settings) -> Settings {
        let base = Settings::defaults();
        let base = match file {
            Some(f) => base.overlay(f),
            None => base,
        };
        base.overlay(cli)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            cg_iters_per_batch: self.cg_iters_per_batch.unwrap_or(d.cg_iters_per_batch),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            cg_variant: self.cg_variant.unwrap_or(d.cg_variant),
            initial_step: self.initial_step.unwrap_or(d.initial_step),
            backtrack: self.backtrack.unwrap_or(d.backtrack),
            armijo: self.armijo.unwrap_or(d.armijo),
            max_line_search_evals: self.max_line_search_evals.unwrap_or(d.max_line_search_evals),
            warmup_epochs_alternating: self
                .warmup_epochs_alternating
                .unwrap_or(d.warmup_epochs_alternating),
            seed: self.seed.unwrap_or(d.seed),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            patience: self.patience.unwrap_or(d.patience),
        }
    }

    pub fn synthetic_params(&self) -> SyntheticParams {
        let d = SyntheticParams::default();
        SyntheticParams {
            n: self.synthetic_n.unwrap_or(d.n),
            classes: self.synthetic_classes.unwrap_or(d.classes),
            dim: self.synthetic_dim.unwrap_or(d.dim),
            noise: self.synthetic_noise.unwrap_or(d.noise),
            separation: self.synthetic_separation.unwrap_or(d.separation),
            radii: (
                self.synthetic_inner_radius.unwrap_or(d.radii.0),
                self.synthetic_outer_radius.unwrap_or(d.radii.1),
            ),
        }
    }

    /// Model shape for inputs of width `input_dim` (bias included).
    pub fn shape(&self, input_dim: usize) -> Result<Shape> {
        let order = self.order.unwrap_or(3);
        let h = self.embed_dim.unwrap_or(2);
        let f = self.factors.unwrap_or(300);
        let shape = match self.variant.unwrap_or(Variant::Hope) {
            Variant::Hope => Shape::hope(order, input_dim, h, f),
            Variant::Shope => Shape::shope(order, input_dim, h, f, self.units.unwrap_or(400)),
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir().join("model.json"))
    }

    pub fn exemplar_path(&self) -> PathBuf {
        self.exemplar_file
            .clone()
            .unwrap_or_else(|| self.out_dir().join("exemplars.json"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

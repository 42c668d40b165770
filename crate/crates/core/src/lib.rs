//! Supervised high-order parametric embedding.
//!
//! Learns explicit `O`-order feature-interaction maps into a low-dimensional
//! (usually 2-D) space by maximally collapsing classes, synthesizes a small
//! labeled exemplar set for compressed kNN retrieval, and evaluates
//! embeddings by kNN classification.
//!
//! Row-wise work (batched maps, pairwise probabilities, gradient
//! accumulation, kNN queries) runs on rayon when the default `parallel`
//! feature is enabled and sequentially otherwise; both builds produce
//! bit-identical results.

pub mod cg;
pub mod cli;
pub mod config;
pub mod data_io;
pub mod document;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exemplar;
pub mod manifest;
pub mod matrix;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod par;
pub mod plot;
pub mod probability;

pub use dataset::{LabeledDataset, Preprocessing};
pub use error::{ErrorClass, HopeError, Result};
pub use exemplar::ExemplarSet;
pub use matrix::Matrix;
pub use model::{HighOrderModel, Shape, Variant};
pub use optimizer::{TrainConfig, TrainTrace};

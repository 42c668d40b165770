use serde::{Deserialize, Serialize};

use crate::error::{HopeError, Result};
use crate::matrix::Matrix;

/// How raw features were turned into model inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub scheme: String,
    /// Raw values were divided by this before the bias was appended.
    pub input_scale: f64,
    /// `label_map[k]` is the original label of class `k + 1`.
    pub label_map: Vec<i64>,
}

impl Preprocessing {
    pub fn identity(num_classes: usize) -> Self {
        Preprocessing {
            scheme: "none".to_string(),
            input_scale: 1.0,
            label_map: (1..=num_classes as i64).collect(),
        }
    }
}

/// Labeled inputs with a trailing bias component fixed to 1 and labels in `1..=c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    x: Matrix,
    labels: Vec<u32>,
    num_classes: usize,
    preprocessing: Preprocessing,
}

impl LabeledDataset {
    pub fn new(x: Matrix, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        Self::with_preprocessing(x, labels, num_classes, Preprocessing::identity(num_classes))
    }

    pub fn with_preprocessing(
        x: Matrix,
        labels: Vec<u32>,
        num_classes: usize,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        Self::build(x, labels, num_classes, preprocessing, true)
    }

    /// Like [`with_preprocessing`](Self::with_preprocessing) but allows classes
    /// without members (test sets labeled through a stored label map).
    pub fn with_partial_classes(
        x: Matrix,
        labels: Vec<u32>,
        num_classes: usize,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        Self::build(x, labels, num_classes, preprocessing, false)
    }

    fn build(
        x: Matrix,
        labels: Vec<u32>,
        num_classes: usize,
        preprocessing: Preprocessing,
        require_all_classes: bool,
    ) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(HopeError::InvalidDataset(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if x.rows() == 0 || x.cols() == 0 {
            return Err(HopeError::InvalidDataset("dataset is empty".into()));
        }
        if let Some(i) = x.iter_rows().position(|r| r[r.len() - 1] != 1.0) {
            return Err(HopeError::InvalidDataset(format!(
                "row {i} has bias component {} instead of 1",
                x.get(i, x.cols() - 1)
            )));
        }
        if let Some(&l) = labels
            .iter()
            .find(|&&l| l == 0 || l as usize > num_classes)
        {
            return Err(HopeError::InvalidDataset(format!(
                "label {l} outside 1..={num_classes}"
            )));
        }
        let ds = LabeledDataset {
            x,
            labels,
            num_classes,
            preprocessing,
        };
        let counts = ds.class_counts();
        if let Some(k) = counts.iter().position(|&n| n == 0).filter(|_| require_all_classes) {
            return Err(HopeError::InvalidDataset(format!(
                "class {} has no members",
                k + 1
            )));
        }
        for (k, &n) in counts.iter().enumerate() {
            if n == 1 {
                log::warn!("class {} has a single member and forms no same-class pair", k + 1);
            }
        }
        Ok(ds)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn preprocessing(&self) -> &Preprocessing {
        &self.preprocessing
    }

    /// Member count of each class, indexed by `label - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize - 1] += 1;
        }
        counts
    }

    /// Row indices of each class, in ascending order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize - 1].push(i);
        }
        out
    }

    /// Rows at `indices`. The result may lack some classes, so the class
    /// membership invariant is not re-checked.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            preprocessing: self.preprocessing.clone(),
        }
    }

    /// Keeps the first `n` rows.
    pub fn truncate(&self, n: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

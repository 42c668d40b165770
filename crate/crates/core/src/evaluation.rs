//! Brute-force kNN classification in embedding space.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{HopeError, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::model::HighOrderModel;
use crate::par;

/// Neighborhood size used throughout for reporting.
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub error_rate: f64,
    pub num_errors: usize,
    pub num_queries: usize,
    pub reference_set_size: usize,
    pub reference_space_dim: usize,
    /// Seconds per query, classification only (fastest of repeated passes).
    pub mean_query_time: f64,
}

impl EvalReport {
    /// One-line human-readable summary.
    pub fn summary(&self, name: &str) -> String {
        format!(
            "{name}: {k}NN error {:.4}% ({}/{}) against {} refs in {}-D, {:.3} us/query",
            self.error_rate * 100.0,
            self.num_errors,
            self.num_queries,
            self.reference_set_size,
            self.reference_space_dim,
            self.mean_query_time * 1e6,
            k = self.k,
        )
    }
}

/// Indices of the `k` nearest references, ordered by (distance, index).
fn nearest(query: &[f64], refs: &Matrix, k: usize) -> Vec<(f64, usize)> {
    let mut cand: Vec<(f64, usize)> = refs
        .iter_rows()
        .enumerate()
        .map(|(j, r)| (sq_dist(query, r), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand
}

/// Majority vote; ties go to the smaller summed distance, then the smaller label.
fn vote(neighbors: &[(f64, usize)], ref_labels: &[u32]) -> u32 {
    // (label, count, summed distance), in first-seen order
    let mut tally: Vec<(u32, usize, f64)> = Vec::new();
    for &(d, j) in neighbors {
        let l = ref_labels[j];
        match tally.iter_mut().find(|t| t.0 == l) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((l, 1, d)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.2.total_cmp(&b.2))
                .then(a.0.cmp(&b.0))
        })
        .map(|t| t.0)
        .expect("k >= 1")
}

/// Predicts a label for each query row by majority vote of its `k` nearest
/// references (squared Euclidean distance).
pub fn knn_classify(
    queries: &Matrix,
    refs: &Matrix,
    ref_labels: &[u32],
    k: usize,
) -> Result<Vec<u32>> {
    if k == 0 || refs.rows() < k {
        return Err(HopeError::TooFewReferences {
            refs: refs.rows(),
            k,
        });
    }
    if ref_labels.len() != refs.rows() {
        return Err(HopeError::DimensionMismatch {
            context: "reference labels",
            expected: refs.rows(),
            actual: ref_labels.len(),
        });
    }
    if queries.cols() != refs.cols() {
        return Err(HopeError::DimensionMismatch {
            context: "query dimension",
            expected: refs.cols(),
            actual: queries.cols(),
        });
    }
    Ok(par::map_range(queries.rows(), |i| {
        vote(&nearest(queries.row(i), refs, k), ref_labels)
    }))
}

pub fn error_count(predicted: &[u32], truth: &[u32]) -> usize {
    predicted.iter().zip(truth).filter(|(a, b)| a != b).count()
}

const TIMING_BUDGET: f64 = 0.05;
const TIMING_MAX_PASSES: usize = 200;

/// Classifies repeatedly until the time budget is spent and returns the
/// predictions with the fastest pass time. Small query sets otherwise time
/// scheduler noise rather than search cost.
fn timed_classify(
    queries: &Matrix,
    refs: &Matrix,
    ref_labels: &[u32],
    k: usize,
) -> Result<(Vec<u32>, f64)> {
    let total = Instant::now();
    let mut best = f64::INFINITY;
    let mut predicted = Vec::new();
    for _ in 0..TIMING_MAX_PASSES {
        let start = Instant::now();
        predicted = knn_classify(queries, refs, ref_labels, k)?;
        best = best.min(start.elapsed().as_secs_f64());
        if total.elapsed().as_secs_f64() >= TIMING_BUDGET {
            break;
        }
    }
    Ok((predicted, best))
}

/// kNN error of already-embedded queries against embedded references.
pub fn evaluate_embedded(
    queries: &Matrix,
    query_labels: &[u32],
    refs: &Matrix,
    ref_labels: &[u32],
    k: usize,
) -> Result<EvalReport> {
    let (predicted, elapsed) = timed_classify(queries, refs, ref_labels, k)?;
    let m = queries.rows();
    let errors = error_count(&predicted, query_labels);
    Ok(EvalReport {
        k,
        error_rate: if m == 0 { 0.0 } else { errors as f64 / m as f64 },
        num_errors: errors,
        num_queries: m,
        reference_set_size: refs.rows(),
        reference_space_dim: refs.cols(),
        mean_query_time: if m == 0 { 0.0 } else { elapsed / m as f64 },
    })
}

/// Embeds references and test points with `model` and reports kNN error.
///
/// `refs` is an input-space matrix (training rows or exemplars) with labels.
pub fn evaluate_model(
    model: &HighOrderModel,
    refs: &Matrix,
    ref_labels: &[u32],
    test: &LabeledDataset,
    k: usize,
) -> Result<EvalReport> {
    let ref_y = model.map_batch(refs)?;
    let test_y = model.map_batch(test.x())?;
    evaluate_embedded(&test_y, test.labels(), &ref_y, ref_labels, k)
}

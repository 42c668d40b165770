//! Neighbor probabilities under the heavy-tailed (Student-t, one degree of
//! freedom) kernel `k(d) = 1 / (1 + d)`.
//!
//! The symmetric form normalizes once over all ordered pairs `k ≠ l`; the
//! asymmetric form normalizes each point's row over the exemplars.

use crate::error::{HopeError, Result};
use crate::matrix::{pairwise_sum, sq_dist, Matrix};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Symmetric,
    Asymmetric,
}

/// Target and model probabilities for one set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTables {
    pub form: Form,
    pub p: Matrix,
    pub q: Matrix,
}

impl ProbabilityTables {
    /// All-pairs tables for embeddings `y` with labels.
    pub fn symmetric(y: &Matrix, labels: &[u32]) -> Result<Self> {
        let q = q_symmetric(&pairwise_sq_dist(y))?;
        let p = p_from_labels(labels, Form::Symmetric, None)?;
        Ok(ProbabilityTables {
            form: Form::Symmetric,
            p,
            q,
        })
    }

    /// Point-to-exemplar tables.
    pub fn asymmetric(
        y: &Matrix,
        labels: &[u32],
        exemplars: &Matrix,
        exemplar_labels: &[u32],
    ) -> Result<Self> {
        let q = q_asymmetric(&cross_sq_dist(y, exemplars))?;
        let p = p_from_labels(labels, Form::Asymmetric, Some(exemplar_labels))?;
        Ok(ProbabilityTables {
            form: Form::Asymmetric,
            p,
            q,
        })
    }
}

#[inline]
pub fn t_kernel(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

/// Squared Euclidean distances between all rows of `y`.
pub fn pairwise_sq_dist(y: &Matrix) -> Matrix {
    cross_sq_dist(y, y)
}

/// Squared Euclidean distances from each row of `a` to each row of `b`.
pub fn cross_sq_dist(a: &Matrix, b: &Matrix) -> Matrix {
    let n = b.rows();
    let mut d = Matrix::zeros(a.rows(), n);
    par::for_each_row_mut(d.as_mut_slice(), n, |i, row| {
        let ai = a.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = sq_dist(ai, b.row(j)).max(0.0);
        }
    });
    d
}

/// Kernel row sums excluding the diagonal, plus their pairwise total.
pub(crate) fn symmetric_normalizer(d: &Matrix) -> f64 {
    let n = d.rows();
    let row_sums = par::map_range(n, |i| {
        d.row(i)
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| t_kernel(v))
            .sum::<f64>()
    });
    pairwise_sum(&row_sums)
}

/// `q[i][j] = k(d_ij) / Σ_{k≠l} k(d_kl)`, zero diagonal.
pub fn q_symmetric(d: &Matrix) -> Result<Matrix> {
    let n = d.rows();
    if n < 2 {
        return Err(HopeError::UndefinedObjective(format!(
            "symmetric probabilities need at least 2 points, got {n}"
        )));
    }
    if d.cols() != n {
        return Err(HopeError::DimensionMismatch {
            context: "symmetric distance matrix",
            expected: n,
            actual: d.cols(),
        });
    }
    let z = symmetric_normalizer(d);
    let mut q = Matrix::zeros(n, n);
    par::for_each_row_mut(q.as_mut_slice(), n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = t_kernel(d.get(i, j)) / z;
            }
        }
    });
    Ok(q)
}

/// `q[i][j] = k(d_ij) / Σ_k k(d_ik)` over exemplar columns.
pub fn q_asymmetric(d: &Matrix) -> Result<Matrix> {
    let z = d.cols();
    if z == 0 {
        return Err(HopeError::UndefinedObjective(
            "asymmetric probabilities need at least one exemplar".into(),
        ));
    }
    let mut q = Matrix::zeros(d.rows(), z);
    par::for_each_row_mut(q.as_mut_slice(), z, |i, row| {
        for (v, &dv) in row.iter_mut().zip(d.row(i)) {
            *v = t_kernel(dv);
        }
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    });
    Ok(q)
}

/// Number of ordered same-class pairs `(i, j)`, `i ≠ j`.
pub(crate) fn same_class_pairs(labels: &[u32]) -> usize {
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts.values().map(|&c| c * c.saturating_sub(1)).sum()
}

/// Number of exemplars carrying each label.
pub(crate) fn exemplar_counts(exemplar_labels: &[u32]) -> std::collections::BTreeMap<u32, usize> {
    let mut counts = std::collections::BTreeMap::new();
    for &l in exemplar_labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
}

/// Label-derived target probabilities.
///
/// Symmetric: uniform over all ordered same-class pairs. Asymmetric: each
/// row is uniform over the exemplars sharing the point's label.
pub fn p_from_labels(
    labels: &[u32],
    form: Form,
    exemplar_labels: Option<&[u32]>,
) -> Result<Matrix> {
    let n = labels.len();
    match form {
        Form::Symmetric => {
            let pairs = same_class_pairs(labels);
            if pairs == 0 {
                return Err(HopeError::UndefinedObjective(
                    "no same-class pairs in the point set".into(),
                ));
            }
            let v = 1.0 / pairs as f64;
            let mut p = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && labels[i] == labels[j] {
                        p.set(i, j, v);
                    }
                }
            }
            Ok(p)
        }
        Form::Asymmetric => {
            let ex = exemplar_labels.ok_or_else(|| {
                HopeError::UndefinedObjective("asymmetric targets need exemplar labels".into())
            })?;
            let counts = exemplar_counts(ex);
            let mut p = Matrix::zeros(n, ex.len());
            for (i, &l) in labels.iter().enumerate() {
                let c = *counts
                    .get(&l)
                    .ok_or(HopeError::MissingExemplars { class: l })?;
                for (j, &el) in ex.iter().enumerate() {
                    if el == l {
                        p.set(i, j, 1.0 / c as f64);
                    }
                }
            }
            Ok(p)
        }
    }
}

//! Maximally-collapsing-classes objective.
//!
//! The reported loss is the full divergence `Σ p log(p / q)` over entries with
//! `p > 0`, so it is nonnegative; dropping the `Σ p log p` constant would not
//! change any gradient.
//!
//! Gradients with respect to the embedding follow from
//! `∂ℓ/∂d_ij = k_ij (p_ij − q_ij)` with `k_ij = 1 / (1 + d_ij)`:
//!
//! * symmetric: `∂ℓ/∂y_i = 4 Σ_j k_ij (p_ij − q_ij)(y_i − y_j)`
//! * asymmetric: `∂ℓ/∂y_i = 2 Σ_j k_ij (p_ij − q_ij)(y_i − v_j)` and
//!   `∂ℓ/∂v_j = 2 Σ_i k_ij (p_ij − q_ij)(v_j − y_i)`, where `v_j = f(e_j)`
//!
//! and are pulled back through the map with [`HighOrderModel`]'s reverse pass.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{HopeError, Result};
use crate::exemplar::ExemplarSet;
use crate::matrix::{norm, pairwise_sum, Matrix};
use crate::model::HighOrderModel;
use crate::par;
use crate::probability::{
    cross_sq_dist, exemplar_counts, pairwise_sq_dist, q_asymmetric, q_symmetric,
    same_class_pairs, t_kernel,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss_value: f64,
    pub grad_norm: f64,
    /// Ordered same-class pairs (symmetric) or training rows (asymmetric).
    pub num_pairs_or_rows: usize,
}

/// Loss and parameter gradient of the symmetric objective.
#[derive(Clone, Debug)]
pub struct SymmetricEval {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Loss and gradients of the asymmetric objective.
#[derive(Clone, Debug)]
pub struct AsymmetricEval {
    pub loss: f64,
    pub params: Vec<f64>,
    /// `z × H`; the bias column is always zero.
    pub exemplars: Matrix,
}

/// Symmetric loss and `∂ℓ/∂Y` for embeddings supplied directly.
pub fn symmetric_embedding_objective(y: &Matrix, labels: &[u32]) -> Result<(f64, Matrix)> {
    let n = y.rows();
    if labels.len() != n {
        return Err(HopeError::DimensionMismatch {
            context: "labels vs embeddings",
            expected: n,
            actual: labels.len(),
        });
    }
    let pairs = same_class_pairs(labels);
    if n < 2 || pairs == 0 {
        return Err(HopeError::UndefinedObjective(format!(
            "{n} points with no same-class pairs"
        )));
    }
    let d = pairwise_sq_dist(y);
    let q = q_symmetric(&d)?;
    let p = 1.0 / pairs as f64;
    let log_p = p.ln();

    let row_losses = par::map_range(n, |i| {
        let mut acc = 0.0;
        for j in 0..n {
            if j != i && labels[j] == labels[i] {
                acc += p * (log_p - q.get(i, j).ln());
            }
        }
        acc
    });
    let loss = pairwise_sum(&row_losses);

    let h = y.cols();
    let mut gy = Matrix::zeros(n, h);
    par::for_each_row_mut(gy.as_mut_slice(), h, |i, g| {
        let yi = y.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let pij = if labels[j] == labels[i] { p } else { 0.0 };
            let coef = 4.0 * t_kernel(d.get(i, j)) * (pij - q.get(i, j));
            for ((gs, &a), &b) in g.iter_mut().zip(yi).zip(y.row(j)) {
                *gs += coef * (a - b);
            }
        }
    });
    Ok((loss, gy))
}

fn pull_back(model: &HighOrderModel, x: &Matrix, gy: &Matrix) -> Vec<f64> {
    par::chunked_sum(x.rows(), model.num_params(), |i, acc| {
        model.accumulate_grad(x.row(i), gy.row(i), acc, None)
    })
}

/// Loss and gradient of the symmetric objective over all pairs in `data`.
pub fn eval_symmetric(model: &HighOrderModel, data: &LabeledDataset) -> Result<SymmetricEval> {
    let y = model.map_batch(data.x())?;
    let (loss, gy) = symmetric_embedding_objective(&y, data.labels())?;
    let grad = pull_back(model, data.x(), &gy);
    Ok(SymmetricEval { loss, grad })
}

pub fn loss_symmetric(model: &HighOrderModel, data: &LabeledDataset) -> Result<LossReport> {
    let eval = eval_symmetric(model, data)?;
    Ok(LossReport {
        loss_value: eval.loss,
        grad_norm: norm(&eval.grad),
        num_pairs_or_rows: same_class_pairs(data.labels()),
    })
}

pub fn grad_symmetric(model: &HighOrderModel, data: &LabeledDataset) -> Result<Vec<f64>> {
    Ok(eval_symmetric(model, data)?.grad)
}

/// Asymmetric loss with `∂ℓ/∂Y` and `∂ℓ/∂V` for embeddings supplied directly.
pub fn asymmetric_embedding_objective(
    y: &Matrix,
    labels: &[u32],
    v: &Matrix,
    exemplar_labels: &[u32],
) -> Result<(f64, Matrix, Matrix)> {
    let counts = exemplar_counts(exemplar_labels);
    if let Some(&l) = labels.iter().find(|l| !counts.contains_key(l)) {
        return Err(HopeError::MissingExemplars { class: l });
    }
    let (n, z, h) = (y.rows(), v.rows(), y.cols());
    let d = cross_sq_dist(y, v);
    let q = q_asymmetric(&d)?;
    let target = |i: usize, j: usize| {
        if exemplar_labels[j] == labels[i] {
            1.0 / counts[&labels[i]] as f64
        } else {
            0.0
        }
    };
    // coef[i][j] = 2 k_ij (p_ij - q_ij)
    let mut coef = Matrix::zeros(n, z);
    par::for_each_row_mut(coef.as_mut_slice(), z, |i, row| {
        for (j, c) in row.iter_mut().enumerate() {
            *c = 2.0 * t_kernel(d.get(i, j)) * (target(i, j) - q.get(i, j));
        }
    });

    let row_losses = par::map_range(n, |i| {
        let mut acc = 0.0;
        for j in 0..z {
            let p = target(i, j);
            if p > 0.0 {
                acc += p * (p.ln() - q.get(i, j).ln());
            }
        }
        acc
    });
    let loss = pairwise_sum(&row_losses);

    let mut gy = Matrix::zeros(n, h);
    par::for_each_row_mut(gy.as_mut_slice(), h, |i, g| {
        for j in 0..z {
            let c = coef.get(i, j);
            for ((gs, &a), &b) in g.iter_mut().zip(y.row(i)).zip(v.row(j)) {
                *gs += c * (a - b);
            }
        }
    });
    let mut gv = Matrix::zeros(z, h);
    par::for_each_row_mut(gv.as_mut_slice(), h, |j, g| {
        for i in 0..n {
            let c = coef.get(i, j);
            for ((gs, &a), &b) in g.iter_mut().zip(v.row(j)).zip(y.row(i)) {
                *gs += c * (a - b);
            }
        }
    });
    Ok((loss, gy, gv))
}

/// Loss and gradients of the point-to-exemplar objective.
pub fn eval_asymmetric(
    model: &HighOrderModel,
    data: &LabeledDataset,
    exemplars: &ExemplarSet,
) -> Result<AsymmetricEval> {
    let y = model.map_batch(data.x())?;
    let v = model.map_batch(exemplars.e())?;
    let (loss, gy, gv) = asymmetric_embedding_objective(&y, data.labels(), &v, exemplars.labels())?;

    let mut params = pull_back(model, data.x(), &gy);
    let hd = model.input_dim();
    let z = exemplars.len();
    let mut ex_grad = Matrix::zeros(z, hd);
    // exemplar contributions are accumulated sequentially in exemplar order
    for j in 0..z {
        model.accumulate_grad(
            exemplars.e().row(j),
            gv.row(j),
            &mut params,
            Some(ex_grad.row_mut(j)),
        );
        ex_grad.set(j, hd - 1, 0.0);
    }
    Ok(AsymmetricEval {
        loss,
        params,
        exemplars: ex_grad,
    })
}

pub fn loss_asymmetric(
    model: &HighOrderModel,
    data: &LabeledDataset,
    exemplars: &ExemplarSet,
) -> Result<LossReport> {
    let eval = eval_asymmetric(model, data, exemplars)?;
    let g2: f64 = eval.params.iter().chain(eval.exemplars.as_slice()).map(|v| v * v).sum();
    Ok(LossReport {
        loss_value: eval.loss,
        grad_norm: g2.sqrt(),
        num_pairs_or_rows: data.len(),
    })
}

pub fn grad_asymmetric(
    model: &HighOrderModel,
    data: &LabeledDataset,
    exemplars: &ExemplarSet,
) -> Result<AsymmetricEval> {
    eval_asymmetric(model, data, exemplars)
}

#![allow(dead_code)]

use hope::exemplar::ExemplarSet;
use hope::objective::{eval_asymmetric, eval_symmetric};
use hope::{HighOrderModel, LabeledDataset, Matrix, Shape, Variant};
use rand::Rng;

/// Rows uniform in [-1, 1] with a trailing bias of 1.
pub fn random_inputs(rng: &mut impl Rng, n: usize, width: usize) -> Matrix {
    let mut m = Matrix::zeros(n, width);
    for i in 0..n {
        let row = m.row_mut(i);
        for v in row.iter_mut().take(width - 1) {
            *v = rng.gen_range(-1.0..1.0);
        }
        row[width - 1] = 1.0;
    }
    m
}

/// Labels cycling through `1..=c` so every class has members.
pub fn cycling_labels(n: usize, c: usize) -> Vec<u32> {
    (0..n).map(|i| (i % c) as u32 + 1).collect()
}

pub fn random_model(rng: &mut impl Rng, variant: Variant, width: usize) -> HighOrderModel {
    let order = rng.gen_range(1..=3);
    let f = rng.gen_range(1..=4);
    let shape = match variant {
        Variant::Hope => Shape::hope(order, width, 2, f),
        Variant::Shope => Shape::shope(order, width, 2, f, rng.gen_range(1..=4)),
    };
    HighOrderModel::init(shape, rng.gen()).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Five-point central differences of `f` at `x` over the coordinates in
/// `which`; truncation error is O(h^4).
pub fn central_diff(x: &[f64], which: &[usize], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    which
        .iter()
        .map(|&i| {
            let h = step * x[i].abs().max(1.0);
            let mut at = |t: f64| {
                probe[i] = x[i] + t * h;
                f(&probe)
            };
            let d = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
            probe[i] = x[i];
            d
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-3;

/// Worst relative error of the symmetric-objective parameter gradient.
pub fn symmetric_gradient_error(model: &HighOrderModel, data: &LabeledDataset) -> f64 {
    let analytic = eval_symmetric(model, data).unwrap().grad;
    let all: Vec<usize> = (0..model.num_params()).collect();
    let mut scratch = model.clone();
    let fd = central_diff(model.params(), &all, FD_STEP, |p| {
        scratch.set_params(p);
        eval_symmetric(&scratch, data).unwrap().loss
    });
    rel_err(&analytic, &fd)
}

/// Relative errors of the asymmetric-objective gradient with respect to the
/// parameters and to the non-bias exemplar coordinates, plus whether the
/// bias column of the exemplar gradient is exactly zero.
pub fn asymmetric_gradient_errors(
    model: &HighOrderModel,
    data: &LabeledDataset,
    ex: &ExemplarSet,
) -> (f64, f64, bool) {
    let eval = eval_asymmetric(model, data, ex).unwrap();
    let all: Vec<usize> = (0..model.num_params()).collect();
    let mut scratch = model.clone();
    let fd_params = central_diff(model.params(), &all, FD_STEP, |p| {
        scratch.set_params(p);
        eval_asymmetric(&scratch, data, ex).unwrap().loss
    });

    let w = ex.e().cols();
    let coords: Vec<usize> = (0..ex.e().as_slice().len()).filter(|i| i % w != w - 1).collect();
    let fd_ex = central_diff(ex.e().as_slice(), &coords, FD_STEP, |e| {
        let m = Matrix::from_vec(ex.len(), w, e.to_vec()).unwrap();
        let moved = ExemplarSet::new(m, ex.labels().to_vec(), ex.per_class()).unwrap();
        eval_asymmetric(model, data, &moved).unwrap().loss
    });
    let analytic_ex: Vec<f64> = coords.iter().map(|&i| eval.exemplars.as_slice()[i]).collect();
    let bias_zero = eval.exemplars.iter_rows().all(|r| r[w - 1] == 0.0);
    (
        rel_err(&eval.params, &fd_params),
        rel_err(&analytic_ex, &fd_ex),
        bias_zero,
    )
}

/// Naive kNN: all distances, full sort by (distance, index), vote by count,
/// then smaller summed distance, then smaller label.
pub fn knn_oracle(queries: &Matrix, refs: &Matrix, labels: &[u32], k: usize) -> Vec<u32> {
    queries
        .iter_rows()
        .map(|q| {
            let mut all: Vec<(f64, usize)> = refs
                .iter_rows()
                .enumerate()
                .map(|(j, r)| (q.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum(), j))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let top = &all[..k];
            let mut classes: Vec<u32> = top.iter().map(|&(_, j)| labels[j]).collect();
            classes.sort();
            classes.dedup();
            let score = |c: u32| {
                let members: Vec<f64> = top.iter().filter(|&&(_, j)| labels[j] == c).map(|t| t.0).collect();
                (members.len(), members.iter().sum::<f64>())
            };
            let mut best = classes[0];
            for &c in &classes[1..] {
                let (nc, dc) = score(c);
                let (nb, db) = score(best);
                if nc > nb || (nc == nb && dc < db) {
                    best = c;
                }
            }
            best
        })
        .collect()
}

//! Exemplar synthesis: per-class k-means initialization and joint refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{HopeError, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::model::HighOrderModel;
use crate::optimizer::{train_joint, TrainConfig, TrainTrace};
use crate::par;

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;
pub const KMEANS_RESTARTS: usize = 5;

/// Synthetic input-space points with fixed labels, `per_class` for each class.
#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarSet {
    e: Matrix,
    labels: Vec<u32>,
    per_class: usize,
}

impl ExemplarSet {
    pub fn new(e: Matrix, labels: Vec<u32>, per_class: usize) -> Result<Self> {
        if e.rows() != labels.len() {
            return Err(HopeError::InvalidDataset(format!(
                "{} exemplars but {} labels",
                e.rows(),
                labels.len()
            )));
        }
        if e.rows() == 0 || per_class == 0 {
            return Err(HopeError::InvalidDataset("empty exemplar set".into()));
        }
        if let Some(j) = e.iter_rows().position(|r| r[r.len() - 1] != 1.0) {
            return Err(HopeError::InvalidDataset(format!(
                "exemplar {j} has a bias component other than 1"
            )));
        }
        let mut counts = std::collections::BTreeMap::<u32, usize>::new();
        for &l in &labels {
            if l == 0 {
                return Err(HopeError::InvalidDataset("exemplar label 0".into()));
            }
            *counts.entry(l).or_default() += 1;
        }
        if let Some((l, c)) = counts.iter().find(|(_, &c)| c != per_class) {
            return Err(HopeError::InvalidDataset(format!(
                "class {l} has {c} exemplars, expected {per_class}"
            )));
        }
        Ok(ExemplarSet {
            e,
            labels,
            per_class,
        })
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Replaces the coordinates, keeping labels. Bias components are taken as given.
    pub(crate) fn with_coordinates(&self, data: &[f64]) -> ExemplarSet {
        let mut e = self.e.clone();
        e.as_mut_slice().copy_from_slice(data);
        ExemplarSet {
            e,
            labels: self.labels.clone(),
            per_class: self.per_class,
        }
    }
}

/// Where per-class clustering runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterSpace {
    /// Cluster raw inputs; exemplars are centroids.
    Input,
    /// Cluster embeddings; exemplars are the inputs embedded nearest each centroid.
    Embedding,
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Within-cluster sum of squares after each assignment step.
    pub history: Vec<f64>,
}

fn plus_plus_seed(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut best: Vec<f64> = points.iter_rows().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in best.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (b, r) in best.iter_mut().zip(points.iter_rows()) {
            *b = b.min(sq_dist(r, centroids.row(c)));
        }
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    points
        .iter_rows()
        .map(|r| {
            let mut best = (0, f64::INFINITY);
            for (c, cr) in centroids.iter_rows().enumerate() {
                let d = sq_dist(r, cr);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn lloyd(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let (n, dim) = (points.rows(), points.cols());
    let mut centroids = plus_plus_seed(points, k, rng);
    let mut history = Vec::new();
    let (mut assignment, mut dists) = assign(points, &centroids);
    for _ in 0..KMEANS_MAX_ITER {
        history.push(dists.iter().sum());

        // empty clusters take the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        for c in 0..k {
            if sizes[c] == 0 {
                let far = (0..n)
                    .filter(|&i| sizes[assignment[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    sizes[assignment[i]] -= 1;
                    assignment[i] = c;
                    dists[i] = 0.0;
                    sizes[c] = 1;
                }
            }
        }

        let mut next = Matrix::zeros(k, dim);
        for (i, &a) in assignment.iter().enumerate() {
            for (s, &v) in next.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let inv = 1.0 / sizes[c].max(1) as f64;
            for v in next.row_mut(c) {
                *v *= inv;
            }
            shift = shift.max(sq_dist(next.row(c), centroids.row(c)).sqrt());
        }
        centroids = next;
        let (a, d) = assign(points, &centroids);
        assignment = a;
        dists = d;
        if shift < KMEANS_TOL {
            break;
        }
    }
    let inertia = dists.iter().sum();
    history.push(inertia);
    KMeansResult {
        centroids,
        assignment,
        inertia,
        history,
    }
}

/// Lloyd's algorithm with k-means++ seeding, best of [`KMEANS_RESTARTS`] runs.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || points.rows() < k {
        return Err(HopeError::InvalidDataset(format!(
            "k-means with k = {k} on {} points",
            points.rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn class_seed(seed: u64, class: usize) -> u64 {
    seed ^ (class as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs k-means with `k = per_class` inside every class.
pub fn kmeans_exemplars(
    data: &LabeledDataset,
    per_class: usize,
    seed: u64,
    space: ClusterSpace,
    model: Option<&HighOrderModel>,
) -> Result<ExemplarSet> {
    let classes = data.class_indices();
    if let Some((k, idx)) = classes.iter().enumerate().find(|(_, v)| v.len() < per_class) {
        return Err(HopeError::ClassTooSmall {
            class: k as u32 + 1,
            size: idx.len(),
            required: per_class,
        });
    }
    let embedded = match (space, model) {
        (ClusterSpace::Input, _) => None,
        (ClusterSpace::Embedding, Some(m)) => Some(m.map_batch(data.x())?),
        (ClusterSpace::Embedding, None) => {
            return Err(HopeError::Config(
                "embedding-space k-means needs a trained model".into(),
            ))
        }
    };
    let hd = data.input_dim();
    let per_class_rows = par::map_range(classes.len(), |k| -> Result<Vec<Vec<f64>>> {
        let idx = &classes[k];
        let seed = class_seed(seed, k);
        match &embedded {
            None => {
                let pts = data.x().select_rows(idx);
                let km = kmeans(&pts, per_class, seed)?;
                Ok(km
                    .centroids
                    .iter_rows()
                    .map(|r| {
                        let mut v = r.to_vec();
                        v[hd - 1] = 1.0;
                        v
                    })
                    .collect())
            }
            Some(y) => {
                let pts = y.select_rows(idx);
                let km = kmeans(&pts, per_class, seed)?;
                Ok(km
                    .centroids
                    .iter_rows()
                    .map(|c| {
                        let nearest = (0..idx.len())
                            .min_by(|&a, &b| {
                                sq_dist(pts.row(a), c)
                                    .total_cmp(&sq_dist(pts.row(b), c))
                                    .then(a.cmp(&b))
                            })
                            .expect("non-empty class");
                        data.x().row(idx[nearest]).to_vec()
                    })
                    .collect())
            }
        }
    });
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, r) in per_class_rows.into_iter().enumerate() {
        let r = r?;
        labels.extend(std::iter::repeat_n(k as u32 + 1, r.len()));
        rows.extend(r);
    }
    ExemplarSet::new(Matrix::from_rows(&rows)?, labels, per_class)
}

/// Refines exemplars by joint optimization from `init`, returning the
/// exemplars together with the co-trained model and trace.
pub fn optimize_exemplars_full(
    model: &HighOrderModel,
    data: &LabeledDataset,
    init: &ExemplarSet,
    config: &TrainConfig,
) -> Result<(HighOrderModel, ExemplarSet, TrainTrace)> {
    train_joint(model, data, init, config)
}

/// Refines exemplars by joint optimization from `init`.
pub fn optimize_exemplars(
    model: &HighOrderModel,
    data: &LabeledDataset,
    init: &ExemplarSet,
    config: &TrainConfig,
) -> Result<ExemplarSet> {
    Ok(optimize_exemplars_full(model, data, init, config)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_dataset() -> LabeledDataset {
        // class 1: sub-clusters near (0,0) and (10,0); class 2 near (0,10) and (10,10)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centers = [(0.0, 0.0, 1), (10.0, 0.0, 1), (0.0, 10.0, 2), (10.0, 10.0, 2)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for &(cx, cy, l) in &centers {
            for _ in 0..15 {
                rows.push(vec![
                    cx + rng.gen_range(-0.5..0.5),
                    cy + rng.gen_range(-0.5..0.5),
                    1.0,
                ]);
                labels.push(l);
            }
        }
        LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), labels, 2).unwrap()
    }

    #[test]
    fn single_cluster_is_the_class_mean() {
        let data = blob_dataset();
        let ex = kmeans_exemplars(&data, 1, 0, ClusterSpace::Input, None).unwrap();
        for (k, idx) in data.class_indices().iter().enumerate() {
            for dim in 0..2 {
                let mean: f64 = idx.iter().map(|&i| data.x().get(i, dim)).sum::<f64>() / idx.len() as f64;
                assert!((ex.e().get(k, dim) - mean).abs() < 1e-12);
            }
            assert_eq!(ex.e().get(k, 2), 1.0);
        }
        assert_eq!(ex.labels(), &[1, 2]);
    }

    #[test]
    fn two_clusters_land_in_each_sub_cluster() {
        let data = blob_dataset();
        let ex = kmeans_exemplars(&data, 2, 7, ClusterSpace::Input, None).unwrap();
        assert_eq!(ex.len(), 4);
        for (k, (cx_a, cx_b, cy)) in [(0.0, 10.0, 0.0), (0.0, 10.0, 10.0)].iter().enumerate() {
            let mut xs: Vec<f64> = (0..2).map(|j| ex.e().get(2 * k + j, 0)).collect();
            xs.sort_by(f64::total_cmp);
            assert!((xs[0] - cx_a).abs() <= 0.5 && (xs[1] - cx_b).abs() <= 0.5);
            for j in 0..2 {
                assert!((ex.e().get(2 * k + j, 1) - cy).abs() <= 0.5);
            }
        }
    }

    #[test]
    fn lloyd_is_monotone_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = Matrix::from_vec(200, 3, (0..600).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let a = kmeans(&pts, 6, 42).unwrap();
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", a.history);
        }
        let b = kmeans(&pts, 6, 42).unwrap();
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn class_smaller_than_per_class_is_named() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]).unwrap();
        let data = LabeledDataset::new(x, vec![1, 1, 2], 2).unwrap();
        let err = kmeans_exemplars(&data, 2, 0, ClusterSpace::Input, None).unwrap_err();
        assert!(matches!(err, HopeError::ClassTooSmall { class: 2, size: 1, required: 2 }));
    }

    #[test]
    fn embedding_space_picks_training_inputs() {
        let data = blob_dataset();
        let model = HighOrderModel::init(crate::model::Shape::hope(1, 3, 2, 3), 1).unwrap();
        let ex = kmeans_exemplars(&data, 2, 5, ClusterSpace::Embedding, Some(&model)).unwrap();
        for j in 0..ex.len() {
            assert!(data.x().iter_rows().any(|r| r == ex.e().row(j)));
        }
        assert!(kmeans_exemplars(&data, 2, 5, ClusterSpace::Embedding, None).is_err());
    }

    #[test]
    fn exemplar_set_invariants() {
        let e = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]).unwrap();
        assert!(ExemplarSet::new(e.clone(), vec![1, 1, 2], 2).is_err());
        assert!(ExemplarSet::new(e.clone(), vec![1, 2, 3], 1).is_ok());
        let bad = Matrix::from_rows(&[[0.0, 0.5]]).unwrap();
        assert!(ExemplarSet::new(bad, vec![1], 1).is_err());
    }
}

mod common;

use common::knn_oracle;
use hope::evaluation::knn_classify;
use hope::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Integer grid coordinates make distance and vote ties common.
fn grid_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Matrix {
    let v = (0..n * dim).map(|_| rng.gen_range(-3..=3) as f64).collect();
    Matrix::from_vec(n, dim, v).unwrap()
}

#[test]
fn matches_naive_oracle_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let dim = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=30);
        let k = rng.gen_range(1..=n.min(7));
        let c = rng.gen_range(1..=4);
        let refs = grid_points(&mut rng, n, dim);
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=c)).collect();
        let m = rng.gen_range(1..=10);
        let queries = grid_points(&mut rng, m, dim);
        assert_eq!(
            knn_classify(&queries, &refs, &labels, k).unwrap(),
            knn_oracle(&queries, &refs, &labels, k)
        );
    }
}

mod common;

use common::*;
use hope::exemplar::ExemplarSet;
use hope::{LabeledDataset, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

#[test]
fn symmetric_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for variant in [Variant::Hope, Variant::Shope] {
        for _ in 0..10 {
            let width = rng.gen_range(2..=10);
            let n = rng.gen_range(4..=20);
            let c = rng.gen_range(2..=3);
            let data = LabeledDataset::new(random_inputs(&mut rng, n, width), cycling_labels(n, c), c).unwrap();
            let model = random_model(&mut rng, variant, width);
            let err = symmetric_gradient_error(&model, &data);
            assert!(err < TOL, "{variant:?} {:?}: relative error {err:e}", model.shape());
        }
    }
}

#[test]
fn asymmetric_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for variant in [Variant::Hope, Variant::Shope] {
        for _ in 0..10 {
            let width = rng.gen_range(2..=10);
            let n = rng.gen_range(2..=20);
            let c = rng.gen_range(1..=3).min(n);
            let s = rng.gen_range(1..=2);
            let data = LabeledDataset::new(random_inputs(&mut rng, n, width), cycling_labels(n, c), c).unwrap();
            let labels: Vec<u32> = (1..=c as u32).flat_map(|l| std::iter::repeat_n(l, s)).collect();
            let ex = ExemplarSet::new(random_inputs(&mut rng, c * s, width), labels, s).unwrap();
            let model = random_model(&mut rng, variant, width);
            let (ep, ee, bias_zero) = asymmetric_gradient_errors(&model, &data, &ex);
            assert!(ep < TOL, "parameter gradient error {ep:e}");
            assert!(ee < TOL, "exemplar gradient error {ee:e}");
            assert!(bias_zero);
        }
    }
}

//! One test per acceptance criterion. Each writes a `criterion N: PASS|FAIL`
//! line straight to stderr so the verdicts show up even when libtest
//! captures output.
//!
//! The MNIST trend check runs only when `HOPE_MNIST_DIR` names a directory
//! holding the four IDX files; otherwise it reports SKIP.

mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use hope::data_io::{make_synthetic, split, SyntheticKind, SyntheticParams};
use hope::evaluation::{evaluate_model, knn_classify};
use hope::exemplar::{kmeans_exemplars, ClusterSpace, ExemplarSet};
use hope::objective::{asymmetric_embedding_objective, symmetric_embedding_objective};
use hope::optimizer::{fit_joint, train_embedding, TrainConfig};
use hope::probability::{cross_sq_dist, pairwise_sq_dist, q_asymmetric, q_symmetric};
use hope::{HighOrderModel, LabeledDataset, Matrix, Shape, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// writes to the stderr handle directly: print macros are captured by libtest
#[allow(clippy::explicit_write)]
fn verdict(n: u32, pass: bool, detail: String) {
    let word = if pass { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "criterion {n}: {word} {detail}").unwrap();
    assert!(pass, "criterion {n}: {detail}");
}

#[test]
fn c1_factorized_map_equals_explicit_expansion() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let width = rng.gen_range(3..=6);
        let order = rng.gen_range(1..=3);
        let f = rng.gen_range(1..=4);
        let h = rng.gen_range(1..=3);
        let model = HighOrderModel::init(Shape::hope(order, width, h, f), rng.gen()).unwrap();
        let x = random_inputs(&mut rng, 4, width);
        for row in x.iter_rows() {
            let fast = model.map_hope(row).unwrap();
            let slow = model.map_explicit_oracle(row).unwrap();
            worst = worst.max(rel_err(&fast, &slow));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(1, worst <= 1e-10 && secs < 10.0, format!("max relative error {worst:.2e}, {secs:.2}s"));
}

#[test]
fn c2_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    let mut bias_pinned = true;
    for case in 0..50 {
        let variant = if case % 2 == 0 { Variant::Hope } else { Variant::Shope };
        let width = rng.gen_range(2..=10);
        let n = rng.gen_range(4..=20);
        let c = rng.gen_range(2..=3);
        let data = LabeledDataset::new(random_inputs(&mut rng, n, width), cycling_labels(n, c), c).unwrap();
        let model = random_model(&mut rng, variant, width);
        if case % 4 < 2 {
            worst = worst.max(symmetric_gradient_error(&model, &data));
        } else {
            let s = rng.gen_range(1..=2);
            let labels: Vec<u32> = (1..=c as u32).flat_map(|l| std::iter::repeat_n(l, s)).collect();
            let ex = ExemplarSet::new(random_inputs(&mut rng, c * s, width), labels, s).unwrap();
            let (ep, ee, bias_zero) = asymmetric_gradient_errors(&model, &data, &ex);
            worst = worst.max(ep).max(ee);
            bias_pinned &= bias_zero;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        worst <= 1e-5 && bias_pinned && secs < 60.0,
        format!("max relative error {worst:.2e}, exemplar bias gradient zero: {bias_pinned}, {secs:.2}s"),
    );
}

#[test]
fn c3_probabilities_normalize_and_kl_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut sym_dev, mut row_dev, mut min_kl): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for _ in 0..200 {
        let n = rng.gen_range(2..=40);
        let h = rng.gen_range(1..=4);
        let scale = 10f64.powi(rng.gen_range(-2..=2));
        let y = Matrix::from_vec(n, h, (0..n * h).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap();
        let q = q_symmetric(&pairwise_sq_dist(&y)).unwrap();
        sym_dev = sym_dev.max((q.as_slice().iter().sum::<f64>() - 1.0).abs());

        let z = rng.gen_range(1..=8);
        let v = Matrix::from_vec(z, h, (0..z * h).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap();
        let qa = q_asymmetric(&cross_sq_dist(&y, &v)).unwrap();
        for r in qa.iter_rows() {
            row_dev = row_dev.max((r.iter().sum::<f64>() - 1.0).abs());
        }

        let c = rng.gen_range(1..=z.min(3));
        let labels: Vec<u32> = (0..n).map(|i| (i % c) as u32 + 1).collect();
        let ex_labels: Vec<u32> = (0..z).map(|j| (j % c) as u32 + 1).collect();
        // the symmetric objective needs some same-class pair
        if n >= 3 && n > c {
            min_kl = min_kl.min(symmetric_embedding_objective(&y, &labels).unwrap().0);
        }
        min_kl = min_kl.min(asymmetric_embedding_objective(&y, &labels, &v, &ex_labels).unwrap().0);
    }
    verdict(
        3,
        sym_dev <= 1e-12 && row_dev <= 1e-12 && min_kl >= -1e-12,
        format!("global sum deviation {sym_dev:.2e}, row sum deviation {row_dev:.2e}, min KL {min_kl:.2e}"),
    );
}

#[test]
fn c4_knn_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut mismatches = 0;
    for _ in 0..100 {
        let dim = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=60);
        let m = rng.gen_range(1..=20);
        let k = rng.gen_range(1..=n.min(9));
        let c = rng.gen_range(1..=5);
        // coarse grid so distance and vote ties occur
        let mut grid = |rows: usize| {
            Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.gen_range(-4..=4) as f64 * 0.5).collect()).unwrap()
        };
        let refs = grid(n);
        let queries = grid(m);
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=c)).collect();
        if knn_classify(&queries, &refs, &labels, k).unwrap() != knn_oracle(&queries, &refs, &labels, k) {
            mismatches += 1;
        }
    }
    verdict(4, mismatches == 0, format!("{mismatches} of 100 instances differ"));
}

fn run_train(dir: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_hope"))
        .args(["train", "--synthetic", "gaussians", "--seed", "9", "--variant", "shope", "--order", "2"])
        .args(["--factors", "10", "--units", "10", "--max-epochs", "5", "--batch-size", "90"])
        .arg("--out-dir")
        .arg(dir)
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::read(dir.join("model.json")).unwrap()
}

#[test]
fn c5_training_is_bit_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let same = run_train(a.path()) == run_train(b.path());
    verdict(5, same, format!("model files identical: {same}"));
}

#[test]
fn c6_order_two_separates_circles_and_order_one_does_not() {
    let start = Instant::now();
    let params = SyntheticParams {
        n: 400,
        ..SyntheticParams::default()
    };
    let data = make_synthetic(SyntheticKind::Circles, &params, 6).unwrap();
    let config = TrainConfig {
        seed: 6,
        ..TrainConfig::default()
    };
    let validation_error = |order: u32| {
        let model = HighOrderModel::init(Shape::hope(order, data.input_dim(), 2, 300), 6).unwrap();
        train_embedding(&model, &data, &config).unwrap().1.best_validation_error.unwrap()
    };
    let e2 = validation_error(2);
    let e1 = validation_error(1);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        6,
        e2 < 0.05 && e1 > 0.30 && secs < 120.0,
        format!("validation 5NN error O=2 {:.1}%, O=1 {:.1}%, {secs:.1}s", 100.0 * e2, 100.0 * e1),
    );
}

#[test]
fn c7_six_exemplars_match_full_references_and_are_faster() {
    let data = make_synthetic(SyntheticKind::Gaussians, &SyntheticParams::default(), 7).unwrap();
    let (train, test) = split(&data, 0.1, 7).unwrap();
    let config = TrainConfig {
        batch_size: 270,
        seed: 7,
        ..TrainConfig::default()
    };
    let shape = Shape::shope(2, train.input_dim(), 2, 300, 400);
    let model = HighOrderModel::init(shape, 7).unwrap();
    let (model, _) = train_embedding(&model, &train, &config).unwrap();
    let init = kmeans_exemplars(&train, 2, 7, ClusterSpace::Input, None).unwrap();
    let (fit, rest) = split(&train, config.validation_fraction, config.seed).unwrap();
    let (model, exemplars, _) = fit_joint(&model, &init, &fit, &rest, &config).unwrap();

    let full = evaluate_model(&model, train.x(), train.labels(), &test, 5).unwrap();
    let compact = evaluate_model(&model, exemplars.e(), exemplars.labels(), &test, 5).unwrap();
    let gap = compact.num_errors as i64 - full.num_errors as i64;
    let faster = compact.mean_query_time < full.mean_query_time;
    verdict(
        7,
        gap <= 2 && faster && full.reference_set_size == 270 && compact.reference_set_size == 6,
        format!(
            "errors {} with {} exemplars vs {} with {} references, per-query {:.2e}s vs {:.2e}s",
            compact.num_errors,
            compact.reference_set_size,
            full.num_errors,
            full.reference_set_size,
            compact.mean_query_time,
            full.mean_query_time
        ),
    );
}

fn mnist_test_error(dir: &Path, out: &Path, model: &[&str], epochs: &str) -> f64 {
    let files = [
        ("--train-images", "train-images-idx3-ubyte"),
        ("--train-labels", "train-labels-idx1-ubyte"),
        ("--test-images", "t10k-images-idx3-ubyte"),
        ("--test-labels", "t10k-labels-idx1-ubyte"),
    ];
    let run = |cmd: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_hope"));
        c.args(cmd).args(model).arg("--out-dir").arg(out);
        for (flag, name) in files {
            c.arg(flag).arg(dir.join(name));
        }
        assert!(c.status().unwrap().success(), "{cmd:?} {model:?}");
    };
    run(&["train", "--max-epochs", epochs, "--seed", "8"]);
    run(&["evaluate", "--refs", "train"]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    doc["train_refs"]["error_rate"].as_f64().unwrap()
}

#[test]
fn c8_mnist_error_ordering() {
    let Some(dir) = std::env::var_os("HOPE_MNIST_DIR") else {
        #[allow(clippy::explicit_write)]
        writeln!(std::io::stderr(), "criterion 8: SKIP set HOPE_MNIST_DIR to run").unwrap();
        return;
    };
    let dir = Path::new(&dir);
    let epochs = std::env::var("HOPE_MNIST_EPOCHS").unwrap_or_else(|_| "10".into());
    let tmp = tempfile::tempdir().unwrap();
    let shope = mnist_test_error(
        dir,
        &tmp.path().join("shope"),
        &["--variant", "shope", "--order", "2", "--factors", "100", "--units", "100"],
        &epochs,
    );
    let hope3 = mnist_test_error(dir, &tmp.path().join("hope3"), &["--variant", "hope", "--order", "3", "--factors", "100"], &epochs);
    let hope1 = mnist_test_error(dir, &tmp.path().join("hope1"), &["--variant", "hope", "--order", "1", "--factors", "100"], &epochs);
    verdict(
        8,
        shope < hope3 && hope3 < hope1,
        format!(
            "test 5NN error S-HOPE {:.2}%, HOPE O=3 {:.2}%, O=1 {:.2}% ({epochs} epochs)",
            100.0 * shope,
            100.0 * hope3,
            100.0 * hope1
        ),
    );
}

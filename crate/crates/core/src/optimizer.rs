//! Minibatch conjugate-gradient training.
//!
//! Each epoch shuffles every class (seeded) and deals its members round-robin
//! into `⌈n / batch_size⌉` batches, so each batch holds a near-equal share of
//! every class. Each batch is its own point set for the objective (its own
//! normalizer) and receives `cg_iters_per_batch` CG steps from a fresh
//! conjugate state. After each epoch the model is scored by 5NN error on the
//! validation split; the best-scoring epoch is returned.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cg::{CgState, CgVariant, LineSearch, StepInfo};
use crate::data_io::split;
use crate::dataset::LabeledDataset;
use crate::error::{HopeError, Result};
use crate::evaluation::{evaluate_embedded, DEFAULT_K};
use crate::exemplar::ExemplarSet;
use crate::matrix::norm;
use crate::model::HighOrderModel;
use crate::objective::{eval_asymmetric, eval_symmetric};
use crate::probability::same_class_pairs;

/// Settings for one training run. Every field can be set from a config
/// document and overridden on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub cg_iters_per_batch: usize,
    pub max_epochs: usize,
    pub cg_variant: CgVariant,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub max_line_search_evals: usize,
    /// Epochs of alternating (parameters, then exemplars) updates before
    /// joint updates begin.
    pub warmup_epochs_alternating: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let ls = LineSearch::default();
        TrainConfig {
            batch_size: 1000,
            cg_iters_per_batch: 3,
            max_epochs: 50,
            cg_variant: CgVariant::PolakRibierePlus,
            initial_step: ls.initial_step,
            backtrack: ls.backtrack,
            armijo: ls.armijo,
            max_line_search_evals: ls.max_evals,
            warmup_epochs_alternating: 5,
            seed: 0,
            validation_fraction: 0.1,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn line_search(&self) -> LineSearch {
        LineSearch {
            initial_step: self.initial_step,
            backtrack: self.backtrack,
            armijo: self.armijo,
            max_evals: self.max_line_search_evals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HopeError::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("line search needs initial_step > 0 and backtrack in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) || self.max_line_search_evals == 0 {
            return bad("line search needs armijo in (0, 1) and max_line_search_evals > 0");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        Ok(())
    }
}

/// Which variables a CG phase updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Parameters,
    Exemplars,
    Joint,
}

/// Losses across one CG phase on one batch: the starting loss, then the loss
/// after each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLosses {
    pub batch: usize,
    pub phase: Phase,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_batch_loss: f64,
    pub validation_error: f64,
    /// Seconds since training started.
    pub wall_time: f64,
    pub phases: Vec<PhaseLosses>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_error: Option<f64>,
}

/// Class-balanced partition of `classes` (already shuffled) into batches.
pub fn balanced_batches(classes: &[Vec<usize>], batch_size: usize) -> Vec<Vec<usize>> {
    let n: usize = classes.iter().map(Vec::len).sum();
    let num_batches = n.div_ceil(batch_size).max(1);
    let mut batches = vec![Vec::new(); num_batches];
    let mut cursor = 0;
    for members in classes {
        for &i in members {
            batches[cursor % num_batches].push(i);
            cursor += 1;
        }
    }
    batches
}

fn shuffled_classes(data: &LabeledDataset, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut classes = data.class_indices();
    for c in &mut classes {
        c.shuffle(rng);
    }
    classes
}

fn run_phase<F>(
    params: &mut [f64],
    objective: &mut F,
    config: &TrainConfig,
    epoch: usize,
    batch: usize,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut state = CgState::new(config.cg_variant, config.line_search());
    let mut losses = Vec::with_capacity(config.cg_iters_per_batch + 1);
    for iteration in 0..config.cg_iters_per_batch {
        let info: StepInfo = state.step(params, objective).ok_or(HopeError::NonFinite {
            epoch,
            batch,
            iteration,
            param_norm: norm(params),
        })?;
        if losses.is_empty() {
            losses.push(info.loss_before);
        }
        losses.push(info.loss_after);
    }
    Ok(losses)
}

fn validation_error(
    model: &HighOrderModel,
    refs: &LabeledDataset,
    queries: &LabeledDataset,
) -> Result<f64> {
    let ry = model.map_batch(refs.x())?;
    let (qy, ql) = if queries.is_empty() {
        (ry.clone(), refs.labels())
    } else {
        (model.map_batch(queries.x())?, queries.labels())
    };
    let k = DEFAULT_K.min(refs.len());
    Ok(evaluate_embedded(&qy, ql, &ry, refs.labels(), k)?.error_rate)
}

fn exemplar_validation_error(
    model: &HighOrderModel,
    exemplars: &ExemplarSet,
    train: &LabeledDataset,
    queries: &LabeledDataset,
) -> Result<f64> {
    let queries = if queries.is_empty() { train } else { queries };
    let ey = model.map_batch(exemplars.e())?;
    let qy = model.map_batch(queries.x())?;
    let k = DEFAULT_K.min(exemplars.len());
    Ok(evaluate_embedded(&qy, queries.labels(), &ey, exemplars.labels(), k)?.error_rate)
}

/// Tracks the best epoch and the patience budget.
struct Selection<T> {
    best: T,
    best_error: f64,
    stale: usize,
}

impl<T: Clone> Selection<T> {
    fn new(initial: T) -> Self {
        Selection {
            best: initial,
            best_error: f64::INFINITY,
            stale: 0,
        }
    }

    /// Returns `true` when training should stop.
    fn offer(&mut self, candidate: &T, error: f64, patience: usize) -> bool {
        if error < self.best_error {
            self.best = candidate.clone();
            self.best_error = error;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= patience
    }
}

fn finish_trace(trace: &mut TrainTrace) {
    let best = trace
        .epochs
        .iter()
        .min_by(|a, b| a.validation_error.total_cmp(&b.validation_error).then(a.epoch.cmp(&b.epoch)));
    trace.best_epoch = best.map(|e| e.epoch);
    trace.best_validation_error = best.map(|e| e.validation_error);
}

/// Trains on `train`, selecting by 5NN error on `validation` (or on `train`
/// itself when `validation` is empty).
pub fn fit_embedding(
    model: &HighOrderModel,
    train: &LabeledDataset,
    validation: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(HighOrderModel, TrainTrace)> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = model.clone();
    let mut params = model.params().to_vec();
    let mut trace = TrainTrace::default();
    let mut selection = Selection::new(model.clone());

    for epoch in 1..=config.max_epochs {
        let batches = balanced_batches(&shuffled_classes(train, &mut rng), config.batch_size);
        let mut phases = Vec::new();
        for (b, idx) in batches.iter().enumerate() {
            let batch = train.subset(idx);
            if batch.len() < 2 || same_class_pairs(batch.labels()) == 0 {
                continue;
            }
            let mut scratch = current.clone();
            let mut objective = |p: &[f64], g: &mut [f64]| -> f64 {
                scratch.set_params(p);
                match eval_symmetric(&scratch, &batch) {
                    Ok(e) => {
                        g.copy_from_slice(&e.grad);
                        e.loss
                    }
                    Err(_) => f64::NAN,
                }
            };
            let losses = run_phase(&mut params, &mut objective, config, epoch, b)?;
            phases.push(PhaseLosses {
                batch: b,
                phase: Phase::Parameters,
                losses,
            });
        }
        current.set_params(&params);
        if !current.is_finite() {
            return Err(HopeError::NonFinite {
                epoch,
                batch: batches.len(),
                iteration: config.cg_iters_per_batch,
                param_norm: norm(&params),
            });
        }
        let err = validation_error(&current, train, validation)?;
        trace.epochs.push(EpochRecord {
            epoch,
            mean_batch_loss: mean_final_loss(&phases),
            validation_error: err,
            wall_time: start.elapsed().as_secs_f64(),
            phases,
        });
        log::info!("epoch {epoch}: validation 5NN error {:.4}", err);
        if selection.offer(&current, err, config.patience) {
            break;
        }
    }
    finish_trace(&mut trace);
    Ok((selection.best, trace))
}

fn mean_final_loss(phases: &[PhaseLosses]) -> f64 {
    let finals: Vec<f64> = phases.iter().filter_map(|p| p.losses.last().copied()).collect();
    if finals.is_empty() {
        f64::NAN
    } else {
        finals.iter().sum::<f64>() / finals.len() as f64
    }
}

/// Splits off a stratified validation set and trains on the rest.
pub fn train_embedding(
    model: &HighOrderModel,
    data: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(HighOrderModel, TrainTrace)> {
    config.validate()?;
    let (train, validation) = split(data, config.validation_fraction, config.seed)?;
    fit_embedding(model, &train, &validation, config)
}

/// Jointly refines model parameters and exemplars under the point-to-exemplar
/// objective. The first `warmup_epochs_alternating` epochs alternate a
/// parameter-only phase and an exemplar-only phase on every batch; later
/// epochs update both at once. Exemplar bias components never move.
pub fn fit_joint(
    model: &HighOrderModel,
    exemplars: &ExemplarSet,
    train: &LabeledDataset,
    validation: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(HighOrderModel, ExemplarSet, TrainTrace)> {
    config.validate()?;
    if exemplars.e().cols() != model.input_dim() {
        return Err(HopeError::DimensionMismatch {
            context: "exemplar width",
            expected: model.input_dim(),
            actual: exemplars.e().cols(),
        });
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let np = model.num_params();
    let hd = model.input_dim();
    // [θ | E]
    let mut joint: Vec<f64> = model
        .params()
        .iter()
        .chain(exemplars.e().as_slice())
        .copied()
        .collect();
    let mut current = model.clone();
    let mut current_ex = exemplars.clone();
    let mut trace = TrainTrace::default();
    let mut selection = Selection::new((model.clone(), exemplars.clone()));

    for epoch in 1..=config.max_epochs {
        let batches = balanced_batches(&shuffled_classes(train, &mut rng), config.batch_size);
        let phase_plan: &[Phase] = if epoch <= config.warmup_epochs_alternating {
            &[Phase::Parameters, Phase::Exemplars]
        } else {
            &[Phase::Joint]
        };
        let mut phases = Vec::new();
        for (b, idx) in batches.iter().enumerate() {
            let batch = train.subset(idx);
            for &phase in phase_plan {
                let (lo, hi) = match phase {
                    Phase::Parameters => (0, np),
                    Phase::Exemplars => (np, joint.len()),
                    Phase::Joint => (0, joint.len()),
                };
                let fixed = joint.clone();
                let mut scratch = current.clone();
                let template = current_ex.clone();
                let mut objective = |p: &[f64], g: &mut [f64]| -> f64 {
                    let mut full = fixed.clone();
                    full[lo..hi].copy_from_slice(p);
                    scratch.set_params(&full[..np]);
                    let ex = template.with_coordinates(&full[np..]);
                    match eval_asymmetric(&scratch, &batch, &ex) {
                        Ok(e) => {
                            let grad_full: Vec<f64> = e
                                .params
                                .iter()
                                .chain(e.exemplars.as_slice())
                                .copied()
                                .collect();
                            g.copy_from_slice(&grad_full[lo..hi]);
                            e.loss
                        }
                        Err(_) => f64::NAN,
                    }
                };
                let mut slice = joint[lo..hi].to_vec();
                let losses = run_phase(&mut slice, &mut objective, config, epoch, b)?;
                joint[lo..hi].copy_from_slice(&slice);
                phases.push(PhaseLosses {
                    batch: b,
                    phase,
                    losses,
                });
            }
        }
        current.set_params(&joint[..np]);
        current_ex = current_ex.with_coordinates(&joint[np..]);
        debug_assert!(current_ex.e().iter_rows().all(|r| r[hd - 1] == 1.0));
        if !current.is_finite() || joint.iter().any(|v| !v.is_finite()) {
            return Err(HopeError::NonFinite {
                epoch,
                batch: batches.len(),
                iteration: config.cg_iters_per_batch,
                param_norm: norm(&joint),
            });
        }
        let err = exemplar_validation_error(&current, &current_ex, train, validation)?;
        trace.epochs.push(EpochRecord {
            epoch,
            mean_batch_loss: mean_final_loss(&phases),
            validation_error: err,
            wall_time: start.elapsed().as_secs_f64(),
            phases,
        });
        log::info!("joint epoch {epoch}: exemplar 5NN error {:.4}", err);
        if selection.offer(&(current.clone(), current_ex.clone()), err, config.patience) {
            break;
        }
    }
    finish_trace(&mut trace);
    let (m, e) = selection.best;
    Ok((m, e, trace))
}

/// Splits off a stratified validation set and runs [`fit_joint`].
pub fn train_joint(
    model: &HighOrderModel,
    data: &LabeledDataset,
    exemplars: &ExemplarSet,
    config: &TrainConfig,
) -> Result<(HighOrderModel, ExemplarSet, TrainTrace)> {
    config.validate()?;
    let (train, validation) = split(data, config.validation_fraction, config.seed)?;
    fit_joint(model, exemplars, &train, &validation, config)
}

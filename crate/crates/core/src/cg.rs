//! Nonlinear conjugate gradient with a backtracking Armijo line search.

use serde::{Deserialize, Serialize};

use crate::matrix::{dot, norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgVariant {
    PolakRibierePlus,
    FletcherReeves,
}

impl std::str::FromStr for CgVariant {
    type Err = crate::error::HopeError;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "polakribiereplus" | "prplus" | "pr+" | "pr" => Ok(CgVariant::PolakRibierePlus),
            "fletcherreeves" | "fr" => Ok(CgVariant::FletcherReeves),
            other => Err(crate::error::HopeError::Config(format!(
                "unknown CG variant `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearch {
    pub initial_step: f64,
    pub backtrack: f64,
    /// Sufficient-decrease constant `c1`.
    pub armijo: f64,
    pub max_evals: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            max_evals: 20,
        }
    }
}

/// Result of one [`CgState::step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub loss_before: f64,
    pub loss_after: f64,
    pub step: f64,
    pub evals: usize,
    /// The search direction was reset to steepest descent.
    pub restarted: bool,
    /// No acceptable step was found; parameters are unchanged.
    pub line_search_failed: bool,
}

/// Conjugate-gradient memory carried between steps.
#[derive(Clone, Debug)]
pub struct CgState {
    variant: CgVariant,
    search: LineSearch,
    prev_grad: Option<Vec<f64>>,
    prev_dir: Option<Vec<f64>>,
    prev_slope: f64,
    prev_step: f64,
    since_restart: usize,
    // loss and gradient at the current point, reused across steps
    cached: Option<(f64, Vec<f64>)>,
}

impl CgState {
    pub fn new(variant: CgVariant, search: LineSearch) -> Self {
        CgState {
            variant,
            search,
            prev_grad: None,
            prev_dir: None,
            prev_slope: 0.0,
            prev_step: 0.0,
            since_restart: 0,
            cached: None,
        }
    }

    /// Forgets the conjugate direction and any cached evaluation.
    pub fn reset(&mut self) {
        self.prev_grad = None;
        self.prev_dir = None;
        self.since_restart = 0;
        self.cached = None;
    }

    /// Overrides the remembered direction and gradient (used to exercise the
    /// restart safeguard).
    pub fn set_history(&mut self, prev_grad: Vec<f64>, prev_dir: Vec<f64>) {
        self.prev_slope = dot(&prev_grad, &prev_dir);
        self.prev_step = self.search.initial_step;
        self.prev_grad = Some(prev_grad);
        self.prev_dir = Some(prev_dir);
    }

    /// Performs one CG iteration on `params` in place.
    ///
    /// `objective(x, grad)` must return the loss at `x` and write its gradient
    /// into `grad`. Non-finite trial losses are treated as insufficient
    /// decrease. Returns `None` when the loss at the current point is not
    /// finite.
    pub fn step<F>(&mut self, params: &mut [f64], objective: &mut F) -> Option<StepInfo>
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        let n = params.len();
        let (f0, g) = match self.cached.take() {
            Some(c) if c.1.len() == n => c,
            _ => {
                let mut g = vec![0.0; n];
                let f = objective(params, &mut g);
                (f, g)
            }
        };
        let mut evals = 0;
        if !f0.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let gg = dot(&g, &g);
        if gg == 0.0 {
            self.cached = Some((f0, g));
            return Some(StepInfo {
                loss_before: f0,
                loss_after: f0,
                step: 0.0,
                evals,
                restarted: false,
                line_search_failed: false,
            });
        }

        let mut restarted = false;
        let mut dir: Vec<f64> = match (&self.prev_grad, &self.prev_dir) {
            (Some(pg), Some(pd)) if self.since_restart < n => {
                let pgg = dot(pg, pg);
                let beta = match self.variant {
                    CgVariant::PolakRibierePlus => {
                        let y: f64 = g.iter().zip(pg).map(|(a, b)| a * (a - b)).sum();
                        (y / pgg).max(0.0)
                    }
                    CgVariant::FletcherReeves => gg / pgg,
                };
                g.iter().zip(pd).map(|(gi, di)| -gi + beta * di).collect()
            }
            (Some(_), Some(_)) => {
                restarted = true;
                g.iter().map(|v| -v).collect()
            }
            _ => g.iter().map(|v| -v).collect(),
        };
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            restarted = true;
            dir = g.iter().map(|v| -v).collect();
            slope = -gg;
        }
        if restarted || self.prev_dir.is_none() {
            self.since_restart = 0;
        }

        // Initial trial: carry over the previous step scaled by the slope
        // ratio; first step has length `initial_step`.
        let mut alpha = if self.prev_dir.is_some() && !restarted && self.prev_step > 0.0 {
            self.prev_step * self.prev_slope / slope
        } else {
            self.search.initial_step / norm(&dir).max(1.0)
        };
        if !(alpha.is_finite() && alpha > 0.0) {
            alpha = self.search.initial_step / norm(&dir).max(1.0);
        }

        let c1 = self.search.armijo;
        let mut trial = vec![0.0; n];
        let mut trial_grad = vec![0.0; n];
        let mut eval_at = |a: f64, trial: &mut Vec<f64>, tg: &mut Vec<f64>| {
            for ((t, &p), &d) in trial.iter_mut().zip(params.iter()).zip(&dir) {
                *t = p + a * d;
            }
            objective(trial, tg)
        };

        let mut accepted: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
        while evals < self.search.max_evals {
            let fa = eval_at(alpha, &mut trial, &mut trial_grad);
            evals += 1;
            let armijo_ok = fa.is_finite() && fa <= f0 + c1 * alpha * slope;
            // minimizer of the quadratic through f(0), f'(0) and f(alpha)
            let curvature = fa - f0 - slope * alpha;
            let alpha_q = if fa.is_finite() && curvature > 0.0 {
                -slope * alpha * alpha / (2.0 * curvature)
            } else {
                f64::NAN
            };
            if armijo_ok {
                accepted = Some((alpha, fa, trial.clone(), trial_grad.clone()));
                // one interpolation refinement when the model points elsewhere
                if alpha_q.is_finite()
                    && alpha_q > 0.0
                    && (alpha_q - alpha).abs() > 1e-3 * alpha
                    && evals < self.search.max_evals
                {
                    let refined = alpha_q.min(10.0 * alpha);
                    let fr = eval_at(refined, &mut trial, &mut trial_grad);
                    evals += 1;
                    if fr.is_finite() && fr <= f0 + c1 * refined * slope && fr < fa {
                        accepted = Some((refined, fr, trial.clone(), trial_grad.clone()));
                    }
                }
                break;
            }
            let shrink = if alpha_q.is_finite() && alpha_q > 0.0 {
                alpha_q.clamp(0.1 * alpha, self.search.backtrack * alpha)
            } else {
                self.search.backtrack * alpha
            };
            alpha = shrink;
        }

        match accepted {
            Some((a, fa, x, ga)) if ga.iter().all(|v| v.is_finite()) => {
                params.copy_from_slice(&x);
                self.prev_grad = Some(g);
                self.prev_dir = Some(dir);
                self.prev_slope = slope;
                self.prev_step = a;
                self.since_restart += 1;
                self.cached = Some((fa, ga));
                Some(StepInfo {
                    loss_before: f0,
                    loss_after: fa,
                    step: a,
                    evals,
                    restarted,
                    line_search_failed: false,
                })
            }
            _ => {
                self.reset();
                self.cached = Some((f0, g));
                Some(StepInfo {
                    loss_before: f0,
                    loss_after: f0,
                    step: 0.0,
                    evals,
                    restarted: true,
                    line_search_failed: true,
                })
            }
        }
    }
}

/// Runs up to `iters` CG steps, returning the step records.
pub fn minimize<F>(
    params: &mut [f64],
    objective: &mut F,
    variant: CgVariant,
    search: LineSearch,
    iters: usize,
) -> Option<Vec<StepInfo>>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut state = CgState::new(variant, search);
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        out.push(state.step(params, objective)?);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_matrix() -> Vec<Vec<f64>> {
        // B^T B + I with a fixed B
        let b = [
            [1.0, 2.0, 0.0, -1.0, 0.5],
            [0.0, 1.0, 3.0, 0.0, 1.0],
            [2.0, 0.0, 1.0, 1.0, 0.0],
            [0.5, -1.0, 0.0, 2.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, 3.0],
        ];
        let mut a = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                a[i][j] = (0..5).map(|k| b[k][i] * b[k][j]).sum::<f64>();
            }
            a[i][i] += 1.0;
        }
        a
    }

    #[test]
    fn quadratic_bowl_converges_within_five_dim_iterations() {
        let a = spd_matrix();
        let mut f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..5 {
                let ax: f64 = (0..5).map(|j| a[i][j] * x[j]).sum();
                g[i] = 2.0 * ax;
                v += x[i] * ax;
            }
            v
        };
        let mut x = vec![1.0, -2.0, 3.0, 0.5, -1.0];
        let mut state = CgState::new(CgVariant::PolakRibierePlus, LineSearch::default());
        let mut g = vec![0.0; 5];
        let mut iters = 0;
        loop {
            f(&x, &mut g);
            if norm(&g) < 1e-8 {
                break;
            }
            assert!(iters < 25, "no convergence, |g| = {}", norm(&g));
            state.step(&mut x, &mut f).unwrap();
            iters += 1;
        }
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let mut f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let mut x = vec![-1.2, 1.0];
        let mut state = CgState::new(CgVariant::PolakRibierePlus, LineSearch::default());
        let mut last = f64::INFINITY;
        for _ in 0..10_000 {
            let info = state.step(&mut x, &mut f).unwrap();
            assert!(info.loss_after <= info.loss_before);
            last = info.loss_after;
            if last < 1e-6 {
                break;
            }
        }
        assert!(last < 1e-6, "f = {last}");
    }

    #[test]
    fn non_descent_direction_triggers_restart() {
        let mut f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            g[1] = 8.0 * x[1];
            x[0] * x[0] + 4.0 * x[1] * x[1]
        };
        let mut x = vec![1.0, 1.0];
        let mut state = CgState::new(CgVariant::FletcherReeves, LineSearch::default());
        // previous direction pointing uphill along the current gradient
        state.set_history(vec![0.1, 0.1], vec![1e6, 1e6]);
        let info = state.step(&mut x, &mut f).unwrap();
        assert!(info.restarted);
        assert!(info.loss_after < info.loss_before);
    }

    #[test]
    fn failed_line_search_leaves_params() {
        // gradient that lies: claims descent along +x while f increases
        let mut f = |x: &[f64], g: &mut [f64]| {
            g[0] = -1.0;
            x[0]
        };
        let mut x = vec![0.0];
        let mut state = CgState::new(CgVariant::PolakRibierePlus, LineSearch::default());
        let info = state.step(&mut x, &mut f).unwrap();
        assert!(info.line_search_failed);
        assert_eq!(x, vec![0.0]);
        assert_eq!(info.evals, 20);
    }

    #[test]
    fn non_finite_start_is_reported() {
        let mut f = |_: &[f64], _: &mut [f64]| f64::NAN;
        let mut x = vec![0.0];
        let mut state = CgState::new(CgVariant::PolakRibierePlus, LineSearch::default());
        assert!(state.step(&mut x, &mut f).is_none());
    }
}

//! Derivative-free baselines under the same evaluation budget as the solver:
//! random search and multi-start gradient descent with forward differences.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{halton_skip, sample_halton, sample_uniform, Domain, PointSet};
use crate::rng;

/// Point generator for random search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSampler {
    #[default]
    Halton,
    Uniform,
}

/// Outcome of a baseline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    /// Running minimum after each evaluation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    /// Gradient step size used (gradient descent only).
    pub step_size: Option<f64>,
    /// Finite-difference offset (gradient descent only).
    pub fd_step: Option<f64>,
}

/// Counts evaluations and keeps the running minimum.
struct Tracker<F> {
    f: F,
    budget: usize,
    best_x: Vec<f64>,
    best_f: f64,
    trace: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Tracker<F> {
    fn new(f: F, budget: usize) -> Self {
        Tracker { f, budget, best_x: Vec::new(), best_f: f64::INFINITY, trace: Vec::with_capacity(budget) }
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        assert!(self.trace.len() < self.budget, "evaluation budget of {} exceeded", self.budget);
        let v = (self.f)(x);
        if v < self.best_f || self.best_x.is_empty() {
            self.best_f = v;
            self.best_x = x.to_vec();
        }
        self.trace.push(self.best_f);
        v
    }

    fn finish(self, step_size: Option<f64>, fd_step: Option<f64>) -> BaselineResult {
        BaselineResult {
            best_x: self.best_x,
            best_f: self.best_f,
            evaluations: self.trace.len(),
            trace: self.trace,
            step_size,
            fd_step,
        }
    }
}

/// `n` points from the sampler; Halton runs skip [`halton_skip`]`(seed)` points.
pub fn sample_points(domain: &Domain, n: usize, sampler: SearchSampler, seed: u64) -> Result<PointSet> {
    match sampler {
        SearchSampler::Halton => sample_halton(domain, n, halton_skip(seed)),
        SearchSampler::Uniform => sample_uniform(domain, n, seed),
    }
}

/// Evaluates `n` points and keeps the best.
pub fn random_search<F>(f: F, domain: &Domain, n: usize, sampler: SearchSampler, seed: u64) -> Result<BaselineResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if n == 0 {
        return Err(invalid("budget must be at least 1"));
    }
    let pts = sample_points(domain, n, sampler, seed)?;
    let mut t = Tracker::new(f, n);
    for x in pts.rows() {
        t.eval(x);
    }
    Ok(t.finish(None, None))
}

/// Gradient step size for [`random_gd`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Fixed(f64),
    /// Picks the grid value with the smallest final best value among those
    /// whose trajectories never increase `f`. Tuning runs are not charged to
    /// the budget.
    Tuned(Vec<f64>),
}

impl StepSize {
    /// `count` log-spaced values in `[lo, hi]`.
    pub fn log_grid(lo: f64, hi: f64, count: usize) -> Self {
        let count = count.max(1);
        let grid = if count == 1 {
            vec![lo]
        } else {
            (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
        };
        StepSize::Tuned(grid)
    }
}

impl Default for StepSize {
    fn default() -> Self {
        Self::log_grid(1e-4, 1.0, 9)
    }
}

/// Relative forward-difference offset; the absolute offset is this times the
/// domain diameter.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// One projected gradient-descent trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Iterates `x_0..x_steps`.
    pub points: Vec<Vec<f64>>,
    /// `f(x_0)..f(x_{steps-1})`, evaluated as stencil centers.
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn is_descent(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

fn run_trajectory<F: FnMut(&[f64]) -> f64>(
    t: &mut Tracker<F>,
    domain: &Domain,
    x0: &[f64],
    steps: usize,
    step_size: f64,
    h: f64,
) -> Trajectory {
    let d = x0.len();
    let mut x = x0.to_vec();
    domain.project(&mut x);
    let mut points = vec![x.clone()];
    let mut values = Vec::with_capacity(steps);
    let mut y = x.clone();
    let mut grad = vec![0.0; d];
    for _ in 0..steps {
        let fx = t.eval(&x);
        values.push(fx);
        for k in 0..d {
            y.copy_from_slice(&x);
            y[k] += h;
            // backward difference on the upper boundary
            let hk = if domain.contains(&y) { h } else { -h };
            y[k] = x[k] + hk;
            grad[k] = (t.eval(&y) - fx) / hk;
        }
        for k in 0..d {
            x[k] -= step_size * grad[k];
        }
        domain.project(&mut x);
        points.push(x.clone());
    }
    Trajectory { points, values }
}

/// Runs `steps` projected forward-difference gradient steps from `x0`,
/// spending `steps (d + 1)` evaluations.
pub fn gd_trajectory<F>(f: F, domain: &Domain, x0: &[f64], steps: usize, step_size: f64) -> Result<(Trajectory, BaselineResult)>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.len() != domain.dim() {
        return Err(invalid("start point has the wrong dimension"));
    }
    if steps == 0 {
        return Err(invalid("steps must be positive"));
    }
    let h = FD_RELATIVE_STEP * domain.diameter();
    let mut t = Tracker::new(f, steps * (domain.dim() + 1));
    let traj = run_trajectory(&mut t, domain, x0, steps, step_size, h);
    Ok((traj, t.finish(Some(step_size), Some(h))))
}

/// Number of restarts that fit the budget, `floor(n / ((d + 1) steps))`.
pub fn gd_restarts(n: usize, d: usize, steps: usize) -> usize {
    if steps == 0 {
        0
    } else {
        n / ((d + 1) * steps)
    }
}

fn gd_with_step<F: FnMut(&[f64]) -> f64>(
    f: F,
    domain: &Domain,
    n: usize,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> (BaselineResult, bool) {
    let d = domain.dim();
    let h = FD_RELATIVE_STEP * domain.diameter();
    let restarts = gd_restarts(n, d, steps);
    let mut r = rng::from_seed(seed);
    let starts: Vec<Vec<f64>> = (0..restarts).map(|_| domain.sample_point(&mut r)).collect();
    let mut t = Tracker::new(f, n);
    let mut descent = true;
    for x0 in &starts {
        descent &= run_trajectory(&mut t, domain, x0, steps, step_size, h).is_descent();
    }
    debug_assert!(t.trace.len() <= n);
    (t.finish(Some(step_size), Some(h)), descent)
}

/// Multi-start gradient descent: `floor(n / ((d+1) steps))` uniform starts,
/// each running `steps` forward-difference steps clamped to the domain.
pub fn random_gd<F>(mut f: F, domain: &Domain, n: usize, steps: usize, step_size: &StepSize, seed: u64) -> Result<BaselineResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let d = domain.dim();
    if steps == 0 || gd_restarts(n, d, steps) == 0 {
        return Err(invalid(format!("budget {n} is below one restart of {steps} steps ((d+1) * steps = {})", (d + 1) * steps)));
    }
    match step_size {
        StepSize::Fixed(s) => {
            if !(s.is_finite() && *s > 0.0) {
                return Err(invalid(format!("step size must be positive, got {s}")));
            }
            Ok(gd_with_step(&mut f, domain, n, steps, *s, seed).0)
        }
        StepSize::Tuned(grid) => {
            if grid.is_empty() || grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(invalid("step-size grid must be non-empty and positive"));
            }
            let mut best: Option<BaselineResult> = None;
            let mut fallback: Option<BaselineResult> = None;
            for &s in grid {
                let (res, descent) = gd_with_step(&mut f, domain, n, steps, s, seed);
                if descent {
                    if best.as_ref().map_or(true, |b| res.best_f < b.best_f) {
                        best = Some(res);
                    }
                } else if fallback.as_ref().map_or(true, |b| s < b.step_size.unwrap_or(f64::INFINITY)) {
                    fallback = Some(res);
                }
            }
            Ok(best.unwrap_or_else(|| {
                log::warn!("no step size in the grid gives descent; using the smallest");
                fallback.expect("non-empty grid")
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restarts_fill_the_budget() {
        assert_eq!(gd_restarts(1000, 8, 10), 11);
        assert_eq!(gd_restarts(89, 8, 10), 0);
        assert_eq!(gd_restarts(90, 8, 10), 1);
    }

    #[test]
    fn log_grid_endpoints() {
        let StepSize::Tuned(g) = StepSize::log_grid(1e-3, 1e-1, 3) else { panic!() };
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!((g[2] - 1e-1).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "budget")]
    fn tracker_enforces_the_budget() {
        let mut t = Tracker::new(|_: &[f64]| 0.0, 1);
        t.eval(&[0.0]);
        t.eval(&[0.0]);
    }
}

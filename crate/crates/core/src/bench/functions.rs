//! Normalized test functions on `[-1, 1]^d`.
//!
//! Every function is a sum of identical two-dimensional blocks over the
//! coordinate pairs `(x_1, x_2), (x_3, x_4), ...`, so its extrema follow
//! from those of one block, found on a dense grid and refined locally.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Two-dimensional Gaussian bump mixture `sum_j w_j exp(-|x - c_j|^2 / (2 s_j^2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bumps {
    pub centers: Vec<[f64; 2]>,
    pub widths: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for Bumps {
    /// Four negative bumps; the deepest sits at `(0.3, 0.4)`.
    fn default() -> Self {
        Bumps {
            centers: vec![[0.3, 0.4], [-0.5, -0.3], [0.6, -0.6], [-0.4, 0.6]],
            widths: vec![0.25, 0.3, 0.2, 0.35],
            weights: vec![-1.0, -0.8, -0.7, -0.6],
        }
    }
}

impl Bumps {
    pub fn single(center: [f64; 2], width: f64, weight: f64) -> Self {
        Bumps { centers: vec![center], widths: vec![width], weights: vec![weight] }
    }

    fn eval(&self, a: f64, b: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(&self.weights)
            .map(|((c, s), w)| {
                let r2 = (a - c[0]).powi(2) + (b - c[1]).powi(2);
                w * (-r2 / (2.0 * s * s)).exp()
            })
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.centers.is_empty() || self.centers.len() != self.widths.len() || self.centers.len() != self.weights.len() {
            return Err(invalid("bumps need equally many centers, widths and weights (at least one)"));
        }
        if self.widths.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("bump widths must be positive"));
        }
        Ok(())
    }
}

/// Test-function description, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    GaussianBumps2d(Bumps),
    /// `f(x) = sum_k base(x_{2k-1}, x_{2k})` in even dimension `d`.
    SeparableLift { base: Box<FunctionSpec>, d: usize },
    /// `base(x) + amplitude sum_k cos(frequency x_k)`.
    CosinePerturbed { base: Box<FunctionSpec>, amplitude: f64, frequency: f64 },
}

impl Default for FunctionSpec {
    fn default() -> Self {
        FunctionSpec::GaussianBumps2d(Bumps::default())
    }
}

/// Default perturbation: small amplitude, high frequency.
pub const DEFAULT_COSINE_AMPLITUDE: f64 = 0.05;
pub const DEFAULT_COSINE_FREQUENCY: f64 = 30.0;

/// Default grid resolution per axis for the two-dimensional block.
pub const DEFAULT_GRID: usize = 401;

impl FunctionSpec {
    pub fn bumps() -> Self {
        Self::default()
    }

    pub fn lift(self, d: usize) -> Self {
        FunctionSpec::SeparableLift { base: Box::new(self), d }
    }

    pub fn perturbed(self, amplitude: f64, frequency: f64) -> Self {
        FunctionSpec::CosinePerturbed { base: Box::new(self), amplitude, frequency }
    }

    pub fn dim(&self) -> usize {
        match self {
            FunctionSpec::GaussianBumps2d(_) => 2,
            FunctionSpec::SeparableLift { d, .. } => *d,
            FunctionSpec::CosinePerturbed { base, .. } => base.dim(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::GaussianBumps2d(b) => b.validate(),
            FunctionSpec::SeparableLift { base, d } => {
                if *d == 0 || d % 2 != 0 {
                    return Err(Error::Config(format!("separable lift needs an even dimension, got {d}")));
                }
                if base.dim() != 2 {
                    return Err(Error::Config("separable lift needs a two-dimensional base".into()));
                }
                base.validate()
            }
            FunctionSpec::CosinePerturbed { base, amplitude, frequency } => {
                if !(amplitude.is_finite() && frequency.is_finite()) {
                    return Err(invalid("cosine amplitude and frequency must be finite"));
                }
                base.validate()
            }
        }
    }

    /// Value of the two-dimensional block.
    fn block(&self, a: f64, b: f64) -> f64 {
        match self {
            FunctionSpec::GaussianBumps2d(bumps) => bumps.eval(a, b),
            FunctionSpec::SeparableLift { base, .. } => base.block(a, b),
            FunctionSpec::CosinePerturbed { base, amplitude, frequency } => {
                base.block(a, b) + amplitude * ((frequency * a).cos() + (frequency * b).cos())
            }
        }
    }

    /// Unnormalized value.
    pub fn raw(&self, x: &[f64]) -> f64 {
        x.chunks_exact(2).map(|p| self.block(p[0], p[1])).sum()
    }
}

/// A built test function with its normalization and known extrema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub spec: FunctionSpec,
    pub d: usize,
    /// Raw minimum over `[-1, 1]^d`.
    pub offset: f64,
    /// Raw range over `[-1, 1]^d`.
    pub scale: f64,
    /// Location of the minimum.
    pub argmin: Vec<f64>,
    /// Minimum and maximum of the raw function on the build grid, before
    /// local refinement.
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid: usize,
}

impl TestFunction {
    /// Normalized value, zero at the minimum and one at the maximum.
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.spec.raw(x) - self.offset) / self.scale
    }

    /// Normalized minimum value, zero by construction.
    pub fn true_min(&self) -> f64 {
        0.0
    }

    /// Normalized grid extrema, to check the normalization.
    pub fn normalized_grid_range(&self) -> (f64, f64) {
        ((self.grid_min - self.offset) / self.scale, (self.grid_max - self.offset) / self.scale)
    }
}

/// Compass search on `[-1, 1]^2` from `start`, shrinking the step until it
/// falls below `tol`. `sign = 1` minimizes, `-1` maximizes.
fn refine(g: &dyn Fn(f64, f64) -> f64, start: (f64, f64), step: f64, tol: f64, sign: f64) -> (f64, f64, f64) {
    let (mut a, mut b) = start;
    let mut best = sign * g(a, b);
    let mut h = step;
    while h > tol {
        let mut moved = false;
        for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let (na, nb) = ((a + da).clamp(-1.0, 1.0), (b + db).clamp(-1.0, 1.0));
            let v = sign * g(na, nb);
            if v < best {
                best = v;
                a = na;
                b = nb;
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (a, b, sign * best)
}

/// Builds the function and its normalization from a `grid x grid` scan of the
/// block on `[-1, 1]^2`; block extrema add up across the `d / 2` pairs.
pub fn build_test_function(spec: &FunctionSpec, grid: usize) -> Result<TestFunction> {
    spec.validate()?;
    if grid < 2 {
        return Err(invalid("grid needs at least two points per axis"));
    }
    let d = spec.dim();
    let blocks = (d / 2) as f64;
    let g = |a: f64, b: f64| spec.block(a, b);
    let step = 2.0 / (grid - 1) as f64;
    let mut lo = (f64::INFINITY, 0.0, 0.0);
    let mut hi = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..grid {
        let a = -1.0 + step * i as f64;
        for j in 0..grid {
            let b = -1.0 + step * j as f64;
            let v = g(a, b);
            if v < lo.0 {
                lo = (v, a, b);
            }
            if v > hi.0 {
                hi = (v, a, b);
            }
        }
    }
    let (ma, mb, mv) = refine(&g, (lo.1, lo.2), step, 1e-12, 1.0);
    let (_, _, xv) = refine(&g, (hi.1, hi.2), step, 1e-12, -1.0);
    let offset = blocks * mv.min(lo.0);
    let scale = blocks * xv.max(hi.0) - offset;
    if !(scale > 0.0) {
        return Err(invalid("test function is constant on the domain"));
    }
    let argmin = (0..d).map(|k| if k % 2 == 0 { ma } else { mb }).collect();
    Ok(TestFunction {
        spec: spec.clone(),
        d,
        offset,
        scale,
        argmin,
        grid_min: blocks * lo.0,
        grid_max: blocks * hi.0,
        grid,
    })
}

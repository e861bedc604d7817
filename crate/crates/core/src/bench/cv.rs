//! Hyperparameter selection by the value of `f` at the candidate minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, PointSet};
use crate::kernels::KernelSpec;
use crate::solver::{solve, SampleSet, SolveOutput, SolveStatus, SolverConfig};

/// Log grids for the regularization and the kernel bandwidth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvGrid {
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl CvGrid {
    pub fn single(lambda: f64, sigma: f64) -> Self {
        CvGrid { lambda: vec![lambda], sigma: vec![sigma] }
    }

    /// `count` log-spaced values from `lo` to `hi`.
    pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect(),
        }
    }

    pub fn cells(&self) -> usize {
        self.lambda.len() * self.sigma.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lambda.is_empty() || self.sigma.is_empty() {
            return Err(invalid("cross-validation grids must be non-empty"));
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("grid values must be finite, lambda >= 0 and sigma > 0"));
        }
        Ok(())
    }
}

/// One grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub lambda: f64,
    pub sigma: f64,
    pub f_at_z: Option<f64>,
    pub c_hat: Option<f64>,
    pub z_hat: Option<Vec<f64>>,
    pub iterations: usize,
    pub status: Option<SolveStatus>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub best: usize,
    pub table: Vec<CvCell>,
    /// Solver output of the selected cell.
    pub output: SolveOutput,
    /// Sample set of the selected cell.
    pub data: SampleSet,
    /// Evaluations of `f` at candidates, one per successful cell.
    pub extra_evaluations: usize,
    pub sample_evaluations: usize,
}

impl CvResult {
    pub fn best_cell(&self) -> &CvCell {
        &self.table[self.best]
    }

    pub fn evaluations(&self) -> usize {
        self.sample_evaluations + self.extra_evaluations
    }
}

/// Solves once per `(lambda, sigma)` cell on one shared sample set and keeps
/// the cell whose candidate has the smallest `f`; ties go to the larger
/// `lambda`.
pub fn cross_validate<F>(
    mut f: F,
    points: &PointSet,
    domain: &Domain,
    kernel: &KernelSpec,
    cfg: &SolverConfig,
    grid: &CvGrid,
) -> Result<CvResult>
where
    F: FnMut(&[f64]) -> f64,
{
    grid.validate()?;
    let values: ndarray::Array1<f64> = points.rows().map(&mut f).collect();
    let mut table = Vec::with_capacity(grid.cells());
    let mut best: Option<(usize, SolveOutput, SampleSet)> = None;
    let mut extra = 0;
    let mut data_cache: Vec<Option<SampleSet>> = vec![None; grid.sigma.len()];
    for &lambda in &grid.lambda {
        for (si, &sigma) in grid.sigma.iter().enumerate() {
            let attempt = (|| -> Result<(SampleSet, SolveOutput)> {
                if data_cache[si].is_none() {
                    let data = SampleSet::new(points.clone(), values.clone(), kernel.with_sigma(sigma)?)?
                        .with_domain(domain.clone())?;
                    data_cache[si] = Some(data);
                }
                let data = data_cache[si].as_ref().expect("cached");
                let out = solve(data, &SolverConfig { lambda, ..cfg.clone() })?;
                Ok((data.clone(), out))
            })();
            match attempt {
                Ok((data, out)) => {
                    let fz = f(&out.z_hat);
                    extra += 1;
                    table.push(CvCell {
                        lambda,
                        sigma,
                        f_at_z: Some(fz),
                        c_hat: Some(out.c_hat),
                        z_hat: Some(out.z_hat.clone()),
                        iterations: out.iterations,
                        status: Some(out.status),
                        error: None,
                    });
                    let idx = table.len() - 1;
                    let better = match &best {
                        None => true,
                        Some((b, _, _)) => {
                            let bf = table[*b].f_at_z.expect("solved");
                            fz < bf || (fz == bf && lambda > table[*b].lambda)
                        }
                    };
                    if better {
                        best = Some((idx, out, data));
                    }
                }
                Err(e) => {
                    log::debug!("cross-validation cell lambda={lambda:e} sigma={sigma:e} failed: {e}");
                    table.push(CvCell {
                        lambda,
                        sigma,
                        f_at_z: None,
                        c_hat: None,
                        z_hat: None,
                        iterations: 0,
                        status: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    match best {
        Some((best, output, data)) => Ok(CvResult {
            best,
            table,
            output,
            data,
            extra_evaluations: extra,
            sample_evaluations: points.len(),
        }),
        None => {
            let report: Vec<String> = table
                .iter()
                .map(|c| format!("lambda={:e} sigma={:e}: {}", c.lambda, c.sigma, c.error.as_deref().unwrap_or("?")))
                .collect();
            Err(Error::Validation(format!("every cross-validation cell failed: {}", report.join("; "))))
        }
    }
}

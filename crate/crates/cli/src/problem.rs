//! Sample sets, saved runs and their reconstruction.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ksos::bench::{build_test_function, TestFunction};
use ksos::geometry::{Domain, PointSet};
use ksos::kernels::KernelConfig;
use ksos::localizer::StageRecord;
use ksos::solver::SolveSummary;
use ksos::{SampleSet, SolverConfig};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Either a test function or a fixed table of samples.
pub enum Problem {
    Function(TestFunction),
    Table { points: PointSet, values: Array1<f64> },
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match &cfg.data {
            Some(path) => {
                let (points, values) = read_table(path)?;
                Ok(Problem::Table { points, values })
            }
            None => Ok(Problem::Function(build_test_function(&cfg.function_spec(), cfg.grid)?)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Function(f) => f.d,
            Problem::Table { points, .. } => points.dim(),
        }
    }

    /// `[-1, 1]^d` for test functions, the bounding box of the samples otherwise.
    pub fn domain(&self) -> Result<Domain> {
        match self {
            Problem::Function(f) => Ok(Domain::cube(f.d, 1.0)?),
            Problem::Table { points, .. } => {
                let p = points.points();
                let lo = p.columns().into_iter().map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b))).collect();
                let hi = p.columns().into_iter().map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
                Ok(Domain::boxed(lo, hi)?)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            Problem::Function(f) => Some(f.eval(x)),
            Problem::Table { .. } => None,
        }
    }
}

fn read_table(path: &Path) -> Result<(PointSet, Array1<f64>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: Vec<f64> = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
        if v.len() < 2 {
            bail!("{}: each row needs at least one coordinate and a value", path.display());
        }
        values.push(v[v.len() - 1]);
        rows.push(v[..v.len() - 1].to_vec());
    }
    if rows.is_empty() {
        bail!("{}: no samples", path.display());
    }
    Ok((PointSet::from_rows(&rows)?, Array1::from(values)))
}

/// Everything needed to rebuild a solved instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SavedRun {
    pub schema_version: u32,
    pub verb: String,
    pub config: RunConfig,
    pub kernel: KernelConfig,
    pub solver: SolverConfig,
    pub domain: Domain,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub alpha: Vec<f64>,
    pub summary: SolveSummary,
    pub f_at_z: Option<f64>,
    pub vertex_value: f64,
    #[serde(default)]
    pub stages: Vec<StageRecord>,
    pub evaluations: usize,
}

impl SavedRun {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn sample_set(&self) -> Result<SampleSet> {
        let points = PointSet::from_rows(&self.points)?;
        let kernel = self.kernel.build(points.dim())?;
        Ok(SampleSet::new(points, Array1::from(self.values.clone()), kernel)?.with_domain(self.domain.clone())?)
    }
}

pub fn rows(points: &PointSet) -> Vec<Vec<f64>> {
    points.rows().map(<[f64]>::to_vec).collect()
}

//! Shared fixtures for the criterion benchmarks.

use ksos::baselines::SearchSampler;
use ksos::bench::{build_test_function, FunctionSpec, DEFAULT_GRID};
use ksos::geometry::{sample_halton, Domain, PointSet};
use ksos::kernels::KernelSpec;
use ksos::SampleSet;

/// `n` Halton points on `[-1, 1]^d`.
pub fn halton(d: usize, n: usize) -> PointSet {
    sample_halton(&Domain::cube(d, 1.0).unwrap(), n, 0).unwrap()
}

/// `n` samples of the lifted bumps in dimension `d` with a Matérn 5/2 kernel.
pub fn bumps_data(d: usize, n: usize, sigma: f64) -> SampleSet {
    let spec = if d == 2 { FunctionSpec::bumps() } else { FunctionSpec::bumps().lift(d) };
    let f = build_test_function(&spec, DEFAULT_GRID).unwrap();
    let domain = Domain::cube(d, 1.0).unwrap();
    let pts = ksos::baselines::sample_points(&domain, n, SearchSampler::Halton, 0).unwrap();
    let kernel = KernelSpec::matern(d, 2.5, sigma).unwrap();
    SampleSet::from_fn(pts, kernel, |x| f.eval(x)).unwrap().with_domain(domain).unwrap()
}

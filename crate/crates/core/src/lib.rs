//! Global minimization of smooth black-box functions from point evaluations.
//!
//! The minimum of `f` over a domain is estimated by fitting a kernel
//! sum-of-squares model `f(x) - c = <phi(x), A phi(x)>` with `A` positive
//! semi-definite, subsampled at `n` points and regularized by the trace of
//! `A`. The resulting semidefinite program is solved through its
//! log-det-barrier dual with a damped Newton method whose cost is `O(n^3)`
//! per iteration.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: domains, uniform and Halton point sets, fill distance.
//! * [`kernels`]: the normalized Sobolev (Matérn) kernel and its constants.
//! * [`gram`]: Gram matrix assembly and the Cholesky features.
//! * [`solver`]: the dual damped-Newton solver and the learned model.
//! * [`localizer`]: the parabola variant for the minimizer and warm restarts.
//! * [`certify`]: a posteriori optimality certificates.
//! * [`baselines`]: random search and random restarts with gradient descent.
//! * [`bench`]: test functions, cross-validation and the experiment runner.
//!
//! ```no_run
//! use ksos::geometry::Domain;
//! use ksos::kernels::KernelSpec;
//! use ksos::solver::{SampleSet, SolverConfig, solve};
//!
//! let domain = Domain::cube(2, 1.0).unwrap();
//! let points = ksos::geometry::sample_halton(&domain, 200, 0).unwrap();
//! let kernel = KernelSpec::matern(2, 0.5, 0.5).unwrap();
//! let data = SampleSet::from_fn(points, kernel, |x: &[f64]| x[0] * x[0] + x[1] * x[1]).unwrap();
//! let out = solve(&data, &SolverConfig::new(1e-4)).unwrap();
//! println!("lower estimate {} near {:?}", out.c_hat, out.z_hat);
//! ```

pub mod baselines;
pub mod bench;
pub mod certify;
mod error;
pub mod geometry;
pub mod gram;
pub mod kernels;
pub mod localizer;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Domain, PointSet, Shape};
pub use kernels::{KernelConstants, KernelSpec};
pub use solver::{SampleSet, SolveOutput, SolverConfig};

//! Test functions, cross-validation and the experiment runner.

mod cv;
mod experiment;
mod functions;
mod plot;

pub use cv::{cross_validate, CvCell, CvGrid, CvResult};
pub use experiment::{
    read_records, run_experiment, run_single, write_records, ExperimentConfig, ExperimentReport, Failure, GdConfig,
    Method, Record, SCHEMA_VERSION,
};
pub use functions::{
    build_test_function, Bumps, FunctionSpec, TestFunction, DEFAULT_COSINE_AMPLITUDE, DEFAULT_COSINE_FREQUENCY,
    DEFAULT_GRID,
};
pub use plot::{plot_error_vs_n, plot_trace};

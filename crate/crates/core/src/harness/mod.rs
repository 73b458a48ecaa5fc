//! Monte Carlo experiments, scaling fits, squeezing probes and reports.

mod config;
mod mse;
mod report;
mod squeeze;

pub use config::{
    EstimatorSpec, ExperimentConfig, ExperimentSection, FilterConfig, FilterStart, ForcingMode, GainSpec,
    LinearSection, ModelConfig, MseMode, ObservationConfig, Setup, SqueezeSection, PRESETS,
};
pub use mse::{
    build_gain, fit_scaling_exponent, mean_and_stderr, run_mse_experiment, run_trial, MseReport, MseRow, SlopeFit,
    Trial,
};
pub use report::{
    meta_toml, read_report, read_report_csv, sidecar_path, write_report, write_report_csv, REPORT_HEADER,
};
pub use squeeze::{contraction_threshold, empirical_squeezing, squeezing_scan, Histogram, ProbeBalls, SqueezeProbe};

use crate::error::{Error, Result};
use crate::filters::FilterRun;

/// Per-step trace of the weighted ensemble covariance of a particle run.
pub fn posterior_variance_trace(run: &FilterRun) -> Result<&[f64]> {
    if run.posterior_trace.is_empty() {
        return Err(Error::InvalidArgument(format!("{} run carries no posterior covariance", run.estimator.name())));
    }
    if let Some(&step) = run.degenerate_steps.first() {
        return Err(Error::WeightCollapse { step });
    }
    Ok(&run.posterior_trace)
}

//! State estimators: fixed-gain and ball-truncated observers, the Kalman
//! filter for linear signals, and a bootstrap particle filter.

mod kalman;
mod observer;
mod particle;
mod run;
mod vnorm;

pub use kalman::{kalman_filter_step, Gaussian, KalmanFilter};
pub use observer::{kalman_gain_3dvar, observer_step, truncated_observer_step, GainOperator, Observer};
pub use particle::{particle_filter, systematic_resample, ParticleConfig};
pub use run::{EstimatorKind, FilterRun};
pub use vnorm::{project_ball_v, QuadraticForm, VNorm, VNormKind};

use nalgebra::DMatrix;

use crate::dynamics::{DissipativeModel, ModelKind};
use crate::observation::ObservationOperator;

/// Default radius of `B_V`: `√2 r` for the ODE models, `r` for
/// Navier–Stokes (where `B_V` is the absorbing ball itself).
pub fn default_ball_radius(model: &DissipativeModel) -> f64 {
    match model.kind() {
        ModelKind::NavierStokes(_) => model.absorbing_radius(),
        _ => 2f64.sqrt() * model.absorbing_radius(),
    }
}

/// Default `V` for a model: `|P·|² + |·|²`, or H¹ for Navier–Stokes.
pub fn default_vnorm(model: &DissipativeModel, op: &ObservationOperator) -> VNorm {
    match model.spectral() {
        Some(ns) => VNorm::h1(ns),
        None => VNorm::euclidean_plus_observed(op),
    }
}

/// `Γ = (1/m) I` on the `m` observed coordinates.
pub fn default_gamma(op: &ObservationOperator) -> DMatrix<f64> {
    DMatrix::identity(op.n_observed(), op.n_observed()) / op.n_observed() as f64
}

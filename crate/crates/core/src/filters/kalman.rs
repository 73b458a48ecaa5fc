use nalgebra::DMatrix;

use crate::dynamics::State;
use crate::error::{check_dim, Error, Result};

/// Kalman filter for `v_{j+1} = L v_j`, `y_{j+1} = H v_{j+1} + ε η`,
/// `η ~ N(0, Γ)`. `H` is `m × d` and may have no rows.
#[derive(Clone, Debug)]
pub struct KalmanFilter {
    l: DMatrix<f64>,
    h: DMatrix<f64>,
    gamma: DMatrix<f64>,
    epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: State,
    pub cov: DMatrix<f64>,
}

impl KalmanFilter {
    pub fn new(l: DMatrix<f64>, h: DMatrix<f64>, gamma: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::InvalidArgument("signal map must be square".into()));
        }
        check_dim(l.nrows(), h.ncols())?;
        check_dim(h.nrows(), gamma.nrows())?;
        check_dim(h.nrows(), gamma.ncols())?;
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise strength must be nonnegative, got {epsilon}")));
        }
        Ok(Self { l, h, gamma, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// One predict/update cycle. `y_next` is the full `d`-vector observation
    /// in the `Hᵀy` embedding; only `H y_next` is read.
    pub fn step(&self, prior: &Gaussian, y_next: &State) -> Result<Gaussian> {
        check_dim(self.dim(), prior.mean.len())?;
        check_dim(self.dim(), y_next.len())?;
        let mean_pred = &self.l * &prior.mean;
        let cov_pred = &self.l * &prior.cov * self.l.transpose();
        if self.h.nrows() == 0 {
            return Ok(Gaussian { mean: mean_pred, cov: cov_pred });
        }
        let (k, _) = self.gain(&cov_pred)?;
        let innovation = &self.h * y_next - &self.h * &mean_pred;
        let mean = mean_pred + &k * innovation;
        // Joseph form keeps the update symmetric positive semidefinite
        let ikh = DMatrix::identity(self.dim(), self.dim()) - &k * &self.h;
        let noise = &k * &self.gamma * k.transpose() * (self.epsilon * self.epsilon);
        let cov = &ikh * cov_pred * ikh.transpose() + noise;
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Gaussian { mean, cov })
    }

    /// Gain `K = C Hᵀ S⁻¹` and innovation covariance `S = HCHᵀ + ε²Γ`.
    fn gain(&self, cov_pred: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let cht = cov_pred * self.h.transpose();
        let s = &self.h * &cht + &self.gamma * (self.epsilon * self.epsilon);
        let chol = s.clone().cholesky().ok_or(Error::SingularInnovation)?;
        let k = chol.solve(&cht.transpose()).transpose();
        if !k.iter().all(|x| x.is_finite()) {
            return Err(Error::SingularInnovation);
        }
        Ok((k, s))
    }

    /// Covariance sequence `C_0, …, C_J`; it does not depend on the data.
    pub fn covariances(&self, cov0: &DMatrix<f64>, steps: usize) -> Result<Vec<DMatrix<f64>>> {
        let zero = State::zeros(self.dim());
        let mut g = Gaussian { mean: zero.clone(), cov: cov0.clone() };
        let mut out = vec![cov0.clone()];
        for _ in 0..steps {
            g = self.step(&g, &zero)?;
            out.push(g.cov.clone());
        }
        Ok(out)
    }

    pub fn run(&self, prior: &Gaussian, observations: &[State]) -> Result<Vec<Gaussian>> {
        let mut out = vec![prior.clone()];
        for y in observations {
            let next = self.step(out.last().expect("non-empty"), y)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Stand-alone form of [`KalmanFilter::step`].
#[allow(clippy::too_many_arguments)]
pub fn kalman_filter_step(
    l: &DMatrix<f64>,
    h: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    epsilon: f64,
    mean: &State,
    cov: &DMatrix<f64>,
    y_next: &State,
) -> Result<(State, DMatrix<f64>)> {
    let kf = KalmanFilter::new(l.clone(), h.clone(), gamma.clone(), epsilon)?;
    let g = kf.step(&Gaussian { mean: mean.clone(), cov: cov.clone() }, y_next)?;
    Ok((g.mean, g.cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_steady_state_matches_fixed_point() {
        let eps: f64 = 0.1;
        let one = DMatrix::identity(1, 1);
        let kf = KalmanFilter::new(one.clone(), one.clone(), one.clone(), eps).unwrap();
        let covs = kf.covariances(&one, 50).unwrap();
        // random walk observed directly: c_{j+1} = c_j ε² / (c_j + ε²), so 1/c_j = 1/c_0 + j/ε²
        for (j, c) in covs.iter().enumerate() {
            let expected = 1.0 / (1.0 + j as f64 / (eps * eps));
            assert!((c[(0, 0)] - expected).abs() < 1e-14 * expected.max(1e-3));
        }
    }

    #[test]
    fn no_observations_propagates_forecast() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let kf = KalmanFilter::new(l.clone(), DMatrix::zeros(0, 2), DMatrix::zeros(0, 0), 1.0).unwrap();
        let covs = kf.covariances(&DMatrix::identity(2, 2), 10).unwrap();
        assert_eq!(covs[10][(0, 0)], 4f64.powi(10));
    }

    #[test]
    fn deterministic_prior_needs_noise() {
        let one = DMatrix::identity(1, 1);
        let kf = KalmanFilter::new(one.clone(), one.clone(), one.clone(), 0.0).unwrap();
        let prior = Gaussian { mean: State::zeros(1), cov: DMatrix::zeros(1, 1) };
        assert!(matches!(kf.step(&prior, &State::zeros(1)), Err(Error::SingularInnovation)));
    }
}

use nalgebra::DMatrix;

use super::vnorm::{project_ball_v, VNorm};
use crate::dynamics::{DissipativeModel, State, Workspace};
use crate::error::{check_dim, Error, Result};
use crate::observation::ObservationOperator;

/// The gain `D` of `z_{j+1} = (I − DP)Ψ(z_j) + D y_{j+1}`.
#[derive(Clone, Debug, PartialEq)]
pub enum GainOperator {
    /// `D = I` on the observed subspace.
    IdentityOnObserved,
    /// A 3DVAR gain `K`, stored as a `d × d` matrix.
    Kalman(DMatrix<f64>),
    Explicit(DMatrix<f64>),
}

impl GainOperator {
    pub fn name(&self) -> &'static str {
        match self {
            GainOperator::IdentityOnObserved => "identity",
            GainOperator::Kalman(_) => "kalman",
            GainOperator::Explicit(_) => "explicit",
        }
    }

    pub fn matrix(&self, op: &ObservationOperator) -> DMatrix<f64> {
        match self {
            GainOperator::IdentityOnObserved => op.matrix(),
            GainOperator::Kalman(m) | GainOperator::Explicit(m) => m.clone(),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self {
            GainOperator::IdentityOnObserved => Ok(()),
            GainOperator::Kalman(m) | GainOperator::Explicit(m) => {
                check_dim(dim, m.nrows())?;
                check_dim(dim, m.ncols())
            }
        }
    }

    /// `(I − DP)x`, overwriting `x`.
    pub fn apply_complement(&self, op: &ObservationOperator, x: &mut State) {
        let zero = State::zeros(x.len());
        self.correct(op, x, &zero);
    }

    /// `(I − DP)x + Dy`, overwriting `x`.
    fn correct(&self, op: &ObservationOperator, x: &mut State, y: &State) {
        match self {
            GainOperator::IdentityOnObserved => {
                for &i in op.observed() {
                    x[i] = y[i];
                }
            }
            GainOperator::Kalman(d) | GainOperator::Explicit(d) => {
                let innovation = State::from_fn(x.len(), |i, _| if op.is_observed(i) { y[i] - x[i] } else { 0.0 });
                x.gemv(1.0, d, &innovation, 1.0);
            }
        }
    }
}

fn check_observation(op: &ObservationOperator, y: &State) -> Result<()> {
    check_dim(op.dim(), y.len())?;
    let residual = op.unobserved_residual(y);
    if residual != 0.0 {
        return Err(Error::InvalidObservation(format!("observation has unobserved component {residual:e}")));
    }
    Ok(())
}

/// Fixed-gain observer with its own integrator scratch space.
#[derive(Clone, Debug)]
pub struct Observer<'a> {
    pub model: &'a DissipativeModel,
    pub op: &'a ObservationOperator,
    pub gain: &'a GainOperator,
    pub h: f64,
    /// `(V, R)` for the ball-truncated variant.
    pub ball: Option<(&'a VNorm, f64)>,
}

impl<'a> Observer<'a> {
    pub fn new(
        model: &'a DissipativeModel,
        op: &'a ObservationOperator,
        gain: &'a GainOperator,
        h: f64,
    ) -> Result<Self> {
        check_dim(model.dim(), op.dim())?;
        gain.check(model.dim())?;
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        Ok(Self { model, op, gain, h, ball: None })
    }

    pub fn truncated(mut self, vnorm: &'a VNorm, radius: f64) -> Result<Self> {
        check_dim(self.model.dim(), vnorm.dim())?;
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        self.ball = Some((vnorm, radius));
        Ok(self)
    }

    /// Advances `z` in place to the estimate given `y_next`.
    pub fn step_in_place(&self, z: &mut State, y_next: &State, ws: &mut Workspace) -> Result<()> {
        check_dim(self.model.dim(), z.len())?;
        check_observation(self.op, y_next)?;
        self.model.step_in_place(z.as_mut_slice(), self.h, ws)?;
        self.gain.correct(self.op, z, y_next);
        if let Some((vnorm, radius)) = self.ball {
            let n = vnorm.norm(z);
            if n > radius {
                *z *= radius / n;
            }
        }
        Ok(())
    }

    pub fn step(&self, z: &State, y_next: &State) -> Result<State> {
        let mut out = z.clone();
        self.step_in_place(&mut out, y_next, &mut Workspace::new(self.model.dim()))?;
        Ok(out)
    }

    /// `z_0, …, z_J` from `z_0` and `y_1, …, y_J`.
    pub fn run(&self, z0: &State, observations: &[State]) -> Result<Vec<State>> {
        let mut ws = Workspace::new(self.model.dim());
        let mut z = z0.clone();
        let mut out = Vec::with_capacity(observations.len() + 1);
        out.push(z.clone());
        for y in observations {
            self.step_in_place(&mut z, y, &mut ws)?;
            out.push(z.clone());
        }
        Ok(out)
    }
}

/// `z_{j+1} = (I − DP)Ψ_h(z_j) + D y_{j+1}`.
pub fn observer_step(
    model: &DissipativeModel,
    op: &ObservationOperator,
    gain: &GainOperator,
    h: f64,
    z: &State,
    y_next: &State,
) -> Result<State> {
    Observer::new(model, op, gain, h)?.step(z, y_next)
}

/// The observer update followed by projection onto `{V^{1/2} ≤ radius}`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_observer_step(
    model: &DissipativeModel,
    op: &ObservationOperator,
    gain: &GainOperator,
    vnorm: &VNorm,
    radius: f64,
    h: f64,
    m: &State,
    y_next: &State,
) -> Result<State> {
    let raw = observer_step(model, op, gain, h, m, y_next)?;
    Ok(project_ball_v(vnorm, radius, &raw))
}

/// 3DVAR gain `K = CHᵀ(HCHᵀ + ε²Γ)⁻¹H`, with `H` the row selection of `P`
/// and `Γ` an `m × m` covariance on the observed coordinates.
pub fn kalman_gain_3dvar(
    c: &DMatrix<f64>,
    op: &ObservationOperator,
    gamma: &DMatrix<f64>,
    epsilon: f64,
) -> Result<GainOperator> {
    check_dim(op.dim(), c.nrows())?;
    check_dim(op.dim(), c.ncols())?;
    check_dim(op.n_observed(), gamma.nrows())?;
    check_dim(op.n_observed(), gamma.ncols())?;
    let h = op.selection();
    let cht = c * h.transpose();
    let s = &h * &cht + gamma * (epsilon * epsilon);
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    // K = (S⁻¹ H Cᵀ)ᵀ H, and S is symmetric
    let k_obs = chol.solve(&cht.transpose()).transpose();
    if !k_obs.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    Ok(GainOperator::Kalman(k_obs * h))
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{SpectralNs, State};
use crate::error::{check_dim, Error, Result};
use crate::observation::ObservationOperator;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VNormKind {
    /// `V(u) = |Pu|² + |u|²`.
    EuclideanPlusObserved,
    /// `V(u) = Σ k²|u_k|²` over the full wavevector set.
    H1,
    Custom,
}

#[derive(Clone, Debug)]
pub enum QuadraticForm {
    Diagonal(DVector<f64>),
    Dense { matrix: DMatrix<f64>, factor: Cholesky<f64, Dyn> },
}

/// Squared Hilbert norm `V(x) = xᵀSx` with `V ≥ θ|·|²`.
#[derive(Clone, Debug)]
pub struct VNorm {
    kind: VNormKind,
    form: QuadraticForm,
    theta: f64,
}

impl VNorm {
    pub fn euclidean_plus_observed(op: &ObservationOperator) -> Self {
        let weights = DVector::from_fn(op.dim(), |i, _| if op.is_observed(i) { 2.0 } else { 1.0 });
        Self { kind: VNormKind::EuclideanPlusObserved, form: QuadraticForm::Diagonal(weights), theta: 1.0 }
    }

    /// The phase-space norm of Navier–Stokes is itself H¹, so `θ = 1`.
    pub fn h1(space: &SpectralNs) -> Self {
        Self { kind: VNormKind::H1, form: QuadraticForm::Diagonal(space.h1_weights()), theta: 1.0 }
    }

    /// Diagonal form `V(x) = Σ wᵢxᵢ²` with positive weights.
    pub fn diagonal(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() || !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
        let theta = weights.min();
        Ok(Self { kind: VNormKind::Custom, form: QuadraticForm::Diagonal(weights), theta })
    }

    /// Symmetric positive definite `S`; `θ = λ_min(S)`.
    pub fn custom(s: DMatrix<f64>) -> Result<Self> {
        if !s.is_square() || s.nrows() == 0 {
            return Err(Error::InvalidArgument("quadratic form must be a non-empty square matrix".into()));
        }
        let asym = (&s - s.transpose()).amax();
        if asym > 1e-12 * s.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("quadratic form is not symmetric (defect {asym:e})")));
        }
        let theta = s.clone().symmetric_eigenvalues().min();
        let factor = Cholesky::new(s.clone())
            .filter(|_| theta > 0.0)
            .ok_or_else(|| Error::InvalidArgument("quadratic form is not positive definite".into()))?;
        Ok(Self { kind: VNormKind::Custom, form: QuadraticForm::Dense { matrix: s, factor }, theta })
    }

    pub fn kind(&self) -> &VNormKind {
        &self.kind
    }

    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            QuadraticForm::Diagonal(w) => w.len(),
            QuadraticForm::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn inner(&self, x: &State, y: &State) -> f64 {
        match &self.form {
            QuadraticForm::Diagonal(w) => x.iter().zip(y.iter()).zip(w.iter()).map(|((a, b), c)| a * b * c).sum(),
            QuadraticForm::Dense { matrix, .. } => x.dot(&(matrix * y)),
        }
    }

    pub fn value(&self, x: &State) -> f64 {
        self.inner(x, x)
    }

    /// `V(x)^{1/2}`.
    pub fn norm(&self, x: &State) -> f64 {
        self.value(x).sqrt()
    }

    /// Uniform draw from `{x : V(x)^{1/2} ≤ radius}`.
    pub fn sample_ball(&self, radius: f64, rng: &mut impl Rng) -> State {
        let d = self.dim();
        let mut z = State::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u: f64 = rng.gen();
        z *= radius * u.powf(1.0 / d as f64) / z.norm();
        match &self.form {
            QuadraticForm::Diagonal(w) => z.component_div(&w.map(f64::sqrt)),
            // S = LLᵀ, x = L⁻ᵀz gives V(x) = |z|²
            QuadraticForm::Dense { factor, .. } => {
                factor.l().transpose().solve_upper_triangular(&z).expect("Cholesky factor is nonsingular")
            }
        }
    }

    pub fn check(&self, x: &State) -> Result<()> {
        check_dim(self.dim(), x.len())
    }
}

/// Closest point of `{V^{1/2} ≤ radius}` to `x` in the `V^{1/2}` norm.
pub fn project_ball_v(vnorm: &VNorm, radius: f64, x: &State) -> State {
    let n = vnorm.norm(x);
    if n <= radius {
        x.clone()
    } else {
        x * (radius / n)
    }
}

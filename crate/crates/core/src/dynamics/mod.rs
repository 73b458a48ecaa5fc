//! Dissipative quadratic models `dv/dt + Av + B(v,v) = f` and their
//! discrete solution maps.

mod spectral;

pub use spectral::{Lattice, Mode, SpectralNs, VelocityMode};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

pub type State = DVector<f64>;

pub const DEFAULT_SUBSTEPS: usize = 10;
pub const DEFAULT_NS_SUBSTEPS: usize = 4;

#[derive(Clone, Debug)]
pub enum ModelKind {
    Lorenz63 {
        a: f64,
        b: f64,
        r: f64,
    },
    Lorenz96 {
        dim: usize,
    },
    /// `B ≡ 0`; the flow is `dv/dt = f - Av`.
    Linear {
        a: DMatrix<f64>,
    },
    NavierStokes(Box<SpectralNs>),
}

#[derive(Clone, Debug)]
pub struct DissipativeModel {
    kind: ModelKind,
    forcing: State,
    substeps: usize,
}

/// Scratch buffers for one integrator; reuse across steps to avoid
/// allocation in inner loops.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    scratch: Vec<f64>,
    decay: Option<(f64, Vec<f64>, Vec<f64>)>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let z = vec![0.0; dim];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z.clone(), scratch: z, decay: None }
    }

    fn ensure(&mut self, dim: usize) {
        if self.k1.len() != dim {
            *self = Self::new(dim);
        }
    }
}

/// Lorenz '63 in the shifted coordinates where the forcing sits in the third
/// component, with the standard parameters `(a, b, r) = (10, 8/3, 28)`.
pub fn lorenz63() -> DissipativeModel {
    lorenz63_with(10.0, 8.0 / 3.0, 28.0)
}

pub fn lorenz63_with(a: f64, b: f64, r: f64) -> DissipativeModel {
    DissipativeModel {
        kind: ModelKind::Lorenz63 { a, b, r },
        forcing: DVector::from_vec(vec![0.0, 0.0, -b * (r + a)]),
        substeps: DEFAULT_SUBSTEPS,
    }
}

/// Lorenz '96 with `A = I` and constant forcing 8; `dim` must be a multiple
/// of three and at least six.
pub fn lorenz96(dim: usize) -> Result<DissipativeModel> {
    if dim < 6 || !dim.is_multiple_of(3) {
        return Err(Error::InvalidModel(format!(
            "Lorenz '96 dimension must be a multiple of 3 and at least 6, got {dim}"
        )));
    }
    Ok(DissipativeModel {
        kind: ModelKind::Lorenz96 { dim },
        forcing: DVector::from_element(dim, 8.0),
        substeps: DEFAULT_SUBSTEPS,
    })
}

pub fn linear(a: DMatrix<f64>, forcing: State) -> Result<DissipativeModel> {
    if !a.is_square() {
        return Err(Error::InvalidModel("linear operator must be square".into()));
    }
    check_dim(a.nrows(), forcing.len())?;
    Ok(DissipativeModel { kind: ModelKind::Linear { a }, forcing, substeps: DEFAULT_SUBSTEPS })
}

/// Galerkin-truncated 2D Navier–Stokes on `[0, period]²`, keeping
/// wavevectors with `0 < |n|∞ ≤ kmax`. The forcing must be divergence-free
/// and have no mean mode.
pub fn navier_stokes_spectral(
    viscosity: f64,
    forcing: &[VelocityMode],
    kmax: i32,
    period: f64,
) -> Result<DissipativeModel> {
    let space = SpectralNs::new(viscosity, kmax, period)?;
    let f = space.from_velocity_coefficients(forcing)?;
    Ok(DissipativeModel { kind: ModelKind::NavierStokes(Box::new(space)), forcing: f, substeps: DEFAULT_NS_SUBSTEPS })
}

impl DissipativeModel {
    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Lorenz63 { .. } => "lorenz63",
            ModelKind::Lorenz96 { .. } => "lorenz96",
            ModelKind::Linear { .. } => "linear",
            ModelKind::NavierStokes(_) => "navier-stokes",
        }
    }

    pub fn dim(&self) -> usize {
        self.forcing.len()
    }

    pub fn forcing(&self) -> &State {
        &self.forcing
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidModel("substeps must be positive".into()));
        }
        self.substeps = substeps;
        Ok(self)
    }

    /// Replaces the forcing of a finite-dimensional model.
    pub fn with_forcing(mut self, forcing: State) -> Result<Self> {
        check_dim(self.dim(), forcing.len())?;
        self.forcing = forcing;
        Ok(self)
    }

    pub fn spectral(&self) -> Option<&SpectralNs> {
        match &self.kind {
            ModelKind::NavierStokes(ns) => Some(ns),
            _ => None,
        }
    }

    fn linear_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Lorenz63 { a, b, .. } => {
                out[0] = a * u[0] - a * u[1];
                out[1] = a * u[0] + u[1];
                out[2] = b * u[2];
            }
            ModelKind::Lorenz96 { .. } => out.copy_from_slice(u),
            ModelKind::Linear { a } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..u.len()).map(|j| a[(i, j)] * u[j]).sum();
                }
            }
            ModelKind::NavierStokes(ns) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = ns.viscosity() * ns.coordinate_k2(i) * u[i];
                }
            }
        }
    }

    fn bilinear_into(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Lorenz63 { .. } => {
                out[0] = 0.0;
                out[1] = 0.5 * (u[0] * w[2] + u[2] * w[0]);
                out[2] = -0.5 * (u[0] * w[1] + u[1] * w[0]);
            }
            ModelKind::Lorenz96 { dim } => {
                let d = *dim;
                for (i, o) in out.iter_mut().enumerate() {
                    let ip1 = (i + 1) % d;
                    let im1 = (i + d - 1) % d;
                    let im2 = (i + d - 2) % d;
                    *o = -0.5 * (w[im1] * u[ip1] + u[im1] * w[ip1] - w[im2] * u[im1] - u[im2] * w[im1]);
                }
            }
            ModelKind::Linear { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            ModelKind::NavierStokes(ns) => ns.bilinear_into(u, w, out),
        }
    }

    /// `f - Au - B(u,u)` written into `out`.
    fn field_into(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match &self.kind {
            ModelKind::Lorenz63 { a, b, .. } => {
                out[0] = -a * u[0] + a * u[1] + self.forcing[0];
                out[1] = -a * u[0] - u[1] - u[0] * u[2] + self.forcing[1];
                out[2] = -b * u[2] + self.forcing[2] + u[0] * u[1];
            }
            ModelKind::Lorenz96 { dim } => {
                let d = *dim;
                for i in 0..d {
                    let ip1 = (i + 1) % d;
                    let im1 = (i + d - 1) % d;
                    let im2 = (i + d - 2) % d;
                    out[i] = (u[ip1] - u[im2]) * u[im1] - u[i] + self.forcing[i];
                }
            }
            _ => {
                self.linear_into(u, scratch);
                self.bilinear_into(u, u, out);
                for i in 0..out.len() {
                    out[i] = self.forcing[i] - scratch[i] - out[i];
                }
            }
        }
    }

    /// Nonlinear part `f - B(u,u)` used by the integrating-factor scheme.
    fn nonlinear_into(&self, u: &[f64], out: &mut [f64]) {
        self.bilinear_into(u, u, out);
        for i in 0..out.len() {
            out[i] = self.forcing[i] - out[i];
        }
    }

    pub fn linear_operator(&self, u: &State) -> Result<State> {
        check_dim(self.dim(), u.len())?;
        let mut out = State::zeros(self.dim());
        self.linear_into(u.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn bilinear(&self, u: &State, w: &State) -> Result<State> {
        check_dim(self.dim(), u.len())?;
        check_dim(self.dim(), w.len())?;
        let mut out = State::zeros(self.dim());
        self.bilinear_into(u.as_slice(), w.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn vector_field(&self, u: &State) -> Result<State> {
        check_dim(self.dim(), u.len())?;
        let mut out = State::zeros(self.dim());
        let mut scratch = vec![0.0; self.dim()];
        self.field_into(u.as_slice(), out.as_mut_slice(), &mut scratch);
        Ok(out)
    }

    /// Inner product of the energy identity: Euclidean for the ODE models,
    /// L² of the velocity field for Navier–Stokes.
    pub fn energy_inner(&self, u: &State, w: &State) -> f64 {
        match &self.kind {
            ModelKind::NavierStokes(_) => 2.0 * u.dot(w),
            _ => u.dot(w),
        }
    }

    /// Diagonal weights of the phase-space norm `|u|² = Σ wᵢ uᵢ²`
    /// (Euclidean, or H¹ for Navier–Stokes).
    pub fn norm_weights(&self) -> DVector<f64> {
        match &self.kind {
            ModelKind::NavierStokes(ns) => ns.h1_weights(),
            _ => DVector::from_element(self.dim(), 1.0),
        }
    }

    pub fn norm_squared(&self, u: &State) -> f64 {
        match &self.kind {
            ModelKind::NavierStokes(ns) => u.iter().enumerate().map(|(i, x)| 2.0 * ns.coordinate_k2(i) * x * x).sum(),
            _ => u.norm_squared(),
        }
    }

    pub fn norm(&self, u: &State) -> f64 {
        self.norm_squared(u).sqrt()
    }

    /// Constants `(r0, r1)` of `|Ψ_t(v)|² ≤ e^{-r1 t}|v|² + r0 (1 - e^{-r1 t})`.
    /// For Navier–Stokes `θ` is the lowest Stokes eigenvalue of the truncation.
    pub fn dissipation_constants(&self) -> (f64, f64) {
        let f2 = self.norm_squared(&self.forcing);
        match &self.kind {
            ModelKind::NavierStokes(ns) => {
                let theta = ns.lowest_eigenvalue();
                (f2 / (theta * theta), theta)
            }
            _ => (f2, 1.0),
        }
    }

    /// Radius `r = √(2 r0)` of the absorbing ball.
    pub fn absorbing_radius(&self) -> f64 {
        (2.0 * self.dissipation_constants().0).sqrt()
    }

    /// One assimilation step `Ψ_h(u)` with `substeps` internal RK4 steps.
    pub fn step(&self, u: &State, h: f64) -> Result<State> {
        check_dim(self.dim(), u.len())?;
        let mut out = u.clone();
        let mut ws = Workspace::new(self.dim());
        self.step_in_place(out.as_mut_slice(), h, &mut ws)?;
        Ok(out)
    }

    /// In-place `Ψ_h`; the caller guarantees `u.len() == dim()`.
    pub fn step_in_place(&self, u: &mut [f64], h: f64, ws: &mut Workspace) -> Result<()> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        check_dim(self.dim(), u.len())?;
        ws.ensure(u.len());
        let dt = h / self.substeps as f64;
        for s in 0..self.substeps {
            match &self.kind {
                ModelKind::NavierStokes(ns) => self.if_rk4(ns, u, dt, ws),
                _ => self.rk4(u, dt, ws),
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::BlowUp { time: (s + 1) as f64 * dt });
            }
        }
        Ok(())
    }

    fn rk4(&self, u: &mut [f64], dt: f64, ws: &mut Workspace) {
        let n = u.len();
        let Workspace { k1, k2, k3, k4, tmp, scratch, .. } = ws;
        self.field_into(u, k1, scratch);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        self.field_into(tmp, k2, scratch);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        self.field_into(tmp, k3, scratch);
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        self.field_into(tmp, k4, scratch);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Integrating-factor RK4: the viscous term is integrated exactly through
    /// `e^{-ν k² t}`, RK4 handles the remaining `f - B(u,u)`.
    fn if_rk4(&self, ns: &SpectralNs, u: &mut [f64], dt: f64, ws: &mut Workspace) {
        let n = u.len();
        let stale = ws.decay.as_ref().is_none_or(|(cached, _, _)| *cached != dt);
        if stale {
            let nu = ns.viscosity();
            let full = (0..n).map(|i| (-nu * ns.coordinate_k2(i) * dt).exp()).collect();
            let half = (0..n).map(|i| (-nu * ns.coordinate_k2(i) * dt * 0.5).exp()).collect();
            ws.decay = Some((dt, full, half));
        }
        let Workspace { k1, k2, k3, k4, tmp, decay, .. } = ws;
        let (_, e, e2) = decay.as_ref().expect("decay factors cached above");
        self.nonlinear_into(u, k1);
        for i in 0..n {
            tmp[i] = e2[i] * (u[i] + 0.5 * dt * k1[i]);
        }
        self.nonlinear_into(tmp, k2);
        for i in 0..n {
            tmp[i] = e2[i] * u[i] + 0.5 * dt * k2[i];
        }
        self.nonlinear_into(tmp, k3);
        for i in 0..n {
            tmp[i] = e[i] * u[i] + dt * e2[i] * k3[i];
        }
        self.nonlinear_into(tmp, k4);
        for i in 0..n {
            u[i] = e[i] * u[i] + dt / 6.0 * (e[i] * k1[i] + 2.0 * e2[i] * (k2[i] + k3[i]) + k4[i]);
        }
    }

    /// Trajectory `v_0, Ψ(v_0), …, Ψ^steps(v_0)`.
    pub fn trajectory(&self, v0: &State, h: f64, steps: usize) -> Result<Vec<State>> {
        check_dim(self.dim(), v0.len())?;
        let mut ws = Workspace::new(self.dim());
        let mut out = Vec::with_capacity(steps + 1);
        let mut u = v0.clone();
        out.push(u.clone());
        for _ in 0..steps {
            self.step_in_place(u.as_mut_slice(), h, &mut ws)?;
            out.push(u.clone());
        }
        Ok(out)
    }
}

//! Galerkin truncation of the 2D incompressible Navier–Stokes equation on a
//! periodic square.
//!
//! A divergence-free field is stored through one complex scalar per
//! wavevector pair `{k, -k}`: the velocity coefficient is
//! `v_k = v'_k · i k⊥ / |k|` with `k⊥ = (-k₂, k₁)`. With this basis the
//! reality condition reads `v'_{-k} = conj(v'_k)`, so only a half-plane of
//! wavevectors is stored and conjugate symmetry holds by construction.
//!
//! The real state vector interleaves `(Re v'_k, Im v'_k)` for each stored
//! wavevector in the order of [`SpectralNs::modes`].

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Integer lattice index of a wavevector; the physical wavevector is
/// `(2π / period) · n`.
pub type Lattice = (i32, i32);

#[derive(Clone, Debug)]
pub struct Mode {
    pub lattice: Lattice,
    pub k: [f64; 2],
    pub k2: f64,
}

impl Mode {
    pub fn norm(&self) -> f64 {
        self.k2.sqrt()
    }
}

/// A vector-valued Fourier coefficient of a velocity field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityMode {
    pub lattice: Lattice,
    pub v: [Complex64; 2],
}

#[derive(Clone, Copy, Debug)]
struct Triad {
    p: u32,
    q: u32,
    p_conj: bool,
    q_conj: bool,
    coeff: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralNs {
    viscosity: f64,
    period: f64,
    kmax: i32,
    modes: Vec<Mode>,
    lookup: HashMap<Lattice, (usize, bool)>,
    triads: Vec<Triad>,
    offsets: Vec<usize>,
}

fn in_half_plane(n: Lattice) -> bool {
    n.1 > 0 || (n.1 == 0 && n.0 > 0)
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl SpectralNs {
    /// Builds the truncated space `0 < |n|∞ ≤ kmax` and the interaction
    /// coefficients of the Leray-projected, symmetrized advection term.
    pub fn new(viscosity: f64, kmax: i32, period: f64) -> Result<Self> {
        if !(viscosity > 0.0) || !viscosity.is_finite() {
            return Err(Error::InvalidModel(format!("viscosity must be positive, got {viscosity}")));
        }
        if kmax < 1 {
            return Err(Error::InvalidModel(format!("kmax must be at least 1, got {kmax}")));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidModel(format!("period must be positive, got {period}")));
        }
        let scale = 2.0 * PI / period;
        let mut modes = Vec::new();
        let mut lookup = HashMap::new();
        for n2 in 0..=kmax {
            for n1 in -kmax..=kmax {
                let n = (n1, n2);
                if !in_half_plane(n) {
                    continue;
                }
                let k = [scale * n1 as f64, scale * n2 as f64];
                lookup.insert(n, (modes.len(), false));
                lookup.insert((-n1, -n2), (modes.len(), true));
                modes.push(Mode { lattice: n, k, k2: dot(k, k) });
            }
        }

        // c(p,q,k) = -(p×q)(q·k) / (|p||q||k|) is the e_k component of the
        // projected u_p·∇ w_q term; the stored coefficient is its symmetrization.
        let coupling = |p: [f64; 2], q: [f64; 2], k: [f64; 2]| {
            -cross(p, q) * dot(q, k) / (dot(p, p) * dot(q, q) * dot(k, k)).sqrt()
        };
        let mut triads = Vec::new();
        let mut offsets = Vec::with_capacity(modes.len() + 1);
        for mode in &modes {
            offsets.push(triads.len());
            let (k1, k2) = mode.lattice;
            for p2 in -kmax..=kmax {
                for p1 in -kmax..=kmax {
                    if (p1, p2) == (0, 0) {
                        continue;
                    }
                    let q = (k1 - p1, k2 - p2);
                    if q == (0, 0) || q.0.abs() > kmax || q.1.abs() > kmax {
                        continue;
                    }
                    let pv = [scale * p1 as f64, scale * p2 as f64];
                    let qv = [scale * q.0 as f64, scale * q.1 as f64];
                    let coeff = 0.5 * (coupling(pv, qv, mode.k) + coupling(qv, pv, mode.k));
                    if coeff == 0.0 {
                        continue;
                    }
                    let (pi, pc) = lookup[&(p1, p2)];
                    let (qi, qc) = lookup[&q];
                    triads.push(Triad { p: pi as u32, q: qi as u32, p_conj: pc, q_conj: qc, coeff });
                }
            }
        }
        offsets.push(triads.len());
        Ok(Self { viscosity, period, kmax, modes, lookup, triads, offsets })
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn kmax(&self) -> i32 {
        self.kmax
    }

    /// Stored half-plane wavevectors, in state order.
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Length of the real state vector.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    /// Squared wavenumber belonging to real coordinate `i`.
    pub fn coordinate_k2(&self, i: usize) -> f64 {
        self.modes[i / 2].k2
    }

    /// Smallest eigenvalue of the Stokes operator on the truncated space.
    pub fn lowest_eigenvalue(&self) -> f64 {
        let scale = 2.0 * PI / self.period;
        self.viscosity * scale * scale
    }

    /// Diagonal of the viscous operator in real coordinates.
    pub fn viscous_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.viscosity * self.coordinate_k2(i))
    }

    /// Weights `w_i` with `‖u‖²_{H¹} = Σ w_i u_i²`, counting both `k` and `-k`.
    pub fn h1_weights(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| 2.0 * self.coordinate_k2(i))
    }

    /// Weights for the L² (energy) inner product.
    pub fn l2_weights(&self) -> DVector<f64> {
        DVector::from_element(self.dim(), 2.0)
    }

    fn scalar_at(&self, u: &[f64], idx: u32, conj: bool) -> Complex64 {
        let i = 2 * idx as usize;
        if conj {
            Complex64::new(u[i], -u[i + 1])
        } else {
            Complex64::new(u[i], u[i + 1])
        }
    }

    /// Scalar coefficients `v'_k` of the state.
    pub fn scalar_coefficient(&self, u: &[f64], n: Lattice) -> Option<Complex64> {
        self.lookup.get(&n).map(|&(i, conj)| self.scalar_at(u, i as u32, conj))
    }

    /// `out = B(u, w)` in scalar coordinates.
    pub fn bilinear_into(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        for (m, window) in self.offsets.windows(2).enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in &self.triads[window[0]..window[1]] {
                let up = self.scalar_at(u, t.p, t.p_conj);
                let wq = self.scalar_at(w, t.q, t.q_conj);
                acc += up * wq * t.coeff;
            }
            out[2 * m] = acc.re;
            out[2 * m + 1] = acc.im;
        }
    }

    /// Velocity coefficients `v_k` over the full (both half-planes) index set.
    pub fn velocity_coefficients(&self, u: &[f64]) -> Vec<VelocityMode> {
        let mut out = Vec::with_capacity(self.dim());
        for (i, mode) in self.modes.iter().enumerate() {
            let s = self.scalar_at(u, i as u32, false);
            let basis = [Complex64::new(0.0, -mode.k[1] / mode.norm()), Complex64::new(0.0, mode.k[0] / mode.norm())];
            let v = [s * basis[0], s * basis[1]];
            let (n1, n2) = mode.lattice;
            out.push(VelocityMode { lattice: (n1, n2), v });
            out.push(VelocityMode { lattice: (-n1, -n2), v: [v[0].conj(), v[1].conj()] });
        }
        out
    }

    /// Builds a state from vector-valued coefficients. Coefficients on only
    /// one of `k`, `-k` imply the other by conjugation; if both are given
    /// they must be conjugate. Every coefficient must be divergence-free.
    pub fn from_velocity_coefficients(&self, coeffs: &[VelocityMode]) -> Result<DVector<f64>> {
        let mut state = DVector::zeros(self.dim());
        let mut seen: HashMap<usize, Complex64> = HashMap::new();
        for c in coeffs {
            if c.lattice == (0, 0) {
                return Err(Error::InvalidModel("mean mode k = (0,0) is not part of the space".into()));
            }
            let &(idx, conj) = self.lookup.get(&c.lattice).ok_or_else(|| {
                Error::InvalidModel(format!("wavevector {:?} lies outside the truncation", c.lattice))
            })?;
            let mode = &self.modes[idx];
            let sign = if conj { -1.0 } else { 1.0 };
            let k = [sign * mode.k[0], sign * mode.k[1]];
            let size = (c.v[0].norm_sqr() + c.v[1].norm_sqr()).sqrt();
            let divergence = c.v[0] * k[0] + c.v[1] * k[1];
            if divergence.norm() > 1e-12 * size.max(1.0) * mode.norm() {
                return Err(Error::InvalidModel(format!("coefficient at {:?} is not divergence-free", c.lattice)));
            }
            // v' = v · conj(e_k), e_k = i k⊥/|k|
            let kabs = mode.norm();
            let scalar = (c.v[0] * (-k[1]) + c.v[1] * k[0]) * Complex64::new(0.0, -1.0 / kabs);
            let scalar = if conj { scalar.conj() } else { scalar };
            if let Some(prev) = seen.get(&idx) {
                if (prev - scalar).norm() > 1e-12 * prev.norm().max(1.0) {
                    return Err(Error::InvalidModel(format!(
                        "coefficients at {:?} and its negative are not conjugate",
                        c.lattice
                    )));
                }
                continue;
            }
            seen.insert(idx, scalar);
            state[2 * idx] = scalar.re;
            state[2 * idx + 1] = scalar.im;
        }
        Ok(state)
    }

    /// Largest `|k·v_k| / |k|` over the full index set.
    pub fn divergence_residual(&self, u: &[f64]) -> f64 {
        self.velocity_coefficients(u)
            .iter()
            .map(|c| {
                let (n1, n2) = c.lattice;
                let scale = 2.0 * PI / self.period;
                let k = [scale * n1 as f64, scale * n2 as f64];
                (c.v[0] * k[0] + c.v[1] * k[1]).norm() / dot(k, k).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Number of lattice wavevectors (counting `k` and `-k`) with `|k|² ≤ λ`.
    pub fn modes_within(&self, lambda: f64) -> usize {
        2 * self.modes.iter().filter(|m| m.k2 <= lambda).count()
    }
}

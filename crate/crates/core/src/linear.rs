//! Detectability of linear signals `v_{j+1} = L v_j` observed through `P`.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::rng::{purpose, substream};

/// Default modulus tolerance: `|λ| ≥ 1 − tol` counts as unstable.
pub const UNIT_TOL: f64 = 1e-9;

/// Eigenvalues closer than this are treated as one (possibly defective)
/// eigenvalue and replaced by their mean.
const CLUSTER_TOL: f64 = 1e-4;

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "expected a non-empty square matrix, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Eigenvalues from a Schur decomposition with a bounded number of QR
/// sweeps. Shifted QR can cycle on some exactly structured matrices; such a
/// run is retried on an orthogonally similar matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    check_square(m)?;
    let n = m.nrows();
    let mut a = m.clone();
    for attempt in 0..4 {
        if let Some(schur) = Schur::try_new(a, f64::EPSILON, 100 * n) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
        let v = DVector::from_fn(n, |i, _| 1.0 + ((i + attempt) % n) as f64);
        let reflect = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
        a = &reflect * m * &reflect;
    }
    Err(Error::EigenSolver)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

fn cluster(mut eigs: Vec<Complex64>) -> Vec<Complex64> {
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    for l in eigs {
        match out.iter_mut().find(|(c, n)| (*c / *n as f64 - l).norm() < CLUSTER_TOL) {
            Some((sum, n)) => {
                *sum += l;
                *n += 1;
            }
            None => out.push((l, 1)),
        }
    }
    out.into_iter().map(|(sum, n)| sum / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detectability {
    pub detectable: bool,
    /// An eigenvalue with `|λ| ≥ 1` whose eigenvector lies in `Ker P`.
    pub witness: Option<Complex64>,
}

/// Hautus test: `[λI − L; P]` has full column rank for every eigenvalue
/// `λ` of `L` with `|λ| ≥ 1 − tol`. `P` may be any `p × d` matrix.
pub fn hautus_detectable(l: &DMatrix<f64>, p: &DMatrix<f64>, tol: f64) -> Result<Detectability> {
    check_square(l)?;
    check_dim(l.ncols(), p.ncols())?;
    let d = l.nrows();
    let scale = l.norm().max(p.norm()).max(1.0);
    let mut witness: Option<Complex64> = None;
    for lambda in cluster(eigenvalues(l)?) {
        if lambda.norm() < 1.0 - tol {
            continue;
        }
        let stacked = DMatrix::from_fn(d + p.nrows(), d, |i, j| {
            if i < d {
                let diag = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
                diag - l[(i, j)]
            } else {
                Complex64::new(p[(i - d, j)], 0.0)
            }
        });
        let smin = stacked.svd(false, false).singular_values.min();
        if smin <= 1e-8 * scale && witness.is_none_or(|w| lambda.norm() > w.norm()) {
            witness = Some(lambda);
        }
    }
    Ok(Detectability { detectable: witness.is_none(), witness })
}

/// `(L, P)` is detectable iff `(L, PL)` is; always `true` up to numerics.
pub fn detectability_shift_equivalence(l: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<bool> {
    let direct = hautus_detectable(l, p, UNIT_TOL)?;
    let shifted = hautus_detectable(l, &(p * l), UNIT_TOL)?;
    Ok(direct.detectable == shifted.detectable)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainSearch {
    /// `D`, of shape `d × p`.
    pub gain: DMatrix<f64>,
    pub rho: f64,
    /// Contraction factor of the quadratic norm certifying `ρ(L − DP) < 1`.
    pub alpha: Option<f64>,
    pub evaluations: usize,
}

impl GainSearch {
    /// A computed `ρ < 1` alone is not trusted: the search drifts toward
    /// defective matrices, where eigenvalue solvers err by about `√ε`.
    pub fn success(&self) -> bool {
        self.alpha.is_some()
    }
}

struct Search<'a> {
    l: &'a DMatrix<f64>,
    p: &'a DMatrix<f64>,
    evaluations: usize,
    budget: usize,
}

impl Search<'_> {
    fn rho(&mut self, d: &DMatrix<f64>) -> f64 {
        self.evaluations += 1;
        spectral_radius(&(self.l - d * self.p)).unwrap_or(f64::INFINITY)
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    /// Compass search on the entries of `D`, halving the step on failure.
    fn descend(&mut self, mut d: DMatrix<f64>, mut step: f64) -> (DMatrix<f64>, f64) {
        let mut best = self.rho(&d);
        while step > 1e-7 && !self.exhausted() {
            let mut improved = false;
            for idx in 0..d.len() {
                for sign in [1.0, -1.0] {
                    if self.exhausted() {
                        return (d, best);
                    }
                    let old = d[idx];
                    d[idx] = old + sign * step;
                    let r = self.rho(&d);
                    if r < best - 1e-15 {
                        best = r;
                        improved = true;
                        break;
                    }
                    d[idx] = old;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (d, best)
    }
}

/// Searches for `D` minimizing `ρ(L − DP)`: compass search from `D = 0`
/// (at most half the budget), then from the steady-state Riccati gain, then
/// from seeded random starts until `budget` evaluations are spent.
/// A result with `ρ ≥ 1` is inconclusive; [`hautus_detectable`] decides.
pub fn find_gain(l: &DMatrix<f64>, p: &DMatrix<f64>, budget: usize) -> Result<GainSearch> {
    find_gain_seeded(l, p, budget, 0)
}

/// [`find_gain`] with an explicit seed for the restarts.
pub fn find_gain_seeded(l: &DMatrix<f64>, p: &DMatrix<f64>, budget: usize, seed: u64) -> Result<GainSearch> {
    check_square(l)?;
    check_dim(l.ncols(), p.ncols())?;
    let budget = budget.max(1);
    let mut search = Search { l, p, evaluations: 0, budget: budget.div_ceil(2) };
    let scale = l.amax().max(1.0);
    let (mut gain, mut rho) = search.descend(DMatrix::zeros(l.nrows(), p.nrows()), scale);
    search.budget = budget;
    let consider = |(g, r): (DMatrix<f64>, f64), gain: &mut DMatrix<f64>, rho: &mut f64| {
        if r < *rho - 1e-12 {
            *gain = g;
            *rho = r;
        }
    };
    if let Some(start) = riccati_gain(l, p) {
        consider(search.descend(start, scale), &mut gain, &mut rho);
    }
    let mut rng = substream(seed, &[l.nrows() as u64, p.nrows() as u64], purpose::GAIN_SEARCH);
    while !search.exhausted() {
        let start = DMatrix::from_fn(l.nrows(), p.nrows(), |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        consider(search.descend(start, scale), &mut gain, &mut rho);
    }
    let alpha = if rho < 1.0 { contractive_norm(&(l - &gain * p)).ok().map(|c| c.alpha) } else { None };
    Ok(GainSearch { gain, rho, alpha, evaluations: search.evaluations })
}

/// Steady-state predictor gain `D = LCPᵀ(PCPᵀ + I)⁻¹` of the Riccati
/// recursion `C ← LCLᵀ − D(PCPᵀ + I)Dᵀ + I`; stabilizing whenever `(L, P)`
/// is detectable. `None` if the recursion diverges.
fn riccati_gain(l: &DMatrix<f64>, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = l.nrows();
    if p.nrows() == 0 {
        return None;
    }
    let mut c = DMatrix::identity(d, d);
    let mut gain = DMatrix::zeros(d, p.nrows());
    for _ in 0..10_000 {
        let s = p * &c * p.transpose() + DMatrix::identity(p.nrows(), p.nrows());
        let s_inv = s.clone().cholesky()?.inverse();
        gain = l * &c * p.transpose() * s_inv;
        let next = l * &c * l.transpose() - &gain * s * gain.transpose() + DMatrix::identity(d, d);
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|x| x.is_finite()) || next.amax() > 1e150 {
            return None;
        }
        let change = (&next - &c).amax();
        c = next;
        if change <= 1e-13 * c.amax() {
            break;
        }
    }
    Some(gain)
}

/// Quadratic form `V(x) = xᵀSx` with `V(Mx) ≤ α V(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractiveNorm {
    pub s: DMatrix<f64>,
    pub alpha: f64,
}

impl ContractiveNorm {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.s * x))
    }
}

/// Solves `S = MᵀSM + I` by doubling, `S = Σ_k (Mᵀ)^k M^k`, and sets
/// `α = 1 − 1/λ_max(S)`.
pub fn contractive_norm(m: &DMatrix<f64>) -> Result<ContractiveNorm> {
    check_square(m)?;
    let rho = spectral_radius(m)?;
    if !(rho < 1.0) {
        return Err(Error::NotContractive(rho));
    }
    let n = m.nrows();
    let mut s = DMatrix::identity(n, n);
    let mut a = m.clone();
    for _ in 0..64 {
        let term = a.transpose() * &s * &a;
        s += &term;
        if term.amax() <= 1e-14 * s.amax() {
            break;
        }
        a = &a * &a;
    }
    let s = (&s + s.transpose()) * 0.5;
    let lmax = s.clone().symmetric_eigenvalues().max();
    let alpha = 1.0 - 1.0 / lmax;
    if !(alpha < 1.0) || !s.iter().all(|x| x.is_finite()) {
        return Err(Error::NotContractive(rho));
    }
    Ok(ContractiveNorm { s, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation(phi: f64, scale: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]) * scale
    }

    fn observe(d: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |r, c| if r == i && c == i { 1.0 } else { 0.0 })
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_radius(&rotation(0.7, 0.9)).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn hautus_diagonal_examples() {
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5]));
        assert!(hautus_detectable(&l, &observe(2, 0), UNIT_TOL).unwrap().detectable);
        let bad = hautus_detectable(&l, &observe(2, 1), UNIT_TOL).unwrap();
        assert!(!bad.detectable);
        assert!((bad.witness.unwrap() - Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_is_detectable_from_one_coordinate() {
        let l = rotation(PI / 4.0, 1.1);
        assert!(hautus_detectable(&l, &observe(2, 0), UNIT_TOL).unwrap().detectable);
        let g = find_gain(&l, &observe(2, 0), 5000).unwrap();
        assert!(g.success(), "rho {}", g.rho);
    }

    #[test]
    fn defective_unit_eigenvalue_is_found() {
        // Jordan block at 1, with the eigenvector e₁ unobserved
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let p = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(!hautus_detectable(&l, &p, UNIT_TOL).unwrap().detectable);
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(hautus_detectable(&l, &p, UNIT_TOL).unwrap().detectable);
    }

    #[test]
    fn gain_examples() {
        let two = DMatrix::from_element(1, 1, 2.0);
        let g = find_gain(&two, &DMatrix::identity(1, 1), 1000).unwrap();
        assert!(g.rho < 1e-6);
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5]));
        let g = find_gain(&l, &observe(2, 0), 2000).unwrap();
        assert!((g.rho - 0.5).abs() < 1e-9);
        let g = find_gain(&l, &observe(2, 1), 2000).unwrap();
        assert!(!g.success() && g.rho >= 2.0 - 1e-12);
    }

    #[test]
    fn contractive_norm_examples() {
        let m = DMatrix::identity(2, 2) * 0.9;
        let c = contractive_norm(&m).unwrap();
        assert!((c.alpha - 0.81).abs() < 1e-12);
        assert!((c.s[(0, 0)] - 1.0 / 0.19).abs() < 1e-10);
        let jordan = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
        assert!(jordan.clone().svd(false, false).singular_values.max() > 1.0);
        assert!(contractive_norm(&jordan).unwrap().alpha < 1.0);
        assert!(matches!(contractive_norm(&DMatrix::identity(2, 2)), Err(Error::NotContractive(_))));
    }
}

//! Projected noisy observations `y_j = P v_j + ε w_j`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DissipativeModel, SpectralNs, State, Workspace};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ObservationKind {
    CoordinateMask,
    EveryThirdUnobserved,
    FourierCutoff { lambda: f64, n_lambda: usize },
}

/// Orthogonal coordinate projection `P`; `Q = I - P`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationOperator {
    kind: ObservationKind,
    mask: Vec<bool>,
    observed: Vec<usize>,
}

impl ObservationOperator {
    fn from_mask(kind: ObservationKind, mask: Vec<bool>) -> Result<Self> {
        let observed: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
        if observed.is_empty() {
            return Err(Error::InvalidObservation("no coordinate is observed".into()));
        }
        Ok(Self { kind, mask, observed })
    }

    pub fn kind(&self) -> &ObservationKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    /// Observed coordinates, ascending.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn project(&self, u: &State) -> State {
        State::from_fn(u.len(), |i, _| if self.mask[i] { u[i] } else { 0.0 })
    }

    pub fn complement(&self, u: &State) -> State {
        State::from_fn(u.len(), |i, _| if self.mask[i] { 0.0 } else { u[i] })
    }

    /// Largest unobserved entry in absolute value; zero iff `Qu = 0`.
    pub fn unobserved_residual(&self, u: &State) -> f64 {
        u.iter().zip(&self.mask).filter(|(_, &m)| !m).map(|(x, _)| x.abs()).fold(0.0, f64::max)
    }

    /// `P` as a dense `d × d` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| if i == j && self.mask[i] { 1.0 } else { 0.0 })
    }

    /// Row selection `H` (`m × d`) with `HᵀH = P`.
    pub fn selection(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n_observed(), self.dim());
        for (r, &c) in self.observed.iter().enumerate() {
            h[(r, c)] = 1.0;
        }
        h
    }

    /// Observed entries of `u` as an `m`-vector.
    pub fn restrict(&self, u: &State) -> DVector<f64> {
        DVector::from_iterator(self.n_observed(), self.observed.iter().map(|&i| u[i]))
    }

    /// Inverse of [`restrict`](Self::restrict): embeds an `m`-vector.
    pub fn embed(&self, y: &DVector<f64>) -> State {
        let mut out = State::zeros(self.dim());
        for (r, &c) in self.observed.iter().enumerate() {
            out[c] = y[r];
        }
        out
    }
}

/// Observes the listed coordinates (0-based) of a `dim`-dimensional state.
pub fn coordinate_projection(dim: usize, observed: &[usize]) -> Result<ObservationOperator> {
    let mut mask = vec![false; dim];
    for &i in observed {
        if i >= dim {
            return Err(Error::InvalidObservation(format!("index {i} out of range for dimension {dim}")));
        }
        if mask[i] {
            return Err(Error::InvalidObservation(format!("index {i} listed twice")));
        }
        mask[i] = true;
    }
    ObservationOperator::from_mask(ObservationKind::CoordinateMask, mask)
}

/// Identity with every third column zeroed: coordinates 3, 6, 9, … (1-based)
/// are unobserved.
pub fn every_third_unobserved(dim: usize) -> Result<ObservationOperator> {
    if dim == 0 || !dim.is_multiple_of(3) {
        return Err(Error::InvalidObservation(format!("dimension {dim} is not a multiple of 3")));
    }
    let mask = (0..dim).map(|i| i % 3 != 2).collect();
    ObservationOperator::from_mask(ObservationKind::EveryThirdUnobserved, mask)
}

/// Keeps the Fourier modes with `|k|² ≤ λ`.
pub fn fourier_cutoff(space: &SpectralNs, lambda: f64) -> Result<ObservationOperator> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidObservation(format!("cutoff must be positive, got {lambda}")));
    }
    let mask = (0..space.dim()).map(|i| space.coordinate_k2(i) <= lambda).collect();
    let n_lambda = space.modes_within(lambda);
    ObservationOperator::from_mask(ObservationKind::FourierCutoff { lambda, n_lambda }, mask)
        .map_err(|_| Error::InvalidObservation(format!("cutoff {lambda} retains no modes")))
}

/// Centred Gaussian noise supported on the observed coordinates, with
/// independent entries of the given standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    std: DVector<f64>,
    /// Weights of the norm in which `E|w|² = 1` holds.
    norm_weights: DVector<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLaw {
    /// `N(0, 1/m)` per observed coordinate, so `E|w|² = 1`.
    #[default]
    Normalized,
    /// `N(0, 1)` per observed coordinate.
    Unit,
}

impl NoiseModel {
    pub fn new(op: &ObservationOperator, law: NoiseLaw) -> Self {
        let var = match law {
            NoiseLaw::Normalized => 1.0 / op.n_observed() as f64,
            NoiseLaw::Unit => 1.0,
        };
        let std = State::from_fn(op.dim(), |i, _| if op.is_observed(i) { var.sqrt() } else { 0.0 });
        Self { std, norm_weights: DVector::from_element(op.dim(), 1.0) }
    }

    /// Spectral noise with `ξ_k ~ N(0, (k² n(λ))⁻¹)` on each retained
    /// wavevector, normalized so that `E‖w‖²_{H¹} = 1`.
    pub fn spectral(space: &SpectralNs, op: &ObservationOperator) -> Result<Self> {
        check_dim(space.dim(), op.dim())?;
        // each retained half-plane mode stands for ±k: n(λ) = real coordinates
        let n = op.n_observed();
        let std = State::from_fn(op.dim(), |i, _| {
            if op.is_observed(i) {
                // real and imaginary parts share the complex variance
                (1.0 / (2.0 * space.coordinate_k2(i) * n as f64)).sqrt()
            } else {
                0.0
            }
        });
        Ok(Self { std, norm_weights: space.h1_weights() })
    }

    pub fn dim(&self) -> usize {
        self.std.len()
    }

    pub fn std(&self) -> &DVector<f64> {
        &self.std
    }

    pub fn variances(&self) -> DVector<f64> {
        self.std.component_mul(&self.std)
    }

    /// `E|w|²` in the norm the model is normalized in.
    pub fn expected_norm_squared(&self) -> f64 {
        self.variances().dot(&self.norm_weights)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> State {
        State::from_fn(self.dim(), |i, _| {
            let s = self.std[i];
            if s == 0.0 {
                0.0
            } else {
                s * rng.sample::<f64, _>(StandardNormal)
            }
        })
    }
}

/// Law of the initial condition `v_0`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// Independent `N(mean_i, std_i²)` entries.
    Gaussian {
        mean: State,
        std: State,
    },
    Fixed(State),
}

impl InitialCondition {
    pub fn standard(dim: usize) -> Self {
        InitialCondition::Gaussian { mean: State::zeros(dim), std: State::from_element(dim, 1.0) }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialCondition::Gaussian { mean, .. } => mean.len(),
            InitialCondition::Fixed(v) => v.len(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> State {
        match self {
            InitialCondition::Gaussian { mean, std } => {
                State::from_fn(mean.len(), |i, _| mean[i] + std[i] * rng.sample::<f64, _>(StandardNormal))
            }
            InitialCondition::Fixed(v) => v.clone(),
        }
    }
}

/// Observations `y_1, …, y_J` (there is no `y_0`).
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub observations: Vec<State>,
}

impl ObservationSequence {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// `y_j` for `j ≥ 1`.
    pub fn get(&self, j: usize) -> Option<&State> {
        j.checked_sub(1).and_then(|i| self.observations.get(i))
    }

    /// CSV with columns `j,index,value`, one row per observed entry.
    pub fn write_csv<W: Write>(&self, op: &ObservationOperator, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "index", "value"])?;
        for (idx, y) in self.observations.iter().enumerate() {
            for &i in op.observed() {
                w.write_record(&[(idx + 1).to_string(), i.to_string(), format!("{:e}", y[i])])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(op: &ObservationOperator, epsilon: f64, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["j", "index", "value"] {
            return Err(Error::Parse(format!("unexpected observation header {headers:?}")));
        }
        let mut observations: Vec<State> = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let parse_err = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 2));
            let j: usize = record[0].trim().parse().map_err(|_| parse_err("j"))?;
            let i: usize = record[1].trim().parse().map_err(|_| parse_err("index"))?;
            let v: f64 = record[2].trim().parse().map_err(|_| parse_err("value"))?;
            if j == 0 {
                return Err(parse_err("j (observations start at 1)"));
            }
            if i >= op.dim() || !op.is_observed(i) {
                return Err(Error::Parse(format!("row {}: index {i} is not observed", line + 2)));
            }
            while observations.len() < j {
                observations.push(State::zeros(op.dim()));
            }
            observations[j - 1][i] = v;
        }
        Ok(Self { epsilon, seed: None, observations })
    }
}

/// Signal trajectory `v_0 … v_J` together with `y_1 … y_J`. The signal
/// only consumes `signal_rng`, the noise only `noise_rng`, so the truth does
/// not depend on `epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn generate_truth_and_observations(
    model: &DissipativeModel,
    op: &ObservationOperator,
    noise: &NoiseModel,
    init: &InitialCondition,
    epsilon: f64,
    steps: usize,
    h: f64,
    signal_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
) -> Result<(Vec<State>, ObservationSequence)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one observation is required".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise strength must be nonnegative, got {epsilon}")));
    }
    check_dim(model.dim(), op.dim())?;
    check_dim(model.dim(), noise.dim())?;
    check_dim(model.dim(), init.dim())?;
    let v0 = init.sample(signal_rng);
    let mut ws = Workspace::new(model.dim());
    let mut truth = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps);
    let mut v = v0.clone();
    truth.push(v0);
    for _ in 0..steps {
        model.step_in_place(v.as_mut_slice(), h, &mut ws)?;
        let w = noise.sample(noise_rng);
        observations.push(op.project(&v) + w * epsilon);
        truth.push(v.clone());
    }
    Ok((truth, ObservationSequence { epsilon, seed: None, observations }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lorenz63;
    use crate::rng::substream;

    #[test]
    fn coordinate_projection_masks() {
        let p = coordinate_projection(3, &[0]).unwrap();
        let u = State::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.project(&u).as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(p.complement(&u).as_slice(), &[0.0, 2.0, 3.0]);
        let full = coordinate_projection(3, &[0, 1, 2]).unwrap();
        assert_eq!(full.project(&u), u);
        assert_eq!(full.complement(&u), State::zeros(3));
    }

    #[test]
    fn coordinate_projection_errors() {
        assert!(coordinate_projection(3, &[]).is_err());
        assert!(coordinate_projection(3, &[3]).is_err());
        assert!(coordinate_projection(3, &[1, 1]).is_err());
    }

    #[test]
    fn every_third_pattern() {
        let p = every_third_unobserved(6).unwrap();
        assert_eq!(p.observed(), &[0, 1, 3, 4]);
        assert_eq!(every_third_unobserved(60).unwrap().n_observed(), 40);
        assert!(every_third_unobserved(7).is_err());
    }

    #[test]
    fn every_third_commutes_with_shift_by_three() {
        let d = 12;
        let p = every_third_unobserved(d).unwrap().matrix();
        let shift = DMatrix::from_fn(d, d, |i, j| if j == (i + 3) % d { 1.0 } else { 0.0 });
        assert_eq!(&p * &shift, &shift * &p);
        assert_eq!(p.rank(1e-12), 2 * d / 3);
    }

    #[test]
    fn selection_and_embed_agree_with_projection() {
        let p = every_third_unobserved(9).unwrap();
        let h = p.selection();
        assert_eq!(h.transpose() * &h, p.matrix());
        let u = State::from_fn(9, |i, _| i as f64 - 4.0);
        assert_eq!(p.embed(&p.restrict(&u)), p.project(&u));
    }

    #[test]
    fn l63_noise_is_unit_on_first_coordinate() {
        let p = coordinate_projection(3, &[0]).unwrap();
        let noise = NoiseModel::new(&p, NoiseLaw::Normalized);
        assert_eq!(noise.variances().as_slice(), &[1.0, 0.0, 0.0]);
        let mut rng = substream(1, &[], "t");
        let w = noise.sample(&mut rng);
        assert_eq!((w[1], w[2]), (0.0, 0.0));
    }

    #[test]
    fn noise_free_observations_are_exact_projections() {
        let model = lorenz63();
        let p = coordinate_projection(3, &[0]).unwrap();
        let noise = NoiseModel::new(&p, NoiseLaw::Normalized);
        let init = InitialCondition::standard(3);
        let (truth, obs) = generate_truth_and_observations(
            &model,
            &p,
            &noise,
            &init,
            0.0,
            20,
            0.01,
            &mut substream(1, &[], "s"),
            &mut substream(1, &[], "n"),
        )
        .unwrap();
        assert_eq!(truth.len(), 21);
        assert_eq!(obs.len(), 20);
        for j in 1..=20 {
            assert_eq!(obs.get(j).unwrap(), &p.project(&truth[j]));
        }
        assert!(obs.get(0).is_none());
    }
}

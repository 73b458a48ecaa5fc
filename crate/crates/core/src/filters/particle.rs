use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::run::{EstimatorKind, FilterRun};
use crate::dynamics::{DissipativeModel, State, Workspace};
use crate::error::{check_dim, Error, Result};
use crate::observation::{InitialCondition, NoiseModel, ObservationOperator};

/// Log-weights below this relative to zero underflow as plain weights.
const UNDERFLOW_LOG: f64 = -708.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleConfig {
    pub n_particles: usize,
    /// Resample when ESS falls below this fraction of `n_particles`.
    pub resample_fraction: f64,
    /// Standard deviation of Gaussian perturbations added after each
    /// resampling. Zero keeps the exact bootstrap filter.
    pub jitter: f64,
}

impl ParticleConfig {
    pub fn new(n_particles: usize) -> Self {
        Self { n_particles, resample_fraction: 0.5, jitter: 0.0 }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }
}

/// Bootstrap particle filter on the deterministic signal. Particles move
/// through `Ψ_h` in parallel; weights and resampling draw from `rng` in a
/// fixed order, so results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn particle_filter(
    model: &DissipativeModel,
    op: &ObservationOperator,
    noise: &NoiseModel,
    epsilon: f64,
    h: f64,
    config: &ParticleConfig,
    init: &InitialCondition,
    observations: &[State],
    rng: &mut impl Rng,
) -> Result<FilterRun> {
    let d = model.dim();
    check_dim(d, op.dim())?;
    check_dim(d, noise.dim())?;
    check_dim(d, init.dim())?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("particle filter needs ε > 0, got {epsilon}")));
    }
    let n = config.n_particles;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 particles, got {n}")));
    }
    if !(config.jitter >= 0.0) {
        return Err(Error::InvalidArgument(format!("jitter must be nonnegative, got {}", config.jitter)));
    }
    // precision of the observation noise on each observed coordinate
    let precision: Vec<(usize, f64)> =
        op.observed().iter().map(|&i| (i, 1.0 / (epsilon * noise.std()[i]).powi(2))).collect();

    let mut particles: Vec<State> = (0..n).map(|_| init.sample(rng)).collect();
    let mut log_w = vec![0.0; n];
    let mut weights = vec![1.0 / n as f64; n];

    let mut run = FilterRun::new(EstimatorKind::Particle);
    let (mean, trace) = moments(&particles, &weights);
    run.push_particle(mean, n as f64, trace);

    for (step, y) in observations.iter().enumerate() {
        check_dim(d, y.len())?;
        particles
            .par_iter_mut()
            .try_for_each_init(|| Workspace::new(d), |ws, p| model.step_in_place(p.as_mut_slice(), h, ws))?;

        for (lw, p) in log_w.iter_mut().zip(&particles) {
            *lw += -0.5 * precision.iter().map(|&(i, prec)| prec * (y[i] - p[i]).powi(2)).sum::<f64>();
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::WeightCollapse { step: step + 1 });
        }
        if max < UNDERFLOW_LOG {
            run.degenerate_steps.push(step + 1);
        }
        let mut total = 0.0;
        for (w, lw) in weights.iter_mut().zip(log_w.iter_mut()) {
            *lw -= max;
            *w = lw.exp();
            total += *w;
        }
        for w in &mut weights {
            *w /= total;
        }
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let (mean, trace) = moments(&particles, &weights);
        run.push_particle(mean, ess, trace);

        if ess < config.resample_fraction * n as f64 {
            particles = systematic_resample(&particles, &weights, rng);
            if config.jitter > 0.0 {
                for p in &mut particles {
                    for x in p.iter_mut() {
                        *x += config.jitter * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            log_w.iter_mut().for_each(|w| *w = 0.0);
            weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
        }
    }
    Ok(run)
}

/// Weighted mean and trace of the weighted covariance.
fn moments(particles: &[State], weights: &[f64]) -> (State, f64) {
    let d = particles[0].len();
    let mut mean = State::zeros(d);
    for (p, &w) in particles.iter().zip(weights) {
        mean.axpy(w, p, 1.0);
    }
    let trace = particles.iter().zip(weights).map(|(p, &w)| w * (p - &mean).norm_squared()).sum();
    (mean, trace)
}

/// One uniform offset, `n` evenly spaced pointers into the weight CDF.
pub fn systematic_resample(particles: &[State], weights: &[f64], rng: &mut impl Rng) -> Vec<State> {
    let n = particles.len();
    let u0: f64 = rng.gen::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cdf = weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cdf && j + 1 < n {
            j += 1;
            cdf += weights[j];
        }
        out.push(particles[j].clone());
    }
    out
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::{EstimatorSpec, ExperimentConfig, FilterStart, GainSpec, MseMode, Setup};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::filters::{
    default_gamma, kalman_gain_3dvar, particle_filter, project_ball_v, EstimatorKind, FilterRun, GainOperator,
    Observer, ParticleConfig,
};
use crate::observation::generate_truth_and_observations;
use crate::rng::{purpose, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub filter: String,
    pub epsilon: f64,
    pub mse: f64,
    pub stderr: f64,
    pub n_trials: usize,
    pub excluded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// 95% confidence half-width.
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub rows: Vec<MseRow>,
    /// Fitted `log MSE` vs `log ε` slope per filter, where defined.
    pub slopes: Vec<(String, SlopeFit)>,
    pub config: ExperimentConfig,
}

impl MseReport {
    pub fn row(&self, filter: &str, epsilon: f64) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.filter == filter && r.epsilon == epsilon)
    }

    pub fn slope(&self, filter: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|(f, _)| f == filter).map(|(_, s)| s)
    }
}

/// Least-squares slope of `log MSE` against `log ε`.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(e, m)| !(e > 0.0) || !(m > 0.0)) {
        return Err(Error::InvalidArgument("ε and MSE must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("ε values must be distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = n - 2.0;
    let stderr = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("dof ≥ 1").inverse_cdf(0.975);
    Ok(SlopeFit { slope, intercept, stderr, half_width: t * stderr })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimator_kind(spec: EstimatorSpec) -> EstimatorKind {
    match spec {
        EstimatorSpec::Observer => EstimatorKind::Observer,
        EstimatorSpec::Truncated => EstimatorKind::TruncatedObserver,
        EstimatorSpec::Particle => EstimatorKind::Particle,
    }
}

/// The gain for a given `ε`.
pub fn build_gain(config: &ExperimentConfig, setup: &Setup, epsilon: f64) -> Result<GainOperator> {
    match config.filter.gain {
        GainSpec::Identity => Ok(GainOperator::IdentityOnObserved),
        GainSpec::ThreeDVar { background_variance } => {
            let d = setup.model.dim();
            let c = nalgebra::DMatrix::identity(d, d) * background_variance;
            kalman_gain_3dvar(&c, &setup.op, &default_gamma(&setup.op), epsilon)
        }
    }
}

/// Everything needed to replay one trial: truth, observations, estimates.
pub struct Trial {
    pub truth: Vec<State>,
    pub observations: Vec<State>,
    pub runs: Vec<Result<FilterRun>>,
}

/// Trial `(init, noise_seq)` at noise level `ε`. The truth depends on
/// `(seed, init)` only and the noise on `(seed, init, noise_seq)`, so
/// different `ε` share random numbers.
pub fn run_trial(
    config: &ExperimentConfig,
    setup: &Setup,
    epsilon: f64,
    eps_index: usize,
    init: usize,
    noise_seq: usize,
) -> Result<Trial> {
    let exp = config.experiment()?;
    let steps = exp.steps()?;
    let seed = exp.seed;
    let (i, s, e) = (init as u64, noise_seq as u64, eps_index as u64);
    let (truth, obs) = generate_truth_and_observations(
        &setup.model,
        &setup.op,
        &setup.noise,
        &setup.init,
        epsilon,
        steps,
        exp.h,
        &mut substream(seed, &[i], purpose::SIGNAL),
        &mut substream(seed, &[i, s], purpose::NOISE),
    )?;
    let gain = build_gain(config, setup, epsilon)?;
    let start = match config.filter.start {
        FilterStart::Zero => State::zeros(setup.model.dim()),
        FilterStart::PriorDraw => {
            let draw = setup.init.sample(&mut substream(seed, &[i, s], purpose::FILTER_START));
            project_ball_v(&setup.vnorm, setup.radius, &draw)
        }
    };
    let runs = config
        .filter
        .estimators
        .iter()
        .map(|&spec| {
            let kind = estimator_kind(spec);
            let mut run = match spec {
                EstimatorSpec::Observer | EstimatorSpec::Truncated => {
                    let mut observer = Observer::new(&setup.model, &setup.op, &gain, exp.h)?;
                    if spec == EstimatorSpec::Truncated {
                        observer = observer.truncated(&setup.vnorm, setup.radius)?;
                    }
                    FilterRun::from_estimates(kind, observer.run(&start, &obs.observations)?)
                }
                EstimatorSpec::Particle => {
                    let pc = ParticleConfig::new(config.filter.particles).with_jitter(config.filter.jitter);
                    particle_filter(
                        &setup.model,
                        &setup.op,
                        &setup.noise,
                        epsilon,
                        exp.h,
                        &pc,
                        &setup.init,
                        &obs.observations,
                        &mut substream(seed, &[i, s, e], purpose::PARTICLES),
                    )?
                }
            };
            run.score_with(&truth, |x| setup.model.norm_squared(x))?;
            Ok(run)
        })
        .collect();
    Ok(Trial { truth, observations: obs.observations, runs })
}

fn trial_error(run: &FilterRun, mode: MseMode) -> f64 {
    match mode {
        MseMode::Final => *run.sq_errors.last().expect("scored run"),
        MseMode::TimeAverage => {
            let tail = &run.sq_errors[run.sq_errors.len() / 2..];
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

/// Monte Carlo MSE for every `ε` and estimator. Trials run in parallel and
/// are reduced in index order, so the report does not depend on scheduling.
/// Trials that fail numerically are excluded and counted; any other error
/// aborts the experiment.
pub fn run_mse_experiment(config: &ExperimentConfig) -> Result<MseReport> {
    config.validate()?;
    let setup = config.setup()?;
    let exp = config.experiment()?;
    let n_trials = exp.n_inits * exp.n_noise;
    let tasks: Vec<(usize, usize)> = (0..exp.epsilons.len()).flat_map(|e| (0..n_trials).map(move |t| (e, t))).collect();

    let outcomes: Vec<Result<Vec<Option<f64>>>> = tasks
        .par_iter()
        .map(|&(e, t)| {
            let n_est = config.filter.estimators.len();
            match run_trial(config, &setup, exp.epsilons[e], e, t / exp.n_noise, t % exp.n_noise) {
                Ok(trial) => trial
                    .runs
                    .into_iter()
                    .map(|r| match r {
                        Ok(run) => Ok(Some(trial_error(&run, exp.mode))),
                        Err(err) if err.is_numerical() => Ok(None),
                        Err(err) => Err(err),
                    })
                    .collect(),
                Err(err) if err.is_numerical() => Ok(vec![None; n_est]),
                Err(err) => Err(err),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::with_capacity(n_trials); config.filter.estimators.len()]; exp.epsilons.len()];
    let mut excluded = vec![vec![0usize; config.filter.estimators.len()]; exp.epsilons.len()];
    for (&(e, _), outcome) in tasks.iter().zip(outcomes) {
        for (k, err) in outcome?.into_iter().enumerate() {
            match err {
                Some(x) => errors[e][k].push(x),
                None => excluded[e][k] += 1,
            }
        }
    }
    for (k, spec) in config.filter.estimators.iter().enumerate() {
        let name = estimator_kind(*spec).name().to_string();
        for (e, &epsilon) in exp.epsilons.iter().enumerate() {
            let (mse, stderr) = mean_and_stderr(&errors[e][k]);
            rows.push(MseRow {
                filter: name.clone(),
                epsilon,
                mse,
                stderr,
                n_trials: errors[e][k].len(),
                excluded: excluded[e][k],
            });
        }
    }
    let mut slopes = Vec::new();
    for spec in &config.filter.estimators {
        let name = estimator_kind(*spec).name();
        let points: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.filter == name && r.epsilon > 0.0).map(|r| (r.epsilon, r.mse)).collect();
        if let Ok(fit) = fit_scaling_exponent(&points) {
            slopes.push((name.to_string(), fit));
        }
    }
    Ok(MseReport { rows, slopes, config: config.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic_has_slope_two() {
        let pts: Vec<(f64, f64)> = [1.0, 0.1, 0.01].iter().map(|&e| (e, 3.0 * e * e)).collect();
        let fit = fit_scaling_exponent(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.half_width < 1e-6);
    }

    #[test]
    fn table_values_give_expected_slope() {
        let fit = fit_scaling_exponent(&[(1.0, 1.59), (0.1, 1.3e-2), (0.01, 4.93e-4)]).unwrap();
        let endpoints = (1.59f64 / 4.93e-4).ln() / 100f64.ln();
        assert!((fit.slope - endpoints).abs() < 0.05, "{} vs {endpoints}", fit.slope);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_scaling_exponent(&[(1.0, 1.0), (0.1, 0.01)]).is_err());
        assert!(fit_scaling_exponent(&[(1.0, 1.0), (0.1, 0.0), (0.01, 1e-4)]).is_err());
        assert!(fit_scaling_exponent(&[(1.0, 1.0), (1.0, 0.5), (1.0, 1e-4)]).is_err());
    }
}

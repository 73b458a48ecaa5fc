use std::io::Write;

use crate::dynamics::State;
use crate::error::{check_dim, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Observer,
    TruncatedObserver,
    Kalman,
    Particle,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Observer => "observer",
            EstimatorKind::TruncatedObserver => "truncated",
            EstimatorKind::Kalman => "kalman",
            EstimatorKind::Particle => "particle",
        }
    }
}

/// Estimates `est_0, …, est_J`, plus ensemble diagnostics for particle runs.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterRun {
    pub estimator: EstimatorKind,
    pub estimates: Vec<State>,
    /// `|v_j − est_j|²`, filled in by [`FilterRun::score`].
    pub sq_errors: Vec<f64>,
    pub ess: Vec<f64>,
    /// Trace of the posterior (ensemble or Kalman) covariance.
    pub posterior_trace: Vec<f64>,
    pub degenerate_steps: Vec<usize>,
}

impl FilterRun {
    pub fn new(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            estimates: Vec::new(),
            sq_errors: Vec::new(),
            ess: Vec::new(),
            posterior_trace: Vec::new(),
            degenerate_steps: Vec::new(),
        }
    }

    pub fn from_estimates(estimator: EstimatorKind, estimates: Vec<State>) -> Self {
        Self { estimates, ..Self::new(estimator) }
    }

    pub(crate) fn push_particle(&mut self, mean: State, ess: f64, trace: f64) {
        self.estimates.push(mean);
        self.ess.push(ess);
        self.posterior_trace.push(trace);
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_steps.is_empty()
    }

    /// Records squared errors against the truth `v_0, …, v_J`.
    pub fn score(&mut self, truth: &[State]) -> Result<()> {
        self.score_with(truth, |e| e.norm_squared())
    }

    /// As [`score`](Self::score) with a custom squared norm.
    pub fn score_with(&mut self, truth: &[State], norm_squared: impl Fn(&State) -> f64) -> Result<()> {
        check_dim(self.estimates.len(), truth.len())?;
        self.sq_errors = self.estimates.iter().zip(truth).map(|(e, v)| norm_squared(&(v - e))).collect();
        Ok(())
    }

    pub fn final_sq_error(&self) -> Option<f64> {
        self.sq_errors.last().copied()
    }

    /// Columns `j, est_0 … est_{d−1}, sq_error`, then `ess, trace` for runs
    /// that carry them.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.estimates.first().map_or(0, |e| e.len());
        let ensemble = !self.ess.is_empty();
        let mut header = vec!["j".to_string()];
        header.extend((0..d).map(|i| format!("est_{i}")));
        header.push("sq_error".into());
        if ensemble {
            header.push("ess".into());
            header.push("trace".into());
        }
        w.write_record(&header)?;
        for (j, est) in self.estimates.iter().enumerate() {
            let mut row = vec![j.to_string()];
            row.extend(est.iter().map(|x| format!("{x:e}")));
            row.push(self.sq_errors.get(j).map_or(String::new(), |e| format!("{e:e}")));
            if ensemble {
                row.push(format!("{:e}", self.ess[j]));
                row.push(format!("{:e}", self.posterior_trace[j]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

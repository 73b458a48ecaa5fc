use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{DissipativeModel, State, Workspace};
use crate::error::{check_dim, Error, Result};
use crate::filters::{GainOperator, VNorm};
use crate::observation::ObservationOperator;

/// Counts of squeezing ratios in equal bins on `[0, upper)`, with an
/// overflow bin for ratios `≥ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub upper: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(ratios: &[f64], bins: usize, upper: f64) -> Self {
        let mut counts = vec![0; bins.max(1)];
        let mut overflow = 0;
        let last = counts.len() - 1;
        let width = upper / counts.len() as f64;
        for &r in ratios {
            if r >= upper {
                overflow += 1;
            } else {
                counts[((r / width) as usize).min(last)] += 1;
            }
        }
        Self { upper, counts, overflow }
    }

    pub fn width(&self) -> f64 {
        self.upper / self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// Columns `bin_lower, count`; the overflow bin is labelled with `upper`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lower", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record(&[format!("{}", i as f64 * self.width()), c.to_string()])?;
        }
        w.write_record(&[format!("{}", self.upper), self.overflow.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SqueezeProbe {
    /// Largest observed `V((I − DP)(Ψ(v) − Ψ(u))) / V(v − u)`.
    pub alpha_hat: f64,
    pub ratios: Vec<f64>,
    pub histogram: Histogram,
}

impl SqueezeProbe {
    fn from_ratios(ratios: Vec<f64>, bins: usize) -> Self {
        let alpha_hat = ratios.iter().copied().fold(0.0, f64::max);
        let histogram = Histogram::new(&ratios, bins, 2.0);
        Self { alpha_hat, ratios, histogram }
    }
}

/// Radii of the two sampling balls: `v` is uniform in `{|v| ≤ r}` (the
/// model's phase-space norm) and `u` uniform in `{V^{1/2} ≤ R}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeBalls {
    pub absorbing: f64,
    pub truncation: f64,
}

struct Pairs {
    diff: Vec<State>,
    forecast_diff: Vec<State>,
}

fn sample_pairs(
    model: &DissipativeModel,
    vnorm: &VNorm,
    h: f64,
    balls: ProbeBalls,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<Pairs> {
    check_dim(model.dim(), vnorm.dim())?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let phase = VNorm::diagonal(model.norm_weights())?;
    let pairs: Vec<(State, State)> = (0..n_samples)
        .map(|_| (phase.sample_ball(balls.absorbing, rng), vnorm.sample_ball(balls.truncation, rng)))
        .collect();
    let forecast_diff = pairs
        .par_iter()
        .map_init(
            || Workspace::new(model.dim()),
            |ws, (v, u)| {
                let mut pv = v.clone();
                let mut pu = u.clone();
                model.step_in_place(pv.as_mut_slice(), h, ws)?;
                model.step_in_place(pu.as_mut_slice(), h, ws)?;
                Ok(pv - pu)
            },
        )
        .collect::<Result<Vec<State>>>()?;
    let diff = pairs.into_iter().map(|(v, u)| v - u).collect();
    Ok(Pairs { diff, forecast_diff })
}

fn ratios(pairs: &Pairs, op: &ObservationOperator, gain: &GainOperator, vnorm: &VNorm) -> Vec<f64> {
    pairs
        .diff
        .iter()
        .zip(&pairs.forecast_diff)
        .map(|(d, fd)| {
            let mut x = fd.clone();
            gain.apply_complement(op, &mut x);
            vnorm.value(&x) / vnorm.value(d)
        })
        .collect()
}

/// Samples `n_samples` pairs and records the squeezing ratio of each.
/// `α̂ < 1` supports, but does not prove, squeezing at this `h`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_squeezing(
    model: &DissipativeModel,
    op: &ObservationOperator,
    gain: &GainOperator,
    vnorm: &VNorm,
    h: f64,
    balls: ProbeBalls,
    n_samples: usize,
    bins: usize,
    rng: &mut impl Rng,
) -> Result<SqueezeProbe> {
    check_dim(model.dim(), op.dim())?;
    let pairs = sample_pairs(model, vnorm, h, balls, n_samples, rng)?;
    Ok(SqueezeProbe::from_ratios(ratios(&pairs, op, gain, vnorm), bins))
}

/// Squeezing under `D = I` on each of several observation operators, from
/// one shared set of sampled pairs.
#[allow(clippy::too_many_arguments)]
pub fn squeezing_scan(
    model: &DissipativeModel,
    ops: &[ObservationOperator],
    vnorm: &VNorm,
    h: f64,
    balls: ProbeBalls,
    n_samples: usize,
    bins: usize,
    rng: &mut impl Rng,
) -> Result<Vec<SqueezeProbe>> {
    let pairs = sample_pairs(model, vnorm, h, balls, n_samples, rng)?;
    ops.iter()
        .map(|op| {
            check_dim(model.dim(), op.dim())?;
            Ok(SqueezeProbe::from_ratios(ratios(&pairs, op, &GainOperator::IdentityOnObserved, vnorm), bins))
        })
        .collect()
}

/// Index of the first entry from which every later `α̂` is below one.
pub fn contraction_threshold(probes: &[SqueezeProbe]) -> Option<usize> {
    let first_bad_from_end = probes.iter().rposition(|p| p.alpha_hat >= 1.0);
    match first_bad_from_end {
        None if !probes.is_empty() => Some(0),
        Some(i) if i + 1 < probes.len() => Some(i + 1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_accounts_for_every_ratio() {
        let h = Histogram::new(&[0.0, 0.05, 0.5, 1.99, 2.0, 7.0], 20, 2.0);
        assert_eq!(h.total(), 6);
        assert_eq!(h.overflow, 2);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[19], 1);
    }

    #[test]
    fn threshold_index() {
        let probe = |a| SqueezeProbe { alpha_hat: a, ratios: vec![], histogram: Histogram::new(&[], 1, 2.0) };
        assert_eq!(contraction_threshold(&[probe(3.0), probe(1.2), probe(0.5), probe(0.4)]), Some(2));
        assert_eq!(contraction_threshold(&[probe(0.5), probe(1.2)]), None);
        assert_eq!(contraction_threshold(&[probe(0.5)]), Some(0));
    }
}

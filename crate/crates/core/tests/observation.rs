use std::f64::consts::PI;

use chaosda::dynamics::{lorenz63, lorenz96, SpectralNs, State};
use chaosda::observation::{
    coordinate_projection, every_third_unobserved, fourier_cutoff, generate_truth_and_observations, InitialCondition,
    NoiseLaw, NoiseModel, ObservationKind, ObservationSequence,
};
use chaosda::rng::substream;
use proptest::prelude::*;

fn empirical_second_moments(noise: &NoiseModel, weights: &State, n: usize, seed: u64) -> (f64, State) {
    let mut rng = substream(seed, &[], "noise-moments");
    let mut total = 0.0;
    let mut per_index = State::zeros(noise.dim());
    for _ in 0..n {
        let w = noise.sample(&mut rng);
        total += w.iter().zip(weights.iter()).map(|(x, c)| c * x * x).sum::<f64>();
        per_index += w.component_mul(&w);
    }
    (total / n as f64, per_index / n as f64)
}

#[test]
fn lorenz96_noise_is_normalized() {
    let op = every_third_unobserved(6).unwrap();
    let noise = NoiseModel::new(&op, NoiseLaw::Normalized);
    let ones = State::from_element(6, 1.0);
    let n = 100_000;
    let (mean, per_index) = empirical_second_moments(&noise, &ones, n, 1);
    assert!((0.99..=1.01).contains(&mean), "E|w|² = {mean}");
    for (i, (&emp, &var)) in per_index.iter().zip(noise.variances().iter()).enumerate() {
        // the sample mean of ξ² has standard error √(2/n)·σ²
        let se = (2.0 / n as f64).sqrt() * var;
        assert!((emp - var).abs() <= 3.0 * se, "index {i}: {emp} vs {var}");
    }
}

#[test]
fn unit_law_is_available() {
    let op = every_third_unobserved(6).unwrap();
    let noise = NoiseModel::new(&op, NoiseLaw::Unit);
    assert_eq!(noise.expected_norm_squared(), 4.0);
}

#[test]
fn spectral_noise_is_normalized_in_h1() {
    let ns = SpectralNs::new(0.1, 8, 2.0 * PI).unwrap();
    let op = fourier_cutoff(&ns, 10.0).unwrap();
    let noise = NoiseModel::spectral(&ns, &op).unwrap();
    assert!((noise.expected_norm_squared() - 1.0).abs() < 1e-12);
    let n = 100_000;
    let (mean, per_index) = empirical_second_moments(&noise, &ns.h1_weights(), n, 2);
    assert!((mean - 1.0).abs() <= 0.02, "E‖w‖² = {mean}");
    for (&emp, &var) in per_index.iter().zip(noise.variances().iter()) {
        let se = (2.0 / n as f64).sqrt() * var;
        assert!((emp - var).abs() <= 3.5 * se + 1e-300);
    }
}

#[test]
fn spectral_noise_variance_follows_k_squared() {
    // Re and Im of ξ_k each carry half of (k² n(λ))⁻¹
    let ns = SpectralNs::new(0.1, 4, 2.0 * PI).unwrap();
    let op = fourier_cutoff(&ns, 2.0).unwrap();
    let noise = NoiseModel::spectral(&ns, &op).unwrap();
    let n_lambda = 8.0;
    for &i in op.observed() {
        let k2 = ns.coordinate_k2(i);
        assert!((noise.variances()[i] - 0.5 / (k2 * n_lambda)).abs() < 1e-15);
    }
}

#[test]
fn fourier_cutoff_counts_modes() {
    let ns = SpectralNs::new(0.1, 8, 2.0 * PI).unwrap();
    let op = fourier_cutoff(&ns, 1.0).unwrap();
    assert_eq!(op.kind(), &ObservationKind::FourierCutoff { lambda: 1.0, n_lambda: 4 });
    // two conjugate pairs, each stored as one complex coefficient
    assert_eq!(op.n_observed(), 4);
    let full = fourier_cutoff(&ns, 2.0 * 64.0).unwrap();
    assert_eq!(full.n_observed(), ns.dim());
    assert!(fourier_cutoff(&ns, 0.5).is_err());
    assert!(fourier_cutoff(&ns, 0.0).is_err());
    let u = State::from_fn(ns.dim(), |i, _| i as f64 + 1.0);
    let q = op.complement(&u);
    for &i in op.observed() {
        assert_eq!(q[i], 0.0);
    }
}

#[test]
fn fourier_cutoff_respects_period() {
    // on a domain of period π the lattice points have k² = 4|n|²
    let ns = SpectralNs::new(0.1, 4, PI).unwrap();
    assert!(fourier_cutoff(&ns, 3.9).is_err());
    assert_eq!(fourier_cutoff(&ns, 4.0).unwrap().n_observed(), 4);
}

#[test]
fn truth_does_not_depend_on_epsilon() {
    let model = lorenz96(12).unwrap();
    let op = every_third_unobserved(12).unwrap();
    let noise = NoiseModel::new(&op, NoiseLaw::Normalized);
    let init = InitialCondition::standard(12);
    let run = |eps: f64| {
        generate_truth_and_observations(
            &model,
            &op,
            &noise,
            &init,
            eps,
            50,
            0.01,
            &mut substream(9, &[0], "signal"),
            &mut substream(9, &[0, 0], "noise"),
        )
        .unwrap()
    };
    let (t1, o1) = run(1.0);
    let (t2, o2) = run(0.1);
    let (t3, o3) = run(0.1);
    assert_eq!(t1, t2);
    assert_eq!((t2, o2.clone()), (t3, o3));
    for (j, (y1, y2)) in o1.observations.iter().zip(&o2.observations).enumerate() {
        // common noise: y = Pv + εw with the same w
        let w1 = (y1 - op.project(&t1[j + 1])) / 1.0;
        let w2 = (y2 - op.project(&t1[j + 1])) / 0.1;
        assert!((w1 - w2).amax() < 1e-9);
        assert_eq!(op.unobserved_residual(y1), 0.0);
    }
}

#[test]
fn observation_csv_round_trip() {
    let model = lorenz63();
    let op = coordinate_projection(3, &[0, 2]).unwrap();
    let noise = NoiseModel::new(&op, NoiseLaw::Normalized);
    let (_, obs) = generate_truth_and_observations(
        &model,
        &op,
        &noise,
        &InitialCondition::standard(3),
        0.3,
        25,
        0.01,
        &mut substream(1, &[], "s"),
        &mut substream(1, &[], "n"),
    )
    .unwrap();
    let mut buf = Vec::new();
    obs.write_csv(&op, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("j,index,value\n1,0,"));
    let back = ObservationSequence::read_csv(&op, 0.3, buf.as_slice()).unwrap();
    assert_eq!(back.observations, obs.observations);
}

#[test]
fn observation_csv_rejects_unobserved_index() {
    let op = coordinate_projection(3, &[0]).unwrap();
    let bad = "j,index,value\n1,1,0.5\n";
    assert!(ObservationSequence::read_csv(&op, 1.0, bad.as_bytes()).is_err());
    let zero = "j,index,value\n0,0,0.5\n";
    assert!(ObservationSequence::read_csv(&op, 1.0, zero.as_bytes()).is_err());
}

proptest! {
    #[test]
    fn projections_are_idempotent_and_orthogonal(
        mask in prop::collection::vec(any::<bool>(), 1..40),
        values in prop::collection::vec(-1e3f64..1e3, 40),
    ) {
        let observed: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
        prop_assume!(!observed.is_empty());
        let op = coordinate_projection(mask.len(), &observed).unwrap();
        let u = State::from_fn(mask.len(), |i, _| values[i]);
        let pu = op.project(&u);
        prop_assert_eq!(op.project(&pu), pu.clone());
        let qu = op.complement(&u);
        prop_assert_eq!(&pu + &qu, u);
        prop_assert_eq!(pu.dot(&qu), 0.0);
    }

    #[test]
    fn noise_lives_on_observed_coordinates(seed in any::<u64>()) {
        let op = every_third_unobserved(9).unwrap();
        let noise = NoiseModel::new(&op, NoiseLaw::Normalized);
        let w = noise.sample(&mut substream(seed, &[], "w"));
        prop_assert_eq!(op.project(&w), w.clone());
        prop_assert_eq!(op.unobserved_residual(&w), 0.0);
    }
}

mod common;

use chaosda::linear::{
    contractive_norm, detectability_shift_equivalence, find_gain, hautus_detectable, spectral_radius, UNIT_TOL,
};
use chaosda::rng::substream;
use common::{char_poly, distinct_eigenvalues, exact_detectable, fixtures, schur_stable, Q};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Gelfand's formula `ρ = lim ‖L^k‖^{1/k}` by repeated squaring.
fn gelfand_radius(l: &DMatrix<f64>) -> f64 {
    let mut a = l.clone();
    let mut log_norm = 0.0;
    let mut k = 1.0;
    for _ in 0..20 {
        a = &a * &a;
        k *= 2.0;
        let n = a.norm();
        if n == 0.0 {
            return 0.0;
        }
        log_norm = 2.0 * log_norm + n.ln();
        a /= n;
    }
    (log_norm / k).exp()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

#[test]
fn oracle_sanity() {
    let q = |x: i64| Q::from_integer(BigInt::from(x));
    // (z − 2)(z − 1/2)·2 = 2z² − 5z + 2
    assert!(!schur_stable(&[q(2), q(-5), q(2)]));
    // 4z² − 1
    assert!(schur_stable(&[q(-1), q(0), q(4)]));
    // z² + 1: roots on the circle
    assert!(!schur_stable(&[q(1), q(0), q(1)]));
    let c = char_poly(&vec![vec![q(1), q(2)], vec![q(3), q(4)]]);
    assert_eq!(c, vec![q(-2), q(-5), q(1)]);
    assert!(!exact_detectable(&[vec![2, 0], vec![0, 0]], &[vec![0, 1]]));
    assert!(exact_detectable(&[vec![2, 0], vec![0, 0]], &[vec![1, 0]]));
    assert!(!distinct_eigenvalues(&[vec![1, 1], vec![0, 1]]));
    assert!(distinct_eigenvalues(&[vec![1, 1], vec![0, 2]]));
}

#[test]
fn hautus_matches_exact_oracle_on_integer_fixtures() {
    let set = fixtures(240);
    let mut undetectable = 0;
    for (n, f) in set.iter().enumerate() {
        let exact = exact_detectable(&f.l, &f.p);
        let numeric = hautus_detectable(&f.l(), &f.p(), UNIT_TOL).unwrap();
        assert_eq!(numeric.detectable, exact, "fixture {n}: {f:?}");
        assert_eq!(numeric.witness.is_none(), numeric.detectable);
        if let Some(w) = numeric.witness {
            assert!(w.norm() >= 1.0 - UNIT_TOL);
        }
        undetectable += usize::from(!exact);
    }
    // the set exercises both verdicts
    assert!(undetectable > 20 && undetectable < 220, "{undetectable}");
}

#[test]
fn shift_equivalence_on_fixtures_and_random_pairs() {
    for f in fixtures(240) {
        assert!(detectability_shift_equivalence(&f.l(), &f.p()).unwrap());
    }
    let mut rng = substream(1, &[], "shift");
    for _ in 0..100 {
        let d = rng.gen_range(2..=5);
        let mut l = random_matrix(&mut rng, d, d);
        let k = rng.gen_range(1..d);
        for i in 0..k {
            for j in k..d {
                l[(i, j)] = 0.0;
            }
        }
        let p = DMatrix::from_fn(k, d, |i, j| f64::from(i == j));
        assert!(detectability_shift_equivalence(&l, &p).unwrap());
    }
}

#[test]
fn spectral_radius_matches_gelfand_formula() {
    let mut rng = substream(2, &[], "gelfand");
    for _ in 0..50 {
        let d = rng.gen_range(1..=6);
        let l = random_matrix(&mut rng, d, d);
        let rho = spectral_radius(&l).unwrap();
        assert!((rho - gelfand_radius(&l)).abs() <= 1e-3 * rho.max(1e-3), "{rho} vs {}", gelfand_radius(&l));
    }
}

fn check_contraction(m: &DMatrix<f64>, samples: usize, seed: u64) {
    let norm = contractive_norm(m).unwrap();
    assert!(norm.alpha < 1.0);
    let mut rng = substream(seed, &[], "contraction");
    for _ in 0..samples {
        let x = DVector::from_fn(m.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = norm.value(&x);
        assert!(norm.value(&(m * &x)) <= norm.alpha * v * (1.0 + 1e-12));
    }
}

#[test]
fn gain_search_succeeds_on_detectable_diagonalizable_fixtures() {
    let mut checked = 0;
    for (n, f) in fixtures(240).iter().enumerate() {
        if !exact_detectable(&f.l, &f.p) || !distinct_eigenvalues(&f.l) {
            continue;
        }
        let (l, p) = (f.l(), f.p());
        let shifted = &p * &l;
        let g = find_gain(&l, &shifted, 20_000).unwrap();
        assert!(g.success(), "fixture {n}: ρ = {}", g.rho);
        // with the shifted observation the error map is (I − DP)L
        let m = (DMatrix::identity(4, 4) - &g.gain * &p) * &l;
        assert!((spectral_radius(&m).unwrap() - g.rho).abs() < 1e-9);
        check_contraction(&m, 10_000, n as u64);
        checked += 1;
    }
    assert!(checked > 20, "{checked}");
}

#[test]
fn gain_search_fails_on_undetectable_fixtures() {
    for f in fixtures(240).iter().filter(|f| !exact_detectable(&f.l, &f.p)).take(20) {
        let g = find_gain(&f.l(), &f.p(), 2_000).unwrap();
        assert!(!g.success(), "{f:?}: ρ = {}", g.rho);
    }
}

#[test]
fn rotation_gain_certifies_squeezing() {
    let c = std::f64::consts::FRAC_PI_4.cos() * 1.1;
    let l = DMatrix::from_row_slice(2, 2, &[c, -c, c, c]);
    let p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let g = find_gain(&l, &p, 5_000).unwrap();
    assert!(g.success());
    check_contraction(&(&l - &g.gain * &p), 10_000, 9);
}

#[test]
fn jordan_block_contracts_in_constructed_norm_only() {
    let m = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
    assert!(m.clone().svd(false, false).singular_values.max() > 1.0);
    check_contraction(&m, 1_000, 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contractive_norm_bounds_every_step(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = substream(seed, &[], "m");
        let a = random_matrix(&mut rng, d, d);
        let rho = spectral_radius(&a).unwrap();
        prop_assume!(rho > 1e-6);
        let m = a * (0.95 / rho);
        let norm = contractive_norm(&m).unwrap();
        prop_assert!(norm.alpha < 1.0);
        for _ in 0..100 {
            let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            prop_assert!(norm.value(&(&m * &x)) <= norm.alpha * norm.value(&x) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn full_observation_is_always_detectable(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = substream(seed, &[], "full");
        let l = random_matrix(&mut rng, d, d) * 3.0;
        let p = DMatrix::identity(d, d);
        prop_assert!(hautus_detectable(&l, &p, UNIT_TOL).unwrap().detectable);
        prop_assert!(find_gain(&l, &p, 500).unwrap().success());
    }
}

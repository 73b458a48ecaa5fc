#![allow(dead_code)]

//! Exact rational detectability oracle and the integer fixture set shared by
//! the linear-theory and acceptance tests.

use chaosda::rng::substream;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;

pub type Q = BigRational;

fn q(x: i64) -> Q {
    Q::from_integer(BigInt::from(x))
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub l: Vec<Vec<i64>>,
    pub p: Vec<Vec<i64>>,
    /// Built with the observed block independent of the unobserved one.
    pub block_triangular: bool,
}

impl Fixture {
    pub fn l(&self) -> DMatrix<f64> {
        to_f64(&self.l)
    }

    pub fn p(&self) -> DMatrix<f64> {
        to_f64(&self.p)
    }
}

fn to_f64(rows: &[Vec<i64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j] as f64)
}

/// 4×4 integer pairs: the first half observe the leading `k` coordinates
/// with `L_OU = 0`, so the trailing block is invisible; the rest have dense
/// small-integer `P`.
pub fn fixtures(count: usize) -> Vec<Fixture> {
    let mut rng = substream(20, &[], "hautus-fixtures");
    let d = 4;
    (0..count)
        .map(|n| {
            let mut l: Vec<Vec<i64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-2..=2)).collect()).collect();
            if n < count / 2 {
                let k = 1 + n % 3;
                for row in l.iter_mut().take(k) {
                    for x in row.iter_mut().skip(k) {
                        *x = 0;
                    }
                }
                let p = (0..k).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
                Fixture { l, p, block_triangular: true }
            } else {
                let rows = rng.gen_range(1..=2);
                let p = (0..rows).map(|_| (0..d).map(|_| rng.gen_range(-1..=1)).collect()).collect();
                Fixture { l, p, block_triangular: false }
            }
        })
        .collect()
}

type Mat = Vec<Vec<Q>>;

fn rational(rows: &[Vec<i64>]) -> Mat {
    rows.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect()
}

fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).fold(Q::zero(), |s, t| s + &a[i][t] * &b[t][j])).collect()).collect()
}

/// Reduced row echelon form in place; returns the pivot columns.
fn rref(m: &mut Mat) -> Vec<usize> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(pr) = (r..rows).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, pr);
        let inv = Q::one() / &m[r][c];
        for x in m[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let sub = &f * &m[r][j];
                    m[i][j] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

/// Basis (as columns) of the kernel of `m`.
fn kernel(m: &Mat, cols: usize) -> Vec<Vec<Q>> {
    let mut e = m.clone();
    let pivots = rref(&mut e);
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![Q::zero(); cols];
            v[free] = Q::one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -e[r][free].clone();
            }
            v
        })
        .collect()
}

/// Largest `L`-invariant subspace inside `Ker P`: the kernel of the stacked
/// `P, PL, …, PL^{d−1}`.
fn unobservable_basis(l: &Mat, p: &Mat) -> Vec<Vec<Q>> {
    let d = l.len();
    let mut stacked = Vec::new();
    let mut block = p.clone();
    for _ in 0..d {
        stacked.extend(block.iter().cloned());
        block = mul(&block, l);
    }
    kernel(&stacked, d)
}

/// Matrix of `L` restricted to the span of `basis`.
fn restriction(l: &Mat, basis: &[Vec<Q>]) -> Mat {
    let d = l.len();
    let k = basis.len();
    // [B | LB] row-reduces to [I; 0 | X; 0] when the columns of B are independent
    let lb: Vec<Vec<Q>> =
        basis.iter().map(|b| (0..d).map(|i| (0..d).fold(Q::zero(), |s, t| s + &l[i][t] * &b[t])).collect()).collect();
    let mut aug: Mat =
        (0..d).map(|i| basis.iter().map(|b| b[i].clone()).chain(lb.iter().map(|v| v[i].clone())).collect()).collect();
    rref(&mut aug);
    (0..k).map(|i| aug[i][k..].to_vec()).collect()
}

/// Characteristic polynomial coefficients `c_0, …, c_n` (monic) by
/// Faddeev–LeVerrier.
pub fn char_poly(a: &Mat) -> Vec<Q> {
    let n = a.len();
    let mut c = vec![Q::zero(); n + 1];
    c[n] = Q::one();
    let mut m: Mat = vec![vec![Q::zero(); n]; n];
    for k in 1..=n {
        let mut next = mul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += &c[n + 1 - k];
        }
        m = next;
        let am = mul(a, &m);
        let tr = (0..n).fold(Q::zero(), |s, i| s + &am[i][i]);
        c[n - k] = -tr / q(k as i64);
    }
    c
}

/// Schur–Cohn: every root strictly inside the unit disk.
pub fn schur_stable(coeffs: &[Q]) -> bool {
    let mut a = coeffs.to_vec();
    while a.len() > 1 {
        let n = a.len() - 1;
        if a[0].abs() >= a[n].abs() {
            return false;
        }
        a = (0..n).map(|i| &a[n] * &a[i + 1] - &a[0] * &a[n - 1 - i]).collect();
    }
    true
}

/// Exact verdict: not detectable iff some eigenvector with `|λ| ≥ 1` lies in
/// `Ker P`, i.e. iff `L` restricted to the unobservable subspace has such an
/// eigenvalue.
pub fn exact_detectable(l: &[Vec<i64>], p: &[Vec<i64>]) -> bool {
    let (l, p) = (rational(l), rational(p));
    let basis = unobservable_basis(&l, &p);
    basis.is_empty() || schur_stable(&char_poly(&restriction(&l, &basis)))
}

/// `L` has `d` distinct eigenvalues (the characteristic polynomial is coprime
/// to its derivative), so it is diagonalizable over ℂ.
pub fn distinct_eigenvalues(l: &[Vec<i64>]) -> bool {
    let c = char_poly(&rational(l));
    let dc: Vec<Q> = (1..c.len()).map(|i| &c[i] * q(i as i64)).collect();
    poly_gcd_degree(c, dc) == 0
}

fn trim(mut p: Vec<Q>) -> Vec<Q> {
    while p.last().is_some_and(|x| x.is_zero()) {
        p.pop();
    }
    p
}

fn poly_gcd_degree(a: Vec<Q>, b: Vec<Q>) -> usize {
    let (mut a, mut b) = (trim(a), trim(b));
    while !b.is_empty() {
        // a mod b
        while a.len() >= b.len() && !a.is_empty() {
            let f = a.last().unwrap() / b.last().unwrap();
            let shift = a.len() - b.len();
            for (i, bi) in b.iter().enumerate() {
                let sub = &f * bi;
                a[i + shift] -= sub;
            }
            a = trim(a);
        }
        std::mem::swap(&mut a, &mut b);
    }
    a.len().saturating_sub(1)
}

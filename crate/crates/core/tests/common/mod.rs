#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, One, ToPrimitive, Zero};

/// Exact `(p, E)` with `x = p / 2^E`.
fn dyadic(x: f64) -> (BigInt, i64) {
    let (mantissa, exponent, sign) = Float::integer_decode(x);
    assert!(sign > 0);
    (BigInt::from(mantissa), -(exponent as i64))
}

/// Determinant of an integer matrix by Bareiss fraction-free elimination.
fn bareiss(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            let p = (k + 1..n).find(|&r| !m[r][k].is_zero()).expect("nonsingular");
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = v / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * m[n - 1][n - 1].clone()
}

/// `det [1/(l_i + l_j + 1)]` over `idx`, as `det(M) / prod L_i` times `2^{E |idx|}`,
/// returned as the exact pair `(det(M) * 2^{E |idx|}, prod L_i)`.
fn gram_det(p: &[BigInt], two_e: &BigInt, idx: &[usize]) -> (BigInt, BigInt) {
    let s = |i: usize, j: usize| &p[i] + &p[j] + two_e;
    let mut rows = Vec::with_capacity(idx.len());
    let mut scale = BigInt::one();
    for &i in idx {
        let li: BigInt = idx.iter().map(|&j| s(i, j)).product();
        rows.push(idx.iter().map(|&j| &li / s(i, j)).collect::<Vec<_>>());
        scale *= &li;
    }
    let mut num = bareiss(rows);
    for _ in 0..idx.len() {
        num *= two_e;
    }
    (num, scale)
}

/// `d_n = (det G / det G_{minor n})^{1/2}` for the raw Lebesgue Gram matrix, in exact arithmetic.
///
/// Every `f64` is a dyadic rational, so the determinant ratio is computed
/// without any rounding; only the final square root is taken in `f64`.
pub fn oracle_distance(lambdas: &[f64], n: usize) -> f64 {
    let parts: Vec<(BigInt, i64)> = lambdas.iter().map(|&x| dyadic(x)).collect();
    let e = parts.iter().map(|p| p.1).max().unwrap().max(0);
    let p: Vec<BigInt> = parts.iter().map(|(m, ei)| m << ((e - ei) as usize)).collect();
    let two_e = BigInt::one() << (e as usize);
    let all: Vec<usize> = (0..lambdas.len()).collect();
    let minor: Vec<usize> = all.iter().copied().filter(|&i| i != n).collect();
    let (num_f, den_f) = gram_det(&p, &two_e, &all);
    let (num_m, den_m) = gram_det(&p, &two_e, &minor);
    let ratio = BigRational::new(num_f * den_m, den_f * num_m);
    ratio.to_f64().expect("representable").sqrt()
}

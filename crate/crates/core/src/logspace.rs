//! Log-domain arithmetic helpers.
//!
//! Quantities such as `a^s` with `s ~ 1e40` and `a = 1 - 1e-39` are only
//! meaningful through their logarithms; everything here works on `ln` values
//! and sums in a fixed, index-ascending order so results do not depend on
//! thread count.

/// Pairwise summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// `ln(sum_i exp(x_i))`. Returns `-inf` for an empty input or all `-inf` terms,
/// `+inf` if any term is `+inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let shifted: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 - exp(x))` for `x <= 0`.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(1 - u) + u` for `u in [0, 1)`, accurate when `u` is tiny.
///
/// For `a = 1 - u` this is the excess `lambda * ln(a) + lambda * u` per unit
/// `lambda`, which is where the cancellation in `a^lambda ~ e^{-lambda u}` hides.
pub fn ln1m_plus(u: f64) -> f64 {
    if u < 1e-3 {
        // -(u^2/2 + u^3/3 + ...)
        let mut power = u * u;
        let mut acc = 0.0;
        let mut k = 2.0;
        loop {
            let t = power / k;
            acc += t;
            if t <= 1e-17 * acc {
                break;
            }
            power *= u;
            k += 1.0;
        }
        -acc
    } else {
        (-u).ln_1p() + u
    }
}

/// Stable `ln(a)` for `a = 1 - u`.
pub fn ln_one_minus(u: f64) -> f64 {
    (-u).ln_1p()
}

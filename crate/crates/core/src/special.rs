//! Gamma-function differences that stay accurate for huge arguments.

use statrs::function::gamma::ln_gamma;

const STIRLING_MIN: f64 = 20.0;
// B_{2k} / (2k (2k-1)) for k = 1..5
const STIRLING: [f64; 5] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
];

/// `ln Gamma(x + a) - ln Gamma(x)` for `x > 0`, `a >= 0`.
///
/// Uses the Stirling difference form for large `x`, which avoids the
/// catastrophic cancellation of subtracting two values of size `x ln x`.
pub fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    debug_assert!(x > 0.0 && a >= 0.0);
    if a == 0.0 {
        return 0.0;
    }
    if x < STIRLING_MIN {
        let shift = (STIRLING_MIN - x).ceil();
        let mut correction = 0.0;
        let mut j = 0.0;
        while j < shift {
            correction += (a / (x + j)).ln_1p();
            j += 1.0;
        }
        return stirling_difference(x + shift, a) - correction;
    }
    stirling_difference(x, a)
}

fn stirling_difference(x: f64, a: f64) -> f64 {
    let xa = x + a;
    let mut d = (x - 0.5) * (a / x).ln_1p() + a * xa.ln() - a;
    for (k, c) in STIRLING.iter().enumerate() {
        let p = (2 * k + 1) as i32;
        d += c * (xa.powi(-p) - x.powi(-p));
    }
    d
}

/// `ln B(a, b)`, accurate when one argument is huge.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (big, small) = if a >= b { (a, b) } else { (b, a) };
    ln_gamma(small) - ln_gamma_ratio(big, small)
}

/// `ln Gamma(x)`.
pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

/// `B(t, s) / (Gamma(s) t^{-s})`, which tends to 1 as `t -> infinity`.
pub fn beta_asymptotic_ratio(t: f64, s: f64) -> f64 {
    (s * t.ln() - ln_gamma_ratio(t, s)).exp()
}

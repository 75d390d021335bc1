//! `L^p` norms of Müntz polynomials, empirical embedding constants and the
//! per-function interpolation inequality.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::measure_gram;
use crate::error::{invalid, Result};
use crate::geometry::{lebesgue_gram, MuntzPolynomial};
use crate::logspace::pairwise_sum;
use crate::measures::Measure;
use crate::sequences::LambdaSequence;

/// Relative quadrature error above which an estimate is flagged.
pub const LP_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpMethod {
    AtomicSum,
    Gram,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpNormEstimate {
    pub p: f64,
    pub value: f64,
    /// Absolute error estimate of `value`.
    pub error: f64,
    pub converged: bool,
    pub method: LpMethod,
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p = {p} must satisfy 1 <= p < inf")));
    }
    Ok(())
}

/// `||f||_{L^p(mu)}`.
pub fn lp_norm(f: &MuntzPolynomial, p: f64, mu: &Measure) -> Result<LpNormEstimate> {
    check_p(p)?;
    if let Some(atoms) = mu.collect_atoms() {
        let terms: Vec<f64> = atoms.iter().map(|t| t.weight() * f.eval(t.position()).abs().powf(p)).collect();
        return Ok(LpNormEstimate {
            p,
            value: pairwise_sum(&terms).powf(1.0 / p),
            error: 0.0,
            converged: true,
            method: LpMethod::AtomicSum,
        });
    }
    if p == 2.0 && mu.is_lebesgue() {
        return Ok(LpNormEstimate {
            p,
            value: f.l2_norm_sq().max(0.0).sqrt(),
            error: 0.0,
            converged: true,
            method: LpMethod::Gram,
        });
    }
    lp_norm_by_quadrature(f, p, mu)
}

/// Sign changes of `f` on `(0, 1)`, located by bisection between grid sign flips.
pub fn sign_changes(f: &MuntzPolynomial) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..256).map(|i| i as f64 / 256.0).collect();
    grid.extend((9..60).map(|j| 1.0 - 0.5f64.powi(j)));
    grid.sort_by(f64::total_cmp);
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let fa = f.eval(a);
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa.signum() == f.eval(b).signum() {
            continue;
        }
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if f.eval(m).signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// `||f||_{L^p(mu)}` by adaptive quadrature of `|f|^p`, split at sign changes.
pub fn lp_norm_by_quadrature(f: &MuntzPolynomial, p: f64, mu: &Measure) -> Result<LpNormEstimate> {
    check_p(p)?;
    let breaks = sign_changes(f);
    let q = mu.integrate_with_breaks(&|x| f.eval(x).abs().powf(p), &breaks);
    let integral = q.value.max(0.0);
    let value = integral.powf(1.0 / p);
    let error = if integral > 0.0 { value * q.error / (p * integral) } else { q.error.powf(1.0 / p) };
    Ok(LpNormEstimate {
        p,
        value,
        error,
        converged: error <= LP_REL_TOL * value || error == 0.0,
        method: LpMethod::Quadrature,
    })
}

/// Best ratio `||f||_{L^p(mu)} / ||f||_p` found; a lower bound for `||i^p_mu||` at truncation `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalConstant {
    pub p: f64,
    pub n: usize,
    pub value: f64,
    /// Coefficients of the maximiser in the basis `lambda_n^{1/2} x^{lambda_n}`.
    pub coefficients: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub refined: bool,
}

pub const REFINE_SWEEPS: usize = 50;

/// Unit vectors: half uniform on the sphere, half weighted toward the last basis elements.
fn sample_directions(n: usize, samples: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|s| {
            let mut v: Vec<f64> = (0..n)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(rng);
                    if s % 2 == 1 {
                        z * 2f64.powi(i as i32 - n as i32 + 1)
                    } else {
                        z
                    }
                })
                .collect();
            normalize(&mut v);
            v
        })
        .collect()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else if let Some(last) = v.last_mut() {
        *last = 1.0;
    }
}

fn polynomial(lam: &[f64], v: &[f64]) -> Result<MuntzPolynomial> {
    MuntzPolynomial::new(lam, lam.iter().zip(v).map(|(l, c)| c * l.sqrt()).collect())
}

/// Ratio evaluator for one `(Lambda, mu, p)`.
enum Ratio<'a> {
    Quadratic { a: nalgebra::DMatrix<f64>, b: nalgebra::DMatrix<f64> },
    General { lam: &'a [f64], mu: &'a Measure, lebesgue: Measure, p: f64 },
}

impl Ratio<'_> {
    fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Ratio::Quadratic { a, b } => {
                let x = DVector::from_column_slice(v);
                let num = (x.transpose() * a * &x)[(0, 0)];
                let den = (x.transpose() * b * &x)[(0, 0)];
                if den > 0.0 {
                    (num.max(0.0) / den).sqrt()
                } else {
                    0.0
                }
            }
            Ratio::General { lam, mu, lebesgue, p } => {
                let Ok(f) = polynomial(lam, v) else { return 0.0 };
                let num = lp_norm(&f, *p, mu).map(|e| e.value).unwrap_or(0.0);
                let den = lp_norm(&f, *p, lebesgue).map(|e| e.value).unwrap_or(0.0);
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
        }
    }
}

/// Maximise `||f||_{L^p(mu)} / ||f||_p` over random polynomials, optionally refined by coordinate ascent.
pub fn empirical_embedding_constant(
    seq: &LambdaSequence,
    mu: &Measure,
    p: f64,
    n: usize,
    samples: usize,
    refine: bool,
    seed: u64,
) -> Result<EmpiricalConstant> {
    check_p(p)?;
    if samples == 0 {
        return Err(invalid("at least one sample is required"));
    }
    let seq = seq.truncate(n)?;
    let lam = seq.values();
    let ratio = if p == 2.0 {
        Ratio::Quadratic {
            a: measure_gram(&seq, mu)?.entries,
            b: lebesgue_gram(&seq, true).entries,
        }
    } else {
        Ratio::General {
            lam,
            mu,
            lebesgue: Measure::lebesgue(),
            p,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = sample_directions(n, samples, &mut rng);
    let values: Vec<f64> = dirs.par_iter().map(|v| ratio.eval(v)).collect();
    // first maximiser, so the result does not depend on scheduling
    let (best_idx, mut best) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    let mut v = dirs[best_idx].clone();
    if refine {
        let mut step = 0.5;
        for _ in 0..REFINE_SWEEPS {
            let mut improved = false;
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut w = v.clone();
                    w[i] += sign * step;
                    normalize(&mut w);
                    let r = ratio.eval(&w);
                    if r > best {
                        best = r;
                        v = w;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    Ok(EmpiricalConstant {
        p,
        n,
        value: best,
        coefficients: v,
        samples,
        seed,
        refined: refine,
    })
}

/// Where a certified embedding constant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    /// `||f||_{L^p(mu)} <= H^{1/p} ||f||_p` with `H` the supremum of the density.
    DensityBound,
    ZeroMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifiedConstant {
    pub p: f64,
    pub value: f64,
    pub source: ConstantSource,
}

/// A proven upper bound for `||i^p_mu||`, when one is available.
pub fn certified_constant(mu: &Measure, p: f64) -> Result<Option<CertifiedConstant>> {
    check_p(p)?;
    if matches!(mu, Measure::Zero) {
        return Ok(Some(CertifiedConstant {
            p,
            value: 0.0,
            source: ConstantSource::ZeroMeasure,
        }));
    }
    Ok(mu.sup_density().map(|h| CertifiedConstant {
        p,
        value: h.powf(1.0 / p),
        source: ConstantSource::DensityBound,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Verified,
    Violated,
    /// No certified endpoint constants; nothing was asserted.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterpolationSample {
    pub index: usize,
    /// `||f||_{L^{p_t}(mu)}`
    pub lhs: f64,
    /// `C_0^{1-t} C_1^t ||f||_{p_t}`
    pub rhs: f64,
    /// `(lhs - rhs) / rhs`
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationReport {
    pub p0: f64,
    pub p1: f64,
    pub t: f64,
    pub p_t: f64,
    pub c0: Option<CertifiedConstant>,
    pub c1: Option<CertifiedConstant>,
    pub outcome: CheckOutcome,
    pub samples: Vec<InterpolationSample>,
    pub violations: Vec<InterpolationSample>,
    pub max_slack: f64,
    pub seed: u64,
}

/// Relative slack tolerated before a sample counts as a violation.
pub const INTERPOLATION_SLACK: f64 = 1e-9;

/// `1/p_t = (1-t)/p_0 + t/p_1`.
pub fn interpolated_exponent(p0: f64, p1: f64, t: f64) -> f64 {
    1.0 / ((1.0 - t) / p0 + t / p1)
}

/// Check `||f||_{L^{p_t}(mu)} <= C_0^{1-t} C_1^t ||f||_{p_t}` on random polynomials.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_check(
    seq: &LambdaSequence,
    mu: &Measure,
    p0: f64,
    p1: f64,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<InterpolationReport> {
    check_p(p0)?;
    check_p(p1)?;
    if p0 >= p1 {
        return Err(invalid(format!("need p0 < p1, got {p0} and {p1}")));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid(format!("t = {t} must lie in (0, 1)")));
    }
    let p_t = interpolated_exponent(p0, p1, t);
    let c0 = certified_constant(mu, p0)?;
    let c1 = certified_constant(mu, p1)?;
    let mut report = InterpolationReport {
        p0,
        p1,
        t,
        p_t,
        c0,
        c1,
        outcome: CheckOutcome::Inconclusive,
        samples: Vec::new(),
        violations: Vec::new(),
        max_slack: f64::NEG_INFINITY,
        seed,
    };
    let (Some(k0), Some(k1)) = (c0, c1) else {
        return Ok(report);
    };
    let constant = k0.value.powf(1.0 - t) * k1.value.powf(t);
    let lam = seq.values();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = sample_directions(lam.len(), samples, &mut rng);
    let lebesgue = Measure::lebesgue();
    let rows = dirs
        .par_iter()
        .enumerate()
        .map(|(index, v)| {
            let f = polynomial(lam, v)?;
            let lhs = lp_norm(&f, p_t, mu)?.value;
            let rhs = constant * lp_norm(&f, p_t, &lebesgue)?.value;
            let slack = if rhs > 0.0 { (lhs - rhs) / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
            Ok(InterpolationSample { index, lhs, rhs, slack })
        })
        .collect::<Result<Vec<_>>>()?;
    report.max_slack = rows.iter().map(|r| r.slack).fold(f64::NEG_INFINITY, f64::max);
    report.violations = rows.iter().filter(|r| r.slack > INTERPOLATION_SLACK).copied().collect();
    report.outcome = if report.violations.is_empty() { CheckOutcome::Verified } else { CheckOutcome::Violated };
    report.samples = rows;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessRow {
    pub n: usize,
    pub lambda: f64,
    /// `ln ||lambda_n x^{lambda_n}||_{L^1(mu)}`
    pub ln_value: f64,
    pub value: f64,
    /// `||lambda_n x^{lambda_n}||_{L^1[0,1]} = lambda_n / (lambda_n + 1)`
    pub lebesgue_norm: f64,
}

/// `||lambda_n x^{lambda_n}||_{L^1(mu)}` for each `n` (1-based).
pub fn l1_unboundedness_witness(seq: &LambdaSequence, mu: &Measure) -> Result<Vec<WitnessRow>> {
    seq.values()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let ln_value = l.ln() + mu.ln_moment(l)?;
            Ok(WitnessRow {
                n: i + 1,
                lambda: l,
                ln_value,
                value: ln_value.exp(),
                lebesgue_norm: l / (l + 1.0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::op_norm;
    use crate::linalg::Precision;
    use crate::sequences::make_geometric;
    use proptest::prelude::*;

    fn x() -> MuntzPolynomial {
        MuntzPolynomial::new(&[1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn lp_norm_examples() {
        let v = lp_norm(&x(), 1.0, &Measure::lebesgue()).unwrap();
        assert!((v.value - 0.5).abs() < 1e-14 && v.converged);
        let v = lp_norm(&x(), 2.0, &Measure::atomic(&[(0.5, 1.0)]).unwrap()).unwrap();
        assert_eq!(v.value, 0.5);
        assert_eq!(v.method, LpMethod::AtomicSum);
        assert!(lp_norm(&x(), 0.5, &Measure::lebesgue()).is_err());
    }

    #[test]
    fn sign_changes_found() {
        // x - 2x^2 vanishes at 1/2
        let f = MuntzPolynomial::new(&[1.0, 2.0], vec![1.0, -2.0]).unwrap();
        let r = sign_changes(&f);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 0.5).abs() < 1e-14);
        // ∫ |x - 2x^2| = 1/24 + 5/24
        let v = lp_norm(&f, 1.0, &Measure::lebesgue()).unwrap();
        assert!((v.value - 0.25).abs() < 1e-13);
    }

    #[test]
    fn empirical_examples() {
        let sq = make_geometric(1.0, 2.0, 5).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let c = empirical_embedding_constant(&sq, &Measure::lebesgue(), p, 5, 8, false, 7).unwrap();
            assert!((c.value - 1.0).abs() < 1e-9, "p={p}: {}", c.value);
            let c = empirical_embedding_constant(&sq, &Measure::scaled(3.0, Measure::lebesgue()).unwrap(), p, 5, 4, false, 7)
                .unwrap();
            assert!((c.value - 3f64.powf(1.0 / p)).abs() < 1e-9);
        }
        let one = LambdaSequence::explicit(vec![1.0]).unwrap();
        let c = empirical_embedding_constant(&one, &Measure::atomic(&[(0.5, 1.0)]).unwrap(), 2.0, 1, 3, true, 1).unwrap();
        assert!((c.value - 3f64.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn empirical_is_deterministic_and_below_spectral() {
        let sq = make_geometric(1.0, 2.0, 6).unwrap();
        let mu = Measure::atomic(&[(0.5, 0.5), (0.9, 0.1)]).unwrap();
        let a = empirical_embedding_constant(&sq, &mu, 2.0, 6, 64, true, 42).unwrap();
        let b = empirical_embedding_constant(&sq, &mu, 2.0, 6, 64, true, 42).unwrap();
        assert_eq!(a, b);
        let s = op_norm(&sq, &mu, Precision::Double).unwrap();
        assert!(a.value <= s + 1e-8);
        let raw = empirical_embedding_constant(&sq, &mu, 2.0, 6, 64, false, 42).unwrap();
        assert!(a.value >= raw.value);
    }

    #[test]
    fn certified_constants() {
        let c = certified_constant(&Measure::scaled(4.0, Measure::lebesgue()).unwrap(), 2.0).unwrap().unwrap();
        assert!((c.value - 2.0).abs() < 1e-15);
        assert!(certified_constant(&Measure::atomic(&[(0.5, 1.0)]).unwrap(), 2.0).unwrap().is_none());
        let c = certified_constant(&Measure::power_tail(1.0, 2.0, 0.0).unwrap(), 1.0).unwrap().unwrap();
        assert_eq!(c.value, 2.0);
    }

    #[test]
    fn interpolation_examples() {
        let sq = make_geometric(1.0, 2.0, 4).unwrap();
        let r = interpolation_check(&sq, &Measure::lebesgue(), 1.0, 2.0, 0.5, 10, 3).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Verified);
        assert!(r.samples.iter().all(|s| s.slack.abs() < 1e-12));
        let c = 5.0;
        let r = interpolation_check(&sq, &Measure::scaled(c, Measure::lebesgue()).unwrap(), 1.0, 2.0, 0.25, 10, 3).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Verified);
        let k0 = r.c0.unwrap().value;
        let k1 = r.c1.unwrap().value;
        assert!((k0.powf(0.75) * k1.powf(0.25) - c.powf(1.0 / r.p_t)).abs() < 1e-13);
        assert!(r.samples.iter().all(|s| s.slack.abs() < 1e-12));
        let r = interpolation_check(&sq, &Measure::atomic(&[(0.5, 1.0)]).unwrap(), 1.0, 2.0, 0.5, 10, 3).unwrap();
        assert_eq!(r.outcome, CheckOutcome::Inconclusive);
        assert!(interpolation_check(&sq, &Measure::lebesgue(), 2.0, 1.0, 0.5, 10, 3).is_err());
        assert!((interpolated_exponent(1.0, 2.0, 0.5) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn witness_examples() {
        let one = LambdaSequence::explicit(vec![1.0]).unwrap();
        let w = l1_unboundedness_witness(&one, &Measure::atomic(&[(0.5, 1.0)]).unwrap()).unwrap();
        assert!((w[0].value - 0.5).abs() < 1e-15);
        let sq = make_geometric(1.0, 2.0, 20).unwrap();
        for r in l1_unboundedness_witness(&sq, &Measure::lebesgue()).unwrap() {
            assert!(r.value < 1.0 && (r.value - r.lebesgue_norm).abs() < 1e-14);
        }
    }

    fn arb_poly() -> impl Strategy<Value = MuntzPolynomial> {
        (1usize..6, proptest::collection::vec(-1.0f64..1.0, 6)).prop_map(|(n, c)| {
            let lam: Vec<f64> = (0..n).map(|k| 2f64.powi(k as i32)).collect();
            MuntzPolynomial::new(&lam, c[..n].to_vec()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn quadrature_matches_gram(f in arb_poly()) {
            let g = lp_norm(&f, 2.0, &Measure::lebesgue()).unwrap().value;
            let q = lp_norm_by_quadrature(&f, 2.0, &Measure::lebesgue()).unwrap().value;
            prop_assert!((g - q).abs() <= 1e-9 * g.max(1e-300) + 1e-15);
        }

        #[test]
        fn holder_monotone(f in arb_poly(), p in 1.0f64..4.0, dp in 0.1f64..3.0) {
            let mu = Measure::scaled(0.5, Measure::power_tail(2.0, 1.5, 0.0).unwrap()).unwrap();
            let a = lp_norm(&f, p, &mu).unwrap().value;
            let b = lp_norm(&f, p + dp, &mu).unwrap().value;
            prop_assert!(a <= b * (1.0 + 1e-9) + 1e-15);
        }

        #[test]
        fn triangle_inequality(f in arb_poly(), g in arb_poly(), p in 1.0f64..4.0) {
            let mu = Measure::sum(vec![Measure::atomic(&[(0.3, 1.0), (0.8, 0.5)]).unwrap(), Measure::lebesgue()]).unwrap();
            let mut lam: Vec<f64> = f.exponents().iter().chain(g.exponents()).copied().collect();
            lam.sort_by(f64::total_cmp);
            lam.dedup();
            let coef = |h: &MuntzPolynomial, l: f64| h.exponents().iter().position(|e| *e == l).map(|i| h.coefficients()[i]).unwrap_or(0.0);
            let s = MuntzPolynomial::new(&lam, lam.iter().map(|&l| coef(&f, l) + coef(&g, l)).collect()).unwrap();
            let ns = lp_norm(&s, p, &mu).unwrap().value;
            let nf = lp_norm(&f, p, &mu).unwrap().value;
            let ng = lp_norm(&g, p, &mu).unwrap().value;
            prop_assert!(ns <= (nf + ng) * (1.0 + 1e-9) + 1e-15);
        }
    }
}

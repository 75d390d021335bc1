//! Randomized property suites: polynomial inequalities, certificate
//! dominance and the interpolation inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{
    compact_support_certificate, op_norm, psi_certificate, rho_certificate, sublinear_embedding_bound, Certificate,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{bernstein_ratio, l1_min_inequality_check, pointwise_bound_with_sup, sup_norm, MuntzPolynomial, PsiEvaluator};
use crate::linalg::Precision;
use crate::lp::{interpolation_check, CheckOutcome};
use crate::measures::{rho_majorization_check, Measure, MeasureSpec, PowerMajorant};
use crate::sequences::SequenceSpec;

/// Constant used for the Bernstein-type check `||f'|| <= K (sum lambda) ||f||` with `lambda_1 >= 1`.
pub const BERNSTEIN_K: f64 = 18.0;

/// Dominance tolerance for certificates against the computed operator norm.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub index: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyResult {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Smallest slack seen; negative values are violations.
    pub min_slack: f64,
    /// Largest checked quantity, for families that estimate a constant.
    pub max_value: Option<f64>,
    /// Instances that could not be evaluated, e.g. an undefined ratio.
    pub skipped: usize,
    pub failures: Vec<Failure>,
}

impl FamilyResult {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            instances: 0,
            violations: 0,
            min_slack: f64::INFINITY,
            max_value: None,
            skipped: 0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, index: usize, slack: f64, detail: impl FnOnce() -> String) {
        self.instances += 1;
        self.min_slack = self.min_slack.min(slack);
        if !(slack >= 0.0) {
            self.violations += 1;
            self.failures.push(Failure { index, detail: detail() });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Inequalities,
    Certificates,
    Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: SuiteKind,
    pub seed: u64,
    pub families: Vec<FamilyResult>,
}

impl SuiteReport {
    pub fn violations(&self) -> usize {
        self.families.iter().map(|f| f.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

fn random_exponents(rng: &mut ChaCha8Rng, min_first: f64) -> Vec<f64> {
    let n = rng.random_range(1..=6);
    let mut lam = vec![rng.random_range(min_first..min_first + 3.0)];
    for _ in 1..n {
        let last = *lam.last().expect("non-empty");
        lam.push(last * rng.random_range(1.2..3.0));
    }
    lam
}

fn random_polynomial(rng: &mut ChaCha8Rng, min_first: f64) -> MuntzPolynomial {
    let lam = random_exponents(rng, min_first);
    let coef = (0..lam.len()).map(|_| StandardNormal.sample(rng)).collect();
    MuntzPolynomial::new(&lam, coef).expect("valid random polynomial")
}

/// Dirichlet(1, ..., 1) weights.
fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    // absorb rounding so the weights sum to 1 within the checker tolerance
    let drift = 1.0 - w.iter().sum::<f64>();
    w[0] += drift;
    w
}

/// A measure together with a tail majorant it satisfies.
fn random_majorized(rng: &mut ChaCha8Rng) -> (Measure, PowerMajorant) {
    let inflate = 1.0 + rng.random_range(0.0..1.0);
    match rng.random_range(0..3) {
        0 => {
            let k = rng.random_range(1..=4);
            let atoms: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.random_range(0.05..0.995), rng.random_range(0.01..2.0)))
                .collect();
            let mu = Measure::atomic(&atoms).expect("valid atoms");
            let s = mu.exact_sublinear_norm().expect("atomic closed form");
            (mu, PowerMajorant::new(s * inflate, 1.0).expect("positive"))
        }
        1 => {
            let c = rng.random_range(0.1..3.0);
            let alpha = rng.random_range(0.5..4.0);
            (
                Measure::power_tail(c, alpha, 0.0).expect("valid"),
                PowerMajorant::new(c * inflate, alpha).expect("positive"),
            )
        }
        _ => {
            let lo = rng.random_range(0.0..0.9);
            (
                Measure::lebesgue_on(lo, 1.0).expect("valid"),
                PowerMajorant::new(inflate, 1.0).expect("positive"),
            )
        }
    }
}

/// Four inequality families, `instances` random cases each.
pub fn inequality_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    if instances == 0 {
        return Err(invalid("at least one instance is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pointwise_cases: Vec<(MuntzPolynomial, Vec<f64>, Vec<f64>)> = (0..instances)
        .map(|_| {
            let f = random_polynomial(&mut rng, 0.1);
            let beta = random_weights(&mut rng, f.exponents().len());
            let xs = (0..8).map(|_| rng.random_range(0.0..=1.0)).collect();
            (f, beta, xs)
        })
        .collect();
    let bernstein_cases: Vec<MuntzPolynomial> = (0..instances).map(|_| random_polynomial(&mut rng, 1.0)).collect();
    let majorant_cases: Vec<(Measure, PowerMajorant, f64)> = (0..instances)
        .map(|_| {
            let (mu, rho) = random_majorized(&mut rng);
            (mu, rho, rng.random_range(0.2..40.0))
        })
        .collect();
    let min_cases: Vec<MuntzPolynomial> = (0..instances).map(|_| random_polynomial(&mut rng, 0.1)).collect();

    let mut pointwise = FamilyResult::new("pointwise_weighted_bound");
    let results: Vec<Result<Vec<f64>>> = pointwise_cases
        .par_iter()
        .map(|(f, beta, xs)| {
            let sup = sup_norm(&|t| f.eval(t)).value;
            xs.iter().map(|&x| pointwise_bound_with_sup(f, x, beta, sup).map(|c| c.slack)).collect()
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        let slack = r?.into_iter().fold(f64::INFINITY, f64::min);
        pointwise.record(i, slack, || format!("slack {slack:e}"));
    }

    let mut bernstein = FamilyResult::new("bernstein_constant");
    let ratios: Vec<Result<f64>> = bernstein_cases.par_iter().map(bernstein_ratio).collect();
    let mut max_ratio: f64 = 0.0;
    for (i, r) in ratios.into_iter().enumerate() {
        match r {
            Ok(v) => {
                max_ratio = max_ratio.max(v);
                bernstein.record(i, BERNSTEIN_K - v, || format!("ratio {v} exceeds K = {BERNSTEIN_K}"));
            }
            Err(Error::UndefinedRatio(_)) => bernstein.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    bernstein.max_value = Some(max_ratio);

    let mut majorization = FamilyResult::new("tail_majorization");
    let checks: Vec<Result<f64>> = majorant_cases
        .par_iter()
        .map(|(mu, rho, s)| {
            let s = *s;
            rho_majorization_check(mu, rho, &|x: f64| x.powf(s)).map(|c| if c.holds { c.slack.max(0.0) } else { c.slack })
        })
        .collect();
    for (i, r) in checks.into_iter().enumerate() {
        let slack = r?;
        majorization.record(i, slack, || format!("slack {slack:e}"));
    }

    let mut min_ineq = FamilyResult::new("l1_min_inequality");
    let checks: Vec<Result<f64>> = min_cases.par_iter().map(|phi| l1_min_inequality_check(phi).map(|c| c.slack)).collect();
    for (i, r) in checks.into_iter().enumerate() {
        match r {
            Ok(slack) => min_ineq.record(i, slack, || format!("slack {slack:e}")),
            Err(Error::UndefinedRatio(_)) => min_ineq.skipped += 1,
            Err(e) => return Err(e),
        }
    }

    Ok(SuiteReport {
        suite: SuiteKind::Inequalities,
        seed,
        families: vec![pointwise, bernstein, majorization, min_ineq],
    })
}

/// One `(Lambda, mu)` pair of the certificate battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryPair {
    pub name: String,
    pub sequence: SequenceSpec,
    pub measure: MeasureSpec,
}

pub fn default_battery() -> Vec<BatteryPair> {
    let geo = |lambda1: f64, ratio: f64| SequenceSpec::Geometric { lambda1, ratio, count: 32 };
    let pair = |name: &str, sequence, measure| BatteryPair {
        name: name.into(),
        sequence,
        measure,
    };
    vec![
        pair("dyadic_delta", geo(1.0, 2.0), MeasureSpec::Atomic { atoms: vec![[0.5, 1.0]] }),
        pair(
            "dyadic_atoms",
            geo(1.0, 2.0),
            MeasureSpec::Atomic {
                atoms: vec![[0.5, 0.5], [0.75, 0.25], [0.875, 0.125], [0.9375, 0.0625]],
            },
        ),
        pair("dyadic_lebesgue", geo(2.0, 2.0), MeasureSpec::Lebesgue),
        pair("dyadic_power_tail", geo(1.0, 2.0), MeasureSpec::PowerTail { c: 1.0, alpha: 2.0, x0: 0.0 }),
        pair(
            "triadic_half_interval",
            geo(1.0, 3.0),
            MeasureSpec::Piecewise {
                breakpoints: vec![0.0, 0.5],
                densities: vec![1.0],
            },
        ),
        pair(
            "triadic_mixture",
            geo(0.5, 3.0),
            MeasureSpec::Sum {
                parts: vec![
                    MeasureSpec::Atomic { atoms: vec![[0.9, 0.1]] },
                    MeasureSpec::PowerTail { c: 2.0, alpha: 1.0, x0: 0.0 },
                ],
            },
        ),
        pair(
            "dyadic_scaled_tail",
            geo(2.0, 2.0),
            MeasureSpec::Scaled {
                c: 5.0,
                inner: Box::new(MeasureSpec::PowerTail { c: 1.0, alpha: 3.0, x0: 0.0 }),
            },
        ),
    ]
}

pub const BATTERY_TRUNCATIONS: [usize; 4] = [4, 8, 16, 32];

/// Every applicable operator-norm certificate at a truncation.
pub fn operator_certificates(seq: &crate::LambdaSequence, mu: &Measure) -> Result<Vec<Certificate>> {
    let psi = PsiEvaluator::new(seq);
    let mut out = vec![psi_certificate(&psi, mu)?];
    if let Some(s) = mu.exact_sublinear_norm().filter(|s| s.is_finite() && *s > 0.0) {
        match rho_certificate(&psi, mu, &PowerMajorant::new(s, 1.0)?) {
            Ok(c) => out.push(c),
            Err(Error::HypothesisViolated(_)) => {}
            Err(e) => return Err(e),
        }
    }
    match sublinear_embedding_bound(seq, mu) {
        Ok(c) => out.push(c),
        Err(Error::HypothesisViolated(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(out)
}

/// Certificates against the computed norm at each truncation, plus the rank-one equality case.
pub fn certificate_battery(pairs: &[BatteryPair], truncations: &[usize]) -> Result<SuiteReport> {
    let mut families = Vec::with_capacity(pairs.len() + 1);
    for pair in pairs {
        let seq = pair.sequence.build()?;
        let mu = pair.measure.build()?;
        let rows = truncations
            .par_iter()
            .filter(|&&n| n <= seq.len())
            .map(|&n| -> Result<(usize, f64, Vec<Certificate>)> {
                let s = seq.truncate(n)?;
                let norm = op_norm(&s, &mu, Precision::Double)?;
                let mut certs = operator_certificates(&s, &mu)?;
                if let Some(b) = compact_support_bound(&mu) {
                    certs.push(compact_support_certificate(&PsiEvaluator::new(&s), &mu, b, 0.5 * (1.0 + b), 1)?);
                }
                Ok((n, norm, certs))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut fam = FamilyResult::new(pair.name.clone());
        for (n, norm, certs) in rows {
            for c in certs.iter().filter(|c| c.comparable()) {
                // S_2 dominates the operator norm, so compact-support bounds are compared against it too
                let slack = c.value - norm + CERTIFICATE_SLACK;
                fam.record(n, slack, || format!("N = {n}: {:?} = {} below ||i|| = {norm}", c.kind, c.value));
            }
        }
        families.push(fam);
    }
    let mut rank_one = FamilyResult::new("rank_one_equality");
    let one = crate::LambdaSequence::explicit(vec![1.0])?;
    let delta = Measure::atomic(&[(0.5, 1.0)])?;
    let norm = op_norm(&one, &delta, Precision::Double)?;
    let c = psi_certificate(&PsiEvaluator::new(&one), &delta)?;
    let gap = (c.value - norm).abs();
    rank_one.record(1, CERTIFICATE_SLACK - gap, || format!("|psi bound - norm| = {gap:e}"));
    families.push(rank_one);
    Ok(SuiteReport {
        suite: SuiteKind::Certificates,
        seed: 0,
        families,
    })
}

/// Largest `b < 1` with `mu((b, 1]) = 0` among the simple cases, if any.
fn compact_support_bound(mu: &Measure) -> Option<f64> {
    let top = mu.ln_support_max().exp();
    (top < 1.0 && mu.mass_above(top).ok()? == 0.0).then_some(top)
}

/// Measures with certified endpoint constants used by the interpolation suite.
pub fn default_interpolation_measures() -> Vec<(String, Measure)> {
    vec![
        ("lebesgue".into(), Measure::lebesgue()),
        ("scaled_lebesgue".into(), Measure::scaled(3.0, Measure::lebesgue()).expect("valid")),
        ("power_tail".into(), Measure::power_tail(1.0, 2.0, 0.0).expect("valid")),
    ]
}

pub const INTERPOLATION_T: [f64; 3] = [0.25, 0.5, 0.75];

/// Interpolation inequality with `p0 = 1`, `p1 = 2` on each measure and `t`.
pub fn interpolation_suite(
    seq: &crate::LambdaSequence,
    measures: &[(String, Measure)],
    t_values: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SuiteReport> {
    let mut families = Vec::new();
    for (name, mu) in measures {
        for (k, &t) in t_values.iter().enumerate() {
            let rep = interpolation_check(seq, mu, 1.0, 2.0, t, samples, seed.wrapping_add(k as u64))?;
            let mut fam = FamilyResult::new(format!("{name}_t{t}"));
            if rep.outcome == CheckOutcome::Inconclusive {
                fam.skipped = samples;
            }
            for s in &rep.samples {
                let slack = crate::lp::INTERPOLATION_SLACK - s.slack;
                fam.record(s.index, slack, || format!("lhs {} > rhs {}", s.lhs, s.rhs));
            }
            families.push(fam);
        }
    }
    Ok(SuiteReport {
        suite: SuiteKind::Interpolation,
        seed,
        families,
    })
}

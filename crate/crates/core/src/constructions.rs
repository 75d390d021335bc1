//! The two explicit atomic constructions: a measure that embeds `M^2` but not
//! `M^1`, and one whose embedding lies in `S_q` but not `S_r`.
//!
//! Exponents are chosen by doubling from the forced minimum until every
//! per-step condition holds; all quantities are kept in log form.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{analyze, riesz_sequence_check, EmbeddingProblem, RieszCheck};
use crate::error::{invalid, Error, Result};
use crate::linalg::Precision;
use crate::logspace::{ln1m_plus, log_sum_exp};
use crate::lp::l1_unboundedness_witness;
use crate::measures::{Atom, Atomic, Measure};
use crate::sequences::{classify, LambdaSequence, SequenceOrigin};

/// Cap on doublings per exponent.
pub const MAX_DOUBLINGS: usize = 1_000_000;
pub const EXAMPLE1_MAX_N: usize = 12;
pub const EXAMPLE2_MAX_N: usize = 10;

fn bug(n: usize, detail: impl Into<String>) -> Error {
    Error::ConstructionBug { n, detail: detail.into() }
}

/// Smallest `base * 2^j` satisfying `ok`.
fn doubling_search(base: f64, n: usize, ok: impl Fn(f64) -> bool) -> Result<(f64, usize)> {
    let mut lam = base;
    for j in 0..MAX_DOUBLINGS {
        if !lam.is_finite() {
            break;
        }
        if ok(lam) {
            return Ok((lam, j));
        }
        lam *= 2.0;
    }
    Err(Error::ConstructionFailure(format!("no admissible exponent found for n = {n}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Row {
    pub n: usize,
    pub lambda: f64,
    pub ln_a: f64,
    pub ln_c: f64,
    /// `ln(lambda_n sum_{k<n} a_k^{lambda_n})`
    pub cond_i_ln_lhs: f64,
    /// `ln(1/n^2) - cond_i_ln_lhs`
    pub cond_i_slack: f64,
    /// `ln(lambda_{n+1}/lambda_n) - 4 ln n`; absent for the last row.
    pub cond_ii_slack: Option<f64>,
    /// `n^2 a_n^{lambda_n}`
    pub scaled_power: f64,
    /// `c_n lambda_n a_n^{lambda_n}`
    pub witness: f64,
    pub doublings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Build {
    pub lambda: LambdaSequence,
    pub measure: Measure,
    pub rows: Vec<Example1Row>,
}

/// `ln(lambda sum_k a_k^lambda)` over the given atoms.
fn ln_weighted_power_sum(lam: f64, ln_a: &[f64]) -> f64 {
    let terms: Vec<f64> = ln_a.iter().map(|la| lam * la).collect();
    lam.ln() + log_sum_exp(&terms)
}

pub fn build_example1(n_max: usize) -> Result<Example1Build> {
    if !(2..=EXAMPLE1_MAX_N).contains(&n_max) {
        return Err(invalid(format!("n_max = {n_max} must lie in 2..={EXAMPLE1_MAX_N}")));
    }
    let mut lambdas = vec![1.0];
    let mut ln_a = vec![0.5f64.ln()];
    let mut ln_c = vec![0.0];
    let mut doublings = vec![0];
    for n in 2..=n_max {
        let nf = n as f64;
        let prev = lambdas[n - 2];
        let base = (nf.powi(4) * prev).max(prev + 1.0);
        let target = -2.0 * nf.ln();
        let (lam, j) = doubling_search(base, n, |lam| {
            lam > 2.0 * nf.ln() && ln_weighted_power_sum(lam, &ln_a) <= target
        })?;
        let u = 2.0 * nf.ln() / lam;
        lambdas.push(lam);
        ln_a.push((-u).ln_1p());
        ln_c.push((2.0 * nf * nf * nf.ln()).ln() - lam.ln());
        doublings.push(j);
    }
    let mut rows = Vec::with_capacity(n_max);
    for i in 0..n_max {
        let n = i + 1;
        let nf = n as f64;
        let lam = lambdas[i];
        let cond_i_ln_lhs = if i == 0 { f64::NEG_INFINITY } else { ln_weighted_power_sum(lam, &ln_a[..i]) };
        // lambda ln a_n = lambda ln1m_plus(u) - 2 ln n, accurate for tiny u
        let ln_power = if i == 0 { lam * ln_a[0] } else { lam * ln1m_plus(2.0 * nf.ln() / lam) - 2.0 * nf.ln() };
        rows.push(Example1Row {
            n,
            lambda: lam,
            ln_a: ln_a[i],
            ln_c: ln_c[i],
            cond_i_ln_lhs,
            cond_i_slack: -2.0 * nf.ln() - cond_i_ln_lhs,
            cond_ii_slack: lambdas.get(i + 1).map(|next| (next / lam).ln() - 4.0 * nf.ln()),
            scaled_power: (2.0 * nf.ln() + ln_power).exp(),
            witness: (ln_c[i] + lam.ln() + ln_power).exp(),
            doublings: doublings[i],
        });
    }
    for r in &rows {
        if r.n >= 2 && !(r.cond_i_slack >= 0.0) {
            return Err(bug(r.n, format!("condition (i) slack {}", r.cond_i_slack)));
        }
        if let Some(s) = r.cond_ii_slack {
            if !(s >= 0.0) {
                return Err(bug(r.n, format!("growth condition slack {s}")));
            }
        }
        if !(r.ln_a < 0.0) {
            return Err(bug(r.n, format!("a_n = {} is not below 1", r.ln_a.exp())));
        }
        if r.n >= 2 && !(0.5..=2.0).contains(&r.scaled_power) {
            return Err(bug(r.n, format!("n^2 a_n^lambda_n = {}", r.scaled_power)));
        }
    }
    let atoms = ln_a
        .iter()
        .zip(&ln_c)
        .map(|(&p, &w)| Atom { ln_position: p, ln_weight: w })
        .collect();
    Ok(Example1Build {
        lambda: LambdaSequence::new(lambdas, SequenceOrigin::Constructed)?,
        measure: Measure::Atomic(Atomic::from_logs(atoms)?),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Example1Check {
    pub n: usize,
    /// `||g_n||^2_{L^2(mu)} = sum_k c_k lambda_n a_k^{2 lambda_n}`
    pub g_norm_sq: f64,
    /// `C_fit ln n / n^2`
    pub g_bound: f64,
    pub partial_sum: f64,
    /// `||lambda_n x^{lambda_n}||_{L^1(mu)}`
    pub l1_norm: f64,
    /// `c_n lambda_n a_n^{lambda_n}`
    pub l1_lower: f64,
    pub witness_over_ln_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Report {
    pub c_fit: f64,
    pub checks: Vec<Example1Check>,
    pub sum_g_norm_sq: f64,
    /// `(N, ||i_mu||)` for `N = 1..=n_max`.
    pub op_norms: Vec<(usize, f64)>,
    /// Relative change of the operator norm from `N = n_max - 2` to `n_max`.
    pub op_norm_change: f64,
    pub l1_increasing: bool,
}

fn ln_g_norm_sq(lambda: f64, mu: &Measure) -> Result<f64> {
    Ok(lambda.ln() + mu.ln_moment(2.0 * lambda)?)
}

/// Verify the `M^2` side and the `M^1` failure; `c_fit = None` fits the constant from the data.
pub fn verify_example1(e: &Example1Build, c_fit: Option<f64>) -> Result<Example1Report> {
    let lam = e.lambda.values();
    let n_max = lam.len();
    let g: Vec<f64> = lam
        .par_iter()
        .map(|&l| ln_g_norm_sq(l, &e.measure).map(f64::exp))
        .collect::<Result<_>>()?;
    let fitted = (2..=n_max)
        .map(|n| g[n - 1] * (n * n) as f64 / (n as f64).ln())
        .fold(0.0, f64::max);
    let c_fit = c_fit.unwrap_or(fitted);
    let witness = l1_unboundedness_witness(&e.lambda, &e.measure)?;
    let mut checks = Vec::with_capacity(n_max);
    let mut partial = 0.0;
    for i in 0..n_max {
        let n = i + 1;
        let ln_n = (n as f64).ln();
        partial += g[i];
        let g_bound = c_fit * ln_n / (n * n) as f64;
        if n >= 2 && g[i] > g_bound * (1.0 + 1e-12) {
            return Err(bug(n, format!("||g_n||^2 = {} exceeds C_fit ln n / n^2 = {g_bound}", g[i])));
        }
        let lower = e.rows[i].witness;
        if witness[i].value < lower * (1.0 - 1e-12) {
            return Err(bug(n, format!("L^1 witness {} below c_n lambda_n a_n^lambda_n = {lower}", witness[i].value)));
        }
        checks.push(Example1Check {
            n,
            g_norm_sq: g[i],
            g_bound,
            partial_sum: partial,
            l1_norm: witness[i].value,
            l1_lower: lower,
            witness_over_ln_n: if n >= 2 { lower / ln_n } else { f64::NAN },
        });
    }
    let op_norms = (1..=n_max)
        .into_par_iter()
        .map(|k| {
            let p = EmbeddingProblem::new(&e.lambda, e.measure.clone(), k)?;
            Ok((k, analyze(&p, &[], Precision::Double)?.op_norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let op_norm_change = if n_max >= 3 {
        let (a, b) = (op_norms[n_max - 3].1, op_norms[n_max - 1].1);
        (b - a).abs() / b
    } else {
        f64::NAN
    };
    Ok(Example1Report {
        c_fit,
        sum_g_norm_sq: partial,
        l1_increasing: witness.windows(2).all(|w| w[1].value > w[0].value),
        checks,
        op_norms,
        op_norm_change,
    })
}

/// Parameters of the second construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Example2Params {
    pub q: f64,
    pub r: f64,
    /// `alpha_n = (n + 1)^{-theta}` with `r theta <= 1 < q theta`.
    pub theta: f64,
}

impl Example2Params {
    /// `theta = (1/q + 1/r) / 2`.
    pub fn new(q: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && q > r && q.is_finite()) {
            return Err(invalid(format!("need 0 < r < q, got q = {q}, r = {r}")));
        }
        Ok(Self {
            q,
            r,
            theta: 0.5 * (1.0 / q + 1.0 / r),
        })
    }

    pub fn ln_alpha(&self, n: usize) -> f64 {
        -self.theta * ((n + 1) as f64).ln()
    }

    /// `ln beta_{nm}` with `beta_{nm} = 4^{-(n+m+2)}`.
    pub fn ln_beta(n: usize, m: usize) -> f64 {
        -((n + m + 2) as f64) * 4f64.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Row {
    pub n: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub ln_a: f64,
    pub ln_c: f64,
    /// Log slack `ln(rhs) - ln(lhs)` of the diagonal-term condition.
    pub diagonal_slack: f64,
    /// Smallest log slack over the cross-term conditions, `j < n`.
    pub cross_slack: f64,
    /// Smallest log slack over the pair-ratio conditions, `i, j < n`.
    pub pair_ratio_slack: f64,
    /// Smallest log slack over the single-ratio conditions, `i < n`.
    pub single_ratio_slack: f64,
    pub doublings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Build {
    pub params: Example2Params,
    pub lambda: LambdaSequence,
    pub measure: Measure,
    pub rows: Vec<Example2Row>,
    /// `sum_{n,m >= 1} beta_{nm}`
    pub beta_sum: f64,
}

/// Log slacks of the four condition families for a candidate `lambda_n`.
fn example2_slacks(p: &Example2Params, n: usize, lam: f64, prev: &[f64], ln_a: &[f64], ln_c: &[f64]) -> [f64; 4] {
    let la = |k: usize| p.ln_alpha(k);
    let ln_lam = lam.ln();
    let inf = f64::INFINITY;
    if prev.is_empty() {
        return [inf; 4];
    }
    let terms: Vec<f64> = (0..prev.len()).map(|i| ln_c[i] + ln_lam + 2.0 * lam * ln_a[i]).collect();
    let diagonal = (2.0 * la(n) - 8f64.ln()) - log_sum_exp(&terms);
    let mut cross = inf;
    for j in 1..n {
        let lj = prev[j - 1];
        let terms: Vec<f64> = (0..prev.len())
            .map(|i| ln_c[i] + 0.5 * (lj.ln() + ln_lam) + (lj + lam) * ln_a[i])
            .collect();
        let rhs = -4f64.ln() + la(j) + la(n) + 0.5 * Example2Params::ln_beta(j, n);
        cross = cross.min(rhs - log_sum_exp(&terms));
    }
    let mut pair = inf;
    for i in 1..n {
        for j in 1..n {
            let lhs = 2.0 * la(n) + 0.5 * (prev[i - 1].ln() + prev[j - 1].ln()) - ln_lam;
            let rhs = -((n + 2 - i.max(j)) as f64) * 2f64.ln() + la(i) + la(j) + 0.5 * Example2Params::ln_beta(i, j);
            pair = pair.min(rhs - lhs);
        }
    }
    let mut single = inf;
    for i in 1..n {
        let lhs = 2.0 * la(n) + 0.5 * prev[i - 1].ln() - 0.5 * ln_lam;
        let rhs = -2f64.ln() + la(i) + la(n) + 0.5 * Example2Params::ln_beta(i, n);
        single = single.min(rhs - lhs);
    }
    [diagonal, cross, pair, single]
}

pub fn build_example2(q: f64, r: f64, n_max: usize) -> Result<Example2Build> {
    let params = Example2Params::new(q, r)?;
    if !(2..=EXAMPLE2_MAX_N).contains(&n_max) {
        return Err(invalid(format!("n_max = {n_max} must lie in 2..={EXAMPLE2_MAX_N}")));
    }
    let mut lambdas: Vec<f64> = Vec::with_capacity(n_max);
    let mut ln_a: Vec<f64> = Vec::with_capacity(n_max);
    let mut ln_c: Vec<f64> = Vec::with_capacity(n_max);
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (lam, j) = if n == 1 {
            (1.0, 0)
        } else {
            doubling_search(2.0 * lambdas[n - 2], n, |lam| {
                example2_slacks(&params, n, lam, &lambdas, &ln_a, &ln_c).iter().all(|s| *s >= 0.0)
            })?
        };
        let s = example2_slacks(&params, n, lam, &lambdas, &ln_a, &ln_c);
        lambdas.push(lam);
        ln_a.push(-0.5 / lam);
        ln_c.push(2.0 * params.ln_alpha(n) - lam.ln());
        rows.push(Example2Row {
            n,
            lambda: lam,
            alpha: params.ln_alpha(n).exp(),
            ln_a: ln_a[n - 1],
            ln_c: ln_c[n - 1],
            diagonal_slack: s[0],
            cross_slack: s[1],
            pair_ratio_slack: s[2],
            single_ratio_slack: s[3],
            doublings: j,
        });
    }
    let seq = LambdaSequence::new(lambdas, SequenceOrigin::Constructed)?;
    let ratio = classify(&seq).min_ratio;
    if !(ratio >= 2.0) {
        return Err(bug(n_max, format!("lacunarity ratio {ratio} below 2")));
    }
    for row in &rows {
        if row.alpha >= 1.0 {
            return Err(bug(row.n, format!("alpha_n = {} is not below 1", row.alpha)));
        }
    }
    let atoms = ln_a
        .iter()
        .zip(&ln_c)
        .map(|(&p, &w)| Atom { ln_position: p, ln_weight: w })
        .collect();
    Ok(Example2Build {
        params,
        lambda: seq,
        measure: Measure::Atomic(Atomic::from_logs(atoms)?),
        rows,
        // (sum_{n>=1} 4^{-n})^2 / 16
        beta_sum: 1.0 / 144.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Example2Check {
    pub n: usize,
    /// `||i g_n||^2_{L^2(mu)}`
    pub g_norm_sq: f64,
    /// `alpha_n^2 / e`
    pub lower: f64,
    /// `(3/2) alpha_n^2`
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSums {
    pub exponent: f64,
    pub sums: Vec<f64>,
    /// `(S_N - S_{N-2}) / S_{N-2}`
    pub last_two_change: f64,
}

impl PartialSums {
    fn new(norms: &[f64], exponent: f64) -> Self {
        let mut acc = 0.0;
        let sums: Vec<f64> = norms
            .iter()
            .map(|v| {
                acc += v.powf(exponent);
                acc
            })
            .collect();
        let n = sums.len();
        let last_two_change = if n >= 3 { (sums[n - 1] - sums[n - 3]) / sums[n - 3] } else { f64::NAN };
        Self {
            exponent,
            sums,
            last_two_change,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchattenTrendRow {
    pub n: usize,
    /// `sum s_i^q`
    pub q_sum: f64,
    /// `sum s_i^r`
    pub r_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Report {
    pub checks: Vec<Example2Check>,
    /// Gram matrix of `f_n = i g_n / ||i g_n||`, row by row.
    pub gamma: Vec<Vec<f64>>,
    pub riesz: RieszCheck,
    /// `sum_{n != m} <f_n, f_m>^2`
    pub offdiag_hs_sq: f64,
    pub q_sums: PartialSums,
    pub r_sums: PartialSums,
    pub schatten_trend: Vec<SchattenTrendRow>,
}

/// Stability threshold for `l^q` partial sums and growth threshold for `l^r` ones.
pub const Q_STABLE_TOL: f64 = 0.01;
pub const R_GROWTH_MIN: f64 = 0.10;

impl Example2Report {
    pub fn q_stable(&self) -> bool {
        self.q_sums.last_two_change < Q_STABLE_TOL
    }

    pub fn r_growing(&self) -> bool {
        self.r_sums.last_two_change > R_GROWTH_MIN
    }
}

pub fn verify_example2(e: &Example2Build) -> Result<Example2Report> {
    let lam = e.lambda.values();
    let n_max = lam.len();
    let p = e.params;
    let atoms = e.measure.collect_atoms().ok_or_else(|| invalid("the second construction is atomic"))?;
    // atoms are stored sorted by position, which is the construction order
    let ln_inner = |n: usize, m: usize| -> f64 {
        let terms: Vec<f64> = atoms
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if n == m && j == n {
                    // c_n lambda_n a_n^{2 lambda_n} = alpha_n^2 / e
                    2.0 * p.ln_alpha(n + 1) - 1.0
                } else {
                    t.ln_weight + 0.5 * (lam[n].ln() + lam[m].ln()) + (lam[n] + lam[m]) * t.ln_position
                }
            })
            .collect();
        log_sum_exp(&terms)
    };
    let ln_g: Vec<f64> = (0..n_max).into_par_iter().map(|n| ln_inner(n, n)).collect();
    let mut checks = Vec::with_capacity(n_max);
    for (i, &lg) in ln_g.iter().enumerate() {
        let n = i + 1;
        let la2 = 2.0 * p.ln_alpha(n);
        let (ln_lo, ln_hi) = (la2 - 1.0, la2 + 1.5f64.ln());
        if !(lg >= ln_lo && lg <= ln_hi) {
            return Err(bug(
                n,
                format!("||i g_n||^2 = {} outside [{}, {}]", lg.exp(), ln_lo.exp(), ln_hi.exp()),
            ));
        }
        checks.push(Example2Check {
            n,
            g_norm_sq: lg.exp(),
            lower: ln_lo.exp(),
            upper: ln_hi.exp(),
        });
    }
    let mut gamma = DMatrix::identity(n_max, n_max);
    for n in 0..n_max {
        for m in 0..n {
            let v = (ln_inner(n, m) - 0.5 * (ln_g[n] + ln_g[m])).exp();
            gamma[(n, m)] = v;
            gamma[(m, n)] = v;
        }
    }
    let riesz = riesz_sequence_check(&gamma)?;
    let offdiag_hs_sq = riesz.offdiag_hs * riesz.offdiag_hs;
    let bound = std::f64::consts::E / 4.0;
    if !(offdiag_hs_sq < bound) {
        return Err(bug(n_max, format!("off-diagonal Hilbert-Schmidt sum {offdiag_hs_sq} >= e/4")));
    }
    let norms: Vec<f64> = ln_g.iter().map(|l| (0.5 * l).exp()).collect();
    let schatten_trend = (1..=n_max)
        .into_par_iter()
        .map(|k| {
            let prob = EmbeddingProblem::new(&e.lambda, e.measure.clone(), k)?;
            let rep = analyze(&prob, &[p.q, p.r], Precision::Double)?;
            Ok(SchattenTrendRow {
                n: k,
                q_sum: rep.schatten[0].partial_sum,
                r_sum: rep.schatten[1].partial_sum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Example2Report {
        checks,
        gamma: gamma.row_iter().map(|r| r.iter().copied().collect()).collect(),
        riesz,
        offdiag_hs_sq,
        q_sums: PartialSums::new(&norms, p.q),
        r_sums: PartialSums::new(&norms, p.r),
        schatten_trend,
    })
}

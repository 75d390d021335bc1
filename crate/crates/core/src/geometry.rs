//! Lebesgue-space geometry of the monomials `x^lambda_n`: Gram matrices,
//! distances, the majorant `psi`, and Müntz polynomial inequalities.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::generalized_eigenvalues;
use crate::logspace::log_sum_exp;
use crate::sequences::{BlockStructure, LambdaSequence};

/// Which functions a Gram matrix pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// `x^lambda_n`
    Raw,
    /// `g_n = lambda_n^{1/2} x^lambda_n`
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Lebesgue,
    Mu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub basis: BasisKind,
    pub measure: MeasureKind,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn lebesgue_gram(seq: &LambdaSequence, normalized: bool) -> GramMatrix {
    lebesgue_gram_of(seq.values(), normalized).expect("a LambdaSequence has distinct exponents")
}

/// Lebesgue Gram matrix of arbitrary positive exponents.
pub fn lebesgue_gram_of(lambdas: &[f64], normalized: bool) -> Result<GramMatrix> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::SingularSystem("duplicate exponents give a singular Gram matrix".into()));
    }
    let n = lambdas.len();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        let den = lambdas[i] + lambdas[j] + 1.0;
        if normalized {
            lambdas[i].sqrt() * lambdas[j].sqrt() / den
        } else {
            1.0 / den
        }
    });
    Ok(GramMatrix {
        entries,
        basis: if normalized { BasisKind::Normalized } else { BasisKind::Raw },
        measure: MeasureKind::Lebesgue,
    })
}

/// Distances `d_n` from `x^lambda_n` to the span of the other monomials of the truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceTable {
    pub lambdas: Vec<f64>,
    pub ln_d: Vec<f64>,
    pub d: Vec<f64>,
    /// `-ln(d_n) / lambda_n`
    pub gamma: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub n: usize,
    pub lambda: f64,
    pub d: f64,
    pub gamma: f64,
}

impl DistanceTable {
    pub fn rows(&self) -> Vec<DistanceRow> {
        (0..self.n)
            .map(|i| DistanceRow {
                n: i + 1,
                lambda: self.lambdas[i],
                d: self.d[i],
                gamma: self.gamma[i],
            })
            .collect()
    }
}

pub fn distances(seq: &LambdaSequence) -> DistanceTable {
    distances_of(seq.values())
}

/// Cauchy product formula
/// `d_n = (2 lambda_n + 1)^{-1/2} prod_{m != n} |lambda_n - lambda_m| / (lambda_n + lambda_m + 1)`,
/// summed in logarithms.
pub fn distances_of(lambdas: &[f64]) -> DistanceTable {
    let ln_d: Vec<f64> = (0..lambdas.len())
        .into_par_iter()
        .map(|n| {
            let ln = lambdas[n];
            let mut acc = -0.5 * (2.0 * ln + 1.0).ln();
            for (m, &lm) in lambdas.iter().enumerate() {
                if m != n {
                    acc += (ln - lm).abs().ln() - (ln + lm + 1.0).ln();
                }
            }
            acc
        })
        .collect();
    DistanceTable {
        lambdas: lambdas.to_vec(),
        d: ln_d.iter().map(|l| l.exp()).collect(),
        gamma: ln_d.iter().zip(lambdas).map(|(l, lam)| -l / lam).collect(),
        ln_d,
        n: lambdas.len(),
    }
}

/// `a^{lambda_n + 1/2} d_n`, the distance after rescaling the interval to `[0, a]`.
pub fn scaled_distance(table: &DistanceTable, a: f64, n: usize) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("scale a = {a} must lie in (0,1)")));
    }
    if n == 0 || n > table.n {
        return Err(invalid(format!("index n = {n} outside 1..={}", table.n)));
    }
    let i = n - 1;
    Ok(((table.lambdas[i] + 0.5) * a.ln() + table.ln_d[i]).exp())
}

/// Highest supported derivative order of `psi`.
pub const K_MAX: usize = 4;

/// Relative size of the last term above which a `psi` value is flagged.
pub const TAIL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiValue {
    pub value: f64,
    pub ln_value: f64,
    /// The last retained term is not negligible, so truncation may be unsound here.
    pub tail_flag: bool,
}

/// `ln |lambda (lambda - 1) ... (lambda - k + 1)|`, or `None` when it vanishes.
fn ln_falling_factorial(lambda: f64, k: usize) -> Option<f64> {
    let mut acc = 0.0;
    for j in 0..k {
        let f = lambda - j as f64;
        if f == 0.0 {
            return None;
        }
        acc += f.abs().ln();
    }
    Some(acc)
}

/// `psi(x) = sum_n d_n^{-1} x^lambda_n` over a truncation, with derivatives.
///
/// Derivatives use `|lambda (lambda-1)...(lambda-k+1)|`, so for exponents
/// below `k` the result majorizes the true derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiEvaluator {
    lambdas: Vec<f64>,
    ln_coeff: Vec<f64>,
}

impl PsiEvaluator {
    pub fn new(seq: &LambdaSequence) -> Self {
        Self::from_table(&distances(seq))
    }

    pub fn from_table(table: &DistanceTable) -> Self {
        Self {
            lambdas: table.lambdas.clone(),
            ln_coeff: table.ln_d.iter().map(|l| -l).collect(),
        }
    }

    pub fn truncation(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `ln d_n^{-1}`.
    pub fn ln_coefficients(&self) -> &[f64] {
        &self.ln_coeff
    }

    /// `psi^{(k)}` at `x = exp(ln_x)`, without argument validation.
    pub fn ln_psi(&self, ln_x: f64, k: usize) -> PsiValue {
        let mut terms = Vec::with_capacity(self.lambdas.len());
        for (lam, c) in self.lambdas.iter().zip(&self.ln_coeff) {
            let Some(ff) = ln_falling_factorial(*lam, k) else {
                terms.push(f64::NEG_INFINITY);
                continue;
            };
            let e = lam - k as f64;
            let pow = if e == 0.0 {
                0.0
            } else if ln_x == f64::NEG_INFINITY {
                if e > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY }
            } else {
                e * ln_x
            };
            terms.push(c + ff + pow);
        }
        let ln_value = log_sum_exp(&terms);
        let last = *terms.last().expect("non-empty truncation");
        let tail_flag = ln_value > f64::NEG_INFINITY && last > TAIL_REL_TOL.ln() + ln_value;
        PsiValue {
            value: ln_value.exp(),
            ln_value,
            tail_flag,
        }
    }

    pub fn psi_eval(&self, x: f64, k: usize) -> Result<PsiValue> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain(format!("psi is evaluated on [0,1), got x = {x}")));
        }
        if k > K_MAX {
            return Err(invalid(format!("derivative order {k} exceeds {K_MAX}")));
        }
        Ok(self.ln_psi(x.ln(), k))
    }

    /// `psi_a(x) = a^{-1/2} psi(x / a)`.
    pub fn psi_a_eval(&self, a: f64, x: f64) -> Result<PsiValue> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(invalid(format!("scale a = {a} must lie in (0,1]")));
        }
        if !(0.0 <= x && x < a) {
            return Err(Error::Domain(format!("psi_a needs 0 <= x < a, got x = {x}, a = {a}")));
        }
        let inner = self.ln_psi(x.ln() - a.ln(), 0);
        let ln_value = inner.ln_value - 0.5 * a.ln();
        Ok(PsiValue {
            value: ln_value.exp(),
            ln_value,
            tail_flag: inner.tail_flag,
        })
    }

    /// `Psi(x) = psi'(x^{1/4}) psi(x^{1/4})` at `x = exp(ln_x)`.
    pub fn ln_big_psi(&self, ln_x: f64) -> PsiValue {
        let y = 0.25 * ln_x;
        let d1 = self.ln_psi(y, 1);
        let d0 = self.ln_psi(y, 0);
        let ln_value = d1.ln_value + d0.ln_value;
        PsiValue {
            value: ln_value.exp(),
            ln_value,
            tail_flag: d0.tail_flag || d1.tail_flag,
        }
    }

    pub fn big_psi(&self, x: f64) -> Result<PsiValue> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("Psi is evaluated on (0,1), got x = {x}")));
        }
        Ok(self.ln_big_psi(x.ln()))
    }
}

/// `f(x) = sum_i alpha_i x^{lambda_i}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuntzPolynomial {
    exponents: Vec<f64>,
    coefficients: Vec<f64>,
}

impl MuntzPolynomial {
    pub fn new(exponents: &[f64], coefficients: Vec<f64>) -> Result<Self> {
        if exponents.len() != coefficients.len() || exponents.is_empty() {
            return Err(invalid("a Müntz polynomial needs one coefficient per exponent"));
        }
        if exponents.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(invalid("exponents must be positive and finite"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(Self {
            exponents: exponents.to_vec(),
            coefficients,
        })
    }

    /// Polynomial on the first `coefficients.len()` exponents of `seq`.
    pub fn on(seq: &LambdaSequence, coefficients: Vec<f64>) -> Result<Self> {
        let n = coefficients.len();
        if n == 0 || n > seq.len() {
            return Err(invalid(format!("need 1..={} coefficients, got {n}", seq.len())));
        }
        Self::new(&seq.values()[..n], coefficients)
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn exponent_sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    pub fn derivative(&self, x: f64, k: usize) -> f64 {
        let mut acc = 0.0;
        for (lam, c) in self.exponents.iter().zip(&self.coefficients) {
            if *c == 0.0 {
                continue;
            }
            let mut ff = 1.0;
            for j in 0..k {
                ff *= lam - j as f64;
            }
            if ff == 0.0 {
                continue;
            }
            let e = lam - k as f64;
            let p = if e == 0.0 { 1.0 } else { x.powf(e) };
            acc += c * ff * p;
        }
        acc
    }

    /// `||f||_2^2 = alpha^T G alpha` with the raw Lebesgue Gram matrix.
    pub fn l2_norm_sq(&self) -> f64 {
        let g = lebesgue_gram_of(&self.exponents, false).expect("distinct exponents");
        let v = nalgebra::DVector::from_column_slice(&self.coefficients);
        (v.transpose() * &g.entries * &v)[(0, 0)]
    }
}

pub const SUP_GRID_LOG2: u32 = 14;

/// Grid estimate of a supremum; never a rigorous bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub argmax: f64,
    pub estimate: bool,
}

/// `sup_{[0,1]} |f|` on `2^14 + 1` Chebyshev-spaced points, refined by golden-section search.
pub fn sup_norm(f: &dyn Fn(f64) -> f64) -> SupEstimate {
    let m = 1usize << SUP_GRID_LOG2;
    let xs: Vec<f64> = (0..=m)
        .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / m as f64).cos()))
        .collect();
    let mut best = 0usize;
    let mut best_v = f(xs[0]).abs();
    for (j, &x) in xs.iter().enumerate().skip(1) {
        let v = f(x).abs();
        if v > best_v || best_v.is_nan() {
            best = j;
            best_v = v;
        }
    }
    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(m)];
    let (x, v) = golden_max(&|x| f(x).abs(), lo, hi);
    if v > best_v {
        SupEstimate { value: v, argmax: x, estimate: true }
    } else {
        SupEstimate { value: best_v, argmax: xs[best], estimate: true }
    }
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    if fc > fd { (c, fc) } else { (d, fd) }
}

/// Result of checking one instance of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `rhs - lhs`
    pub slack: f64,
}

impl BoundCheck {
    fn upper(lhs: f64, rhs: f64) -> Self {
        let holds = lhs <= rhs * (1.0 + 1e-12) + 1e-15;
        Self { lhs, rhs, holds, slack: rhs - lhs }
    }
}

/// `|f(x)| <= 2 (sum_k x^{lambda_k beta_k}) ||f||_inf`, with the sup norm grid-estimated.
pub fn pointwise_bound_check(f: &MuntzPolynomial, x: f64, beta: &[f64]) -> Result<BoundCheck> {
    let sup = sup_norm(&|t| f.eval(t)).value;
    pointwise_bound_with_sup(f, x, beta, sup)
}

/// As [`pointwise_bound_check`] with a precomputed `||f||_inf`.
pub fn pointwise_bound_with_sup(f: &MuntzPolynomial, x: f64, beta: &[f64], sup: f64) -> Result<BoundCheck> {
    if beta.len() != f.exponents.len() {
        return Err(invalid("one weight per exponent is required"));
    }
    if beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(invalid("weights must be nonnegative"));
    }
    let total: f64 = beta.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("weights must sum to 1 (got {total})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0,1]")));
    }
    let s: f64 = f
        .exponents
        .iter()
        .zip(beta)
        .map(|(l, b)| if *b == 0.0 { 1.0 } else { x.powf(l * b) })
        .sum();
    Ok(BoundCheck::upper(f.eval(x).abs(), 2.0 * s * sup))
}

/// `||f'||_inf / ((sum lambda_k) ||f||_inf)` with grid-estimated sup norms.
pub fn bernstein_ratio(f: &MuntzPolynomial) -> Result<f64> {
    let sup = sup_norm(&|t| f.eval(t)).value;
    if sup == 0.0 {
        return Err(Error::UndefinedRatio("f vanishes identically".into()));
    }
    let dsup = sup_norm(&|t| f.derivative(t, 1)).value;
    Ok(dsup / (f.exponent_sum() * sup))
}

/// `||f||_1 >= min(||f||_inf / 4, ||f||_inf^2 / (2 ||f'||_inf))` for `f = phi^2`.
///
/// `||f||_1 = ||phi||_2^2` is exact; the sup norms are grid estimates.
pub fn l1_min_inequality_check(phi: &MuntzPolynomial) -> Result<BoundCheck> {
    let l1 = phi.l2_norm_sq();
    let sup = sup_norm(&|t| phi.eval(t).powi(2)).value;
    let dsup = sup_norm(&|t| 2.0 * phi.eval(t) * phi.derivative(t, 1)).value;
    if sup == 0.0 || dsup == 0.0 {
        return Err(Error::UndefinedRatio("phi^2 is constant".into()));
    }
    let rhs = (sup / 4.0).min(sup * sup / (2.0 * dsup));
    // lower bound: rhs <= lhs
    let holds = rhs <= l1 * (1.0 + 1e-12) + 1e-15;
    Ok(BoundCheck { lhs: rhs, rhs: l1, holds, slack: l1 - rhs })
}

/// Empirical frame bounds `d1 <= ||sum f_k||^2 / sum ||f_k||^2 <= d2` for the block decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockFrameBounds {
    pub d1: f64,
    pub d2: f64,
}

pub fn block_frame_bounds(seq: &LambdaSequence, blocks: &BlockStructure) -> Result<BlockFrameBounds> {
    let b = lebesgue_gram(seq, true).entries;
    let n = b.nrows();
    let mut block_of = vec![0usize; n];
    for (k, r) in blocks.blocks().into_iter().enumerate() {
        for i in r {
            if i < n {
                block_of[i] = k;
            }
        }
    }
    let diag = DMatrix::from_fn(n, n, |i, j| if block_of[i] == block_of[j] { b[(i, j)] } else { 0.0 });
    let ev = generalized_eigenvalues(&b, &diag)?;
    Ok(BlockFrameBounds {
        d1: *ev.last().expect("non-empty"),
        d2: ev[0],
    })
}

//! Singular values of the truncated embedding `M^2_Lambda -> L^2(mu)` and
//! upper-bound certificates for its norms.
//!
//! With `g_n = lambda_n^{1/2} x^{lambda_n}`, `A` is the Gram matrix of the
//! `g_n` in `L^2(mu)` and `B` the one in `L^2[0,1]`; the singular values of
//! the truncated embedding solve `A v = s^2 B v`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{lebesgue_gram, BasisKind, GramMatrix, MeasureKind, PsiEvaluator, K_MAX};
use crate::linalg::{
    cholesky_lower, clamp_eigenvalues, singular_values_desc, solve_lower, symmetric_eigenvalues, whiten,
    DdCholesky, Precision,
};
use crate::logspace::log_sum_exp;
use crate::measures::{check_tail_majorant, linear_fit, Measure, PowerTail, TailMajorant};
use crate::quadrature::{dyadic_breaks, integrate_partition};
use crate::sequences::{classify, LambdaSequence};

/// A truncated embedding problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingProblem {
    pub lambda: LambdaSequence,
    pub measure: Measure,
    pub n_seq: usize,
}

impl EmbeddingProblem {
    /// Use the first `n` exponents of `seq`.
    pub fn new(seq: &LambdaSequence, measure: Measure, n: usize) -> Result<Self> {
        Ok(Self {
            lambda: seq.truncate(n)?,
            measure,
            n_seq: seq.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }
}

/// `A_nm = (lambda_n lambda_m)^{1/2} ∫ x^{lambda_n + lambda_m} dmu`, assembled from log moments.
pub fn measure_gram(seq: &LambdaSequence, mu: &Measure) -> Result<GramMatrix> {
    let lam = seq.values();
    let n = lam.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<f64> {
            let lm = mu.ln_moment(lam[i] + lam[j])?;
            Ok((0.5 * (lam[i].ln() + lam[j].ln()) + lm).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut a = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        a[(i, j)] = v;
        a[(j, i)] = v;
    }
    Ok(GramMatrix {
        entries: a,
        basis: BasisKind::Normalized,
        measure: MeasureKind::Mu,
    })
}

/// `F` with `A = F F^T` for purely atomic measures: `F_nk = c_k^{1/2} lambda_n^{1/2} a_k^{lambda_n}`.
pub fn atomic_factor(seq: &LambdaSequence, mu: &Measure) -> Option<DMatrix<f64>> {
    let atoms = mu.collect_atoms()?;
    let lam = seq.values();
    Some(DMatrix::from_fn(lam.len(), atoms.len(), |n, k| {
        let t = &atoms[k];
        (0.5 * t.ln_weight + 0.5 * lam[n].ln() + lam[n] * t.ln_position).exp()
    }))
}

/// Singular values from the pencil `(A, B)` by Cholesky whitening, largest first.
pub fn singular_values(a: &GramMatrix, b: &GramMatrix) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(invalid("Gram matrices differ in size"));
    }
    let l = cholesky_lower(&b.entries)?;
    let c = whiten(&a.entries, &l)?;
    let ev = clamp_eigenvalues(&symmetric_eigenvalues(&c))?;
    Ok(ev.into_iter().map(f64::sqrt).collect())
}

/// Singular values of `L^{-1} F` where `B = L L^T`, padded with zeros to `N`.
pub fn singular_values_from_factor(f: &DMatrix<f64>, lambdas: &[f64], precision: Precision) -> Result<Vec<f64>> {
    let n = lambdas.len();
    let m = match precision {
        Precision::Double => {
            let b = crate::geometry::lebesgue_gram_of(lambdas, true)?.entries;
            solve_lower(&cholesky_lower(&b)?, f)?
        }
        Precision::Extended => DdCholesky::lebesgue(lambdas)?.solve(f),
    };
    let mut sv = if m.ncols() == 0 { Vec::new() } else { singular_values_desc(&m) };
    sv.truncate(n);
    sv.resize(n, 0.0);
    Ok(sv)
}

/// How the singular values were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralRoute {
    /// Eigenvalues of `L^{-1} A L^{-T}`.
    Whitening,
    /// Singular values of `L^{-1} F` with `A = F F^T`; exact zeros beyond the number of atoms.
    AtomicFactor,
}

fn spectrum_from(
    lambdas: &[f64],
    a: &DMatrix<f64>,
    factor: Option<&DMatrix<f64>>,
    precision: Precision,
) -> Result<Vec<f64>> {
    if let Some(f) = factor {
        return singular_values_from_factor(f, lambdas, precision);
    }
    let c = match precision {
        Precision::Double => {
            let b = crate::geometry::lebesgue_gram_of(lambdas, true)?.entries;
            whiten(a, &cholesky_lower(&b)?)?
        }
        Precision::Extended => DdCholesky::lebesgue(lambdas)?.whiten(a),
    };
    let ev = clamp_eigenvalues(&symmetric_eigenvalues(&c))?;
    Ok(ev.into_iter().map(f64::sqrt).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchattenEntry {
    pub q: f64,
    /// `sum s_i^q`
    pub partial_sum: f64,
    /// `(sum s_i^q)^{1/q}`
    pub norm: f64,
}

fn schatten_table(sv: &[f64], q_set: &[f64]) -> Vec<SchattenEntry> {
    q_set
        .iter()
        .map(|&q| {
            let terms: Vec<f64> = sv.iter().filter(|s| **s > 0.0).map(|s| s.powf(q)).collect();
            let partial_sum = crate::logspace::pairwise_sum(&terms);
            SchattenEntry {
                q,
                partial_sum,
                norm: partial_sum.powf(1.0 / q),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendPoint {
    pub n: usize,
    pub op_norm: f64,
    pub schatten: Vec<SchattenEntry>,
}

/// Least-squares fit `ln s_n ~ a + n ln(rate)` over singular values above the noise floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub ln_intercept: f64,
    pub points: usize,
    pub residual: f64,
}

/// Singular values below `DECAY_FLOOR * s_1` are treated as rounding noise in decay fits.
pub const DECAY_FLOOR: f64 = 1.5e-8;

pub fn decay_fit(sv: &[f64]) -> Option<DecayFit> {
    let top = *sv.first()?;
    if !(top > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = sv
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > DECAY_FLOOR * top)
        .map(|(i, s)| (i as f64, s.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (slope, intercept, residual) = linear_fit(&pts)?;
    Some(DecayFit {
        rate: slope.exp(),
        ln_intercept: intercept,
        points: pts.len(),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub n_seq: usize,
    pub singular_values: Vec<f64>,
    pub op_norm: f64,
    pub schatten: Vec<SchattenEntry>,
    /// Diagnostics at truncations `N/4`, `N/2`, `N`.
    pub n_trend: Vec<TrendPoint>,
    pub decay_fit: Option<DecayFit>,
    pub route: SpectralRoute,
    pub precision: Precision,
}

fn trend_sizes(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [n / 4, n / 2, n].into_iter().filter(|&k| k >= 1).collect();
    v.dedup();
    v
}

fn split_scale(mu: &Measure) -> (f64, &Measure) {
    match mu {
        Measure::Scaled { c, inner } => {
            let (c2, m) = split_scale(inner);
            (c * c2, m)
        }
        m => (1.0, m),
    }
}

/// Full spectral analysis of a truncated problem.
pub fn analyze(problem: &EmbeddingProblem, q_set: &[f64], precision: Precision) -> Result<SpectralReport> {
    if let Some(q) = q_set.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
        return Err(invalid(format!("Schatten exponent q = {q} must be positive")));
    }
    let lam = problem.lambda.values();
    let n = lam.len();
    // singular values of Scaled{c, mu} are exactly sqrt(c) times those of mu
    let (scale, inner) = split_scale(&problem.measure);
    let factor = atomic_factor(&problem.lambda, inner);
    let a = if factor.is_none() {
        Some(measure_gram(&problem.lambda, inner)?.entries)
    } else {
        None
    };
    let sizes = trend_sizes(n);
    let spectra = sizes
        .par_iter()
        .map(|&k| {
            let f = factor.as_ref().map(|f| f.rows(0, k).into_owned());
            let a_k = a.as_ref().map(|a| a.view((0, 0), (k, k)).into_owned()).unwrap_or_else(|| DMatrix::zeros(0, 0));
            let sv = spectrum_from(&lam[..k], &a_k, f.as_ref(), precision)?;
            Ok(sv.into_iter().map(|s| s * scale.sqrt()).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let n_trend = sizes
        .iter()
        .zip(&spectra)
        .map(|(&k, sv)| TrendPoint {
            n: k,
            op_norm: sv[0],
            schatten: schatten_table(sv, q_set),
        })
        .collect();
    let sv = spectra.last().expect("at least one truncation").clone();
    Ok(SpectralReport {
        n,
        n_seq: problem.n_seq,
        op_norm: sv[0],
        schatten: schatten_table(&sv, q_set),
        decay_fit: decay_fit(&sv),
        singular_values: sv,
        n_trend,
        route: if factor.is_some() { SpectralRoute::AtomicFactor } else { SpectralRoute::Whitening },
        precision,
    })
}

/// Operator norm of the truncated embedding.
pub fn op_norm(seq: &LambdaSequence, mu: &Measure, precision: Precision) -> Result<f64> {
    let p = EmbeddingProblem::new(seq, mu.clone(), seq.len())?;
    Ok(analyze(&p, &[], precision)?.op_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EssentialPoint {
    pub m: usize,
    /// Norm of the embedding of `mu` restricted to `[1 - 1/m, 1]`.
    pub norm: f64,
}

/// `||i_{mu'_m}||` for each `m`, the tail-restriction trend approximating the essential norm.
pub fn essential_norm_trend(
    seq: &LambdaSequence,
    mu: &Measure,
    n: usize,
    m_list: &[usize],
    precision: Precision,
) -> Result<Vec<EssentialPoint>> {
    if m_list.iter().any(|&m| m < 2) || m_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("m_list must be strictly increasing integers >= 2"));
    }
    let seq = seq.truncate(n)?;
    m_list
        .par_iter()
        .map(|&m| {
            let restricted = mu.restrict_tail(m)?;
            let norm = if matches!(restricted, Measure::Zero) {
                0.0
            } else {
                op_norm(&seq, &restricted, precision)?
            };
            Ok(EssentialPoint { m, norm })
        })
        .collect()
}

/// Which upper bound a certificate carries.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateKind {
    Psi,
    Rho { c: Option<f64>, alpha: Option<f64> },
    Sublinear,
    CompactSupport { k: usize, b: f64, b_prime: f64 },
    HilbertSchmidtPsi,
}

/// The norm a certificate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "norm", rename_all = "snake_case")]
pub enum BoundTarget {
    Operator,
    /// `(sum s_i^q)^{1/q}`
    Schatten { q: f64 },
    /// Finiteness implies membership in `S_q`; the value is not a bound.
    Membership { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundnessFlag {
    /// `psi` built from truncated distances underestimates the full `psi`.
    PsiTruncationLowerEstimate,
    /// The last `psi` term is not negligible on the support of the measure.
    PsiTailUnsound,
    /// A supremum was taken over a grid only.
    GridEstimate,
    QuadratureEstimate,
    /// The value vanishes only because of the truncation.
    DegenerateTruncation,
    MembershipOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption {
    pub name: String,
    pub verified: bool,
    pub detail: String,
}

impl Assumption {
    fn new(name: &str, verified: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verified,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionMass {
    pub j: usize,
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Entrywise `A <= S B` witness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MajorizationWitness {
    pub sublinear_norm: f64,
    /// `max A_nm / (S B_nm)`
    pub max_ratio: f64,
    pub b_max_eigenvalue: f64,
    pub b_min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub target: BoundTarget,
    pub n: usize,
    /// `+inf` when the bound diverges.
    pub value: f64,
    pub assumptions: Vec<Assumption>,
    pub flags: Vec<SoundnessFlag>,
    /// `(N, value)` at smaller truncations, where computed.
    pub trend: Vec<(usize, f64)>,
    pub partition: Vec<PartitionMass>,
    pub majorization: Option<MajorizationWitness>,
}

impl Certificate {
    fn new(kind: CertificateKind, target: BoundTarget, n: usize, value: f64) -> Self {
        Self {
            kind,
            target,
            n,
            value,
            assumptions: Vec::new(),
            flags: Vec::new(),
            trend: Vec::new(),
            partition: Vec::new(),
            majorization: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// A numeric upper bound whose assumptions were all verified.
    pub fn comparable(&self) -> bool {
        self.is_finite()
            && self.assumptions.iter().all(|a| a.verified)
            && !matches!(self.target, BoundTarget::Membership { .. })
    }
}

/// `ln ∫ psi^2 dnu = ln sum_{n,m} d_n^{-1} d_m^{-1} ∫ x^{lambda_n + lambda_m} dnu`.
fn ln_psi_square_integral(psi: &PsiEvaluator, nu: &Measure) -> Result<f64> {
    let lam = psi.lambdas();
    let c = psi.ln_coefficients();
    let n = lam.len();
    let mut terms = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            terms.push(c[i] + c[j] + nu.ln_moment(lam[i] + lam[j])?);
        }
    }
    Ok(log_sum_exp(&terms))
}

fn tail_flag_on_support(psi: &PsiEvaluator, mu: &Measure) -> bool {
    let ln_top = mu.ln_support_max();
    ln_top >= 0.0 || (ln_top > f64::NEG_INFINITY && psi.ln_psi(ln_top, 0).tail_flag)
}

/// `(∫ psi^2 dmu)^{1/2}`, an upper bound for the operator norm.
pub fn psi_certificate(psi: &PsiEvaluator, mu: &Measure) -> Result<Certificate> {
    let value = (0.5 * ln_psi_square_integral(psi, mu)?).exp();
    let mut cert = Certificate::new(CertificateKind::Psi, BoundTarget::Operator, psi.truncation(), value);
    cert.assumptions.push(Assumption::new(
        "psi_square_integrable",
        value.is_finite(),
        "∫ psi^2 dmu finite at this truncation",
    ));
    cert.flags.push(SoundnessFlag::PsiTruncationLowerEstimate);
    if tail_flag_on_support(psi, mu) {
        cert.flags.push(SoundnessFlag::PsiTailUnsound);
    }
    Ok(cert)
}

/// `(∫_0^1 psi(x)^2 rho'(1-x) dx)^{1/2}` under `mu(J_eps) <= rho(eps)`.
pub fn rho_certificate(psi: &PsiEvaluator, mu: &Measure, rho: &dyn TailMajorant) -> Result<Certificate> {
    check_tail_majorant(mu, rho)?;
    let power = rho.as_power();
    let mut flags = vec![SoundnessFlag::PsiTruncationLowerEstimate, SoundnessFlag::PsiTailUnsound];
    let ln_sq = match power {
        // rho'(1 - x) dx is the power-tail measure with the same C, alpha
        Some((c, alpha)) => ln_psi_square_integral(psi, &Measure::PowerTail(PowerTail::new(c, alpha, 0.0)?))?,
        None => {
            flags.push(SoundnessFlag::QuadratureEstimate);
            let breaks = dyadic_breaks(0.0, 1.0, true, 120);
            let q = integrate_partition(
                &|t: f64| (2.0 * psi.ln_psi((-t).ln_1p(), 0).ln_value).exp() * rho.derivative(t),
                &breaks,
                1e-12,
            );
            q.value.ln()
        }
    };
    let value = (0.5 * ln_sq).exp();
    let mut cert = Certificate::new(
        CertificateKind::Rho {
            c: power.map(|p| p.0),
            alpha: power.map(|p| p.1),
        },
        BoundTarget::Operator,
        psi.truncation(),
        value,
    );
    cert.assumptions.push(Assumption::new(
        "tail_majorant",
        true,
        "mu(J_eps) <= rho(eps) on the eps grid",
    ));
    cert.assumptions.push(Assumption::new(
        "psi_square_rho_integrable",
        value.is_finite(),
        "∫ psi(x)^2 rho'(1-x) dx finite at this truncation",
    ));
    cert.flags = flags;
    Ok(cert)
}

/// `2^{-k/2} b'^{-1/2} psi^{(k)}(b') psi(b/b') ||mu||^{1/2}`, a bound for the `S_{2/k}` norm when `supp mu ⊂ [0, b]`.
pub fn compact_support_certificate(
    psi: &PsiEvaluator,
    mu: &Measure,
    b: f64,
    b_prime: f64,
    k: usize,
) -> Result<Certificate> {
    if !(0.0 < b && b < b_prime && b_prime < 1.0) {
        return Err(invalid(format!("need 0 < b < b' < 1, got b = {b}, b' = {b_prime}")));
    }
    if k == 0 || k > K_MAX {
        return Err(invalid(format!("derivative order k = {k} must lie in 1..={K_MAX}")));
    }
    let outside = mu.mass_above(b)?;
    if outside > 0.0 {
        return Err(Error::HypothesisViolated(format!(
            "mu((b, 1]) = {outside:e} > 0 for b = {b}"
        )));
    }
    let dk = psi.psi_eval(b_prime, k)?;
    let d0 = psi.psi_eval(b / b_prime, 0)?;
    let ln_value = -0.5 * k as f64 * std::f64::consts::LN_2 - 0.5 * b_prime.ln()
        + dk.ln_value
        + d0.ln_value
        + 0.5 * mu.total_mass().ln();
    let value = ln_value.exp();
    let mut cert = Certificate::new(
        CertificateKind::CompactSupport { k, b, b_prime },
        BoundTarget::Schatten { q: 2.0 / k as f64 },
        psi.truncation(),
        value,
    );
    cert.assumptions.push(Assumption::new("support_in_[0,b]", true, format!("mu((b,1]) = 0 for b = {b}")));
    let lambda1 = psi.lambdas()[0];
    cert.assumptions.push(Assumption::new(
        "derivatives_vanish_at_0",
        lambda1 > (k - 1) as f64,
        format!("lambda_1 = {lambda1} > k - 1 = {}", k - 1),
    ));
    cert.flags.push(SoundnessFlag::PsiTruncationLowerEstimate);
    if dk.tail_flag || d0.tail_flag {
        cert.flags.push(SoundnessFlag::PsiTailUnsound);
    }
    if value == 0.0 {
        cert.flags.push(SoundnessFlag::DegenerateTruncation);
    }
    Ok(cert)
}

/// Relative growth from `3N/4` to `N` below which `∫ Psi^2 dmu` is read as converged.
pub const HS_CONVERGENCE_TOL: f64 = 1e-2;

/// `∫ Psi^2 dmu` with `Psi(x) = psi'(x^{1/4}) psi(x^{1/4})`; finiteness indicates `S_2` membership.
pub fn hilbert_schmidt_certificate(seq: &LambdaSequence, mu: &Measure) -> Result<Certificate> {
    let n = seq.len();
    let mut sizes: Vec<usize> = [n / 2, (3 * n) / 4, n].into_iter().filter(|&k| k >= 1).collect();
    sizes.dedup();
    let mut trend = Vec::new();
    let mut unsound = false;
    for &k in &sizes {
        let psi = PsiEvaluator::new(&seq.truncate(k)?);
        let ln_v = mu.ln_integrate(&|lx| 2.0 * psi.ln_big_psi(lx).ln_value);
        if k == n {
            unsound = tail_flag_on_support(&psi, mu);
        }
        trend.push((k, ln_v.exp()));
    }
    let value = trend.last().expect("non-empty").1;
    let converged = if trend.len() >= 2 {
        let prev = trend[trend.len() - 2].1;
        value.is_finite() && (value - prev) <= HS_CONVERGENCE_TOL * value
    } else {
        value.is_finite()
    };
    let mut cert = Certificate::new(
        CertificateKind::HilbertSchmidtPsi,
        BoundTarget::Membership { q: 2.0 },
        n,
        if converged { value } else { f64::INFINITY },
    );
    cert.assumptions.push(Assumption::new(
        "big_psi_square_integrable",
        converged,
        format!("∫ Psi^2 dmu along truncations {trend:?}"),
    ));
    cert.flags.push(SoundnessFlag::MembershipOnly);
    cert.flags.push(SoundnessFlag::PsiTruncationLowerEstimate);
    if unsound {
        cert.flags.push(SoundnessFlag::PsiTailUnsound);
    }
    cert.trend = trend;
    cert.partition = hs_partition(mu);
    Ok(cert)
}

/// Masses of `[b_j, b_{j+1})` with `b_0 = 0`, `b_1 = 1/2`, `b_{j+1} = b_j^{1/2}`.
fn hs_partition(mu: &Measure) -> Vec<PartitionMass> {
    // track 1 - b_j to keep resolution near 1
    let mut out = Vec::new();
    let mut lo = 0.0f64;
    let mut gap_lo = 1.0f64;
    let mut gap_hi = 0.5f64;
    let mut j = 0;
    loop {
        let hi = 1.0 - gap_hi;
        let mass = (mu.tail_mass(gap_lo).unwrap_or(0.0) - mu.tail_mass(gap_hi).unwrap_or(0.0)).max(0.0);
        out.push(PartitionMass { j, lo, hi, mass });
        if gap_hi < 1e-12 {
            break;
        }
        lo = hi;
        gap_lo = gap_hi;
        // 1 - sqrt(1 - g) = g / (1 + sqrt(1 - g))
        gap_hi = gap_hi / (1.0 + (1.0 - gap_hi).sqrt());
        j += 1;
    }
    out
}

/// `(||mu||_S ||B|| ||B^{-1}||)^{1/2}` after verifying `A <= ||mu||_S B` entrywise.
pub fn sublinear_embedding_bound(seq: &LambdaSequence, mu: &Measure) -> Result<Certificate> {
    let report = classify(seq);
    if report.min_ratio <= 1.0 {
        return Err(Error::HypothesisViolated("exponent sequence is not lacunary".into()));
    }
    let modulus = mu.modulus_report(None)?;
    let s = modulus.sublinear_norm;
    if !s.is_finite() {
        return Err(Error::HypothesisViolated("measure is not sublinear".into()));
    }
    let a = measure_gram(seq, mu)?.entries;
    let b = lebesgue_gram(seq, true).entries;
    let n = seq.len();
    let mut max_ratio: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let bound = s * b[(i, j)];
            if a[(i, j)] > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::ReEstimate(format!(
                    "A[{i},{j}] = {:e} exceeds ||mu||_S B[{i},{j}] = {bound:e}",
                    a[(i, j)]
                )));
            }
            if bound > 0.0 {
                max_ratio = max_ratio.max(a[(i, j)] / bound);
            }
        }
    }
    let ev = symmetric_eigenvalues(&b);
    let (hi, lo) = (ev[0], *ev.last().expect("non-empty"));
    if !(lo > 0.0) {
        return Err(Error::IllConditioned("Lebesgue Gram matrix is not positive definite".into()));
    }
    let value = (s * hi / lo).sqrt();
    let mut cert = Certificate::new(CertificateKind::Sublinear, BoundTarget::Operator, n, value);
    cert.assumptions.push(Assumption::new(
        "lacunary",
        true,
        format!("min ratio {}", report.min_ratio),
    ));
    cert.assumptions.push(Assumption::new(
        "entrywise_majorization",
        true,
        format!("max A/(S B) = {max_ratio}"),
    ));
    if !modulus.sublinear_exact {
        cert.flags.push(SoundnessFlag::GridEstimate);
    }
    cert.majorization = Some(MajorizationWitness {
        sublinear_norm: s,
        max_ratio,
        b_max_eigenvalue: hi,
        b_min_eigenvalue: lo,
    });
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RieszCheck {
    pub offdiag_hs: f64,
    pub invertible: bool,
    /// Computed only when the Hilbert-Schmidt test is inconclusive.
    pub min_eigenvalue: Option<f64>,
}

/// Smallest eigenvalue accepted as evidence of invertibility.
pub const RIESZ_EIGEN_TOL: f64 = 1e-10;

/// Invertibility of a Gram matrix of unit vectors.
pub fn riesz_sequence_check(gamma: &DMatrix<f64>) -> Result<RieszCheck> {
    let n = gamma.nrows();
    if gamma.ncols() != n {
        return Err(invalid("Gram matrix must be square"));
    }
    if (0..n).any(|i| (gamma[(i, i)] - 1.0).abs() > 1e-10) {
        return Err(invalid("Gram matrix must have unit diagonal"));
    }
    let mut sq = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sq.push(gamma[(i, j)].powi(2));
            }
        }
    }
    let offdiag_hs = crate::logspace::pairwise_sum(&sq).sqrt();
    if offdiag_hs < 1.0 {
        return Ok(RieszCheck {
            offdiag_hs,
            invertible: true,
            min_eigenvalue: None,
        });
    }
    let ev = symmetric_eigenvalues(gamma);
    let min = *ev.last().expect("non-empty");
    Ok(RieszCheck {
        offdiag_hs,
        invertible: min > RIESZ_EIGEN_TOL,
        min_eigenvalue: Some(min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PowerMajorant;
    use crate::sequences::make_geometric;
    use proptest::prelude::*;

    fn seq(v: &[f64]) -> LambdaSequence {
        LambdaSequence::explicit(v.to_vec()).unwrap()
    }

    fn delta_half() -> Measure {
        Measure::atomic(&[(0.5, 1.0)]).unwrap()
    }

    #[test]
    fn measure_gram_examples() {
        let a = measure_gram(&seq(&[1.0]), &delta_half()).unwrap().entries;
        assert!((a[(0, 0)] - 0.25).abs() < 1e-16);
        let s = seq(&[1.0, 2.0]);
        let a = measure_gram(&s, &Measure::lebesgue()).unwrap().entries;
        let b = lebesgue_gram(&s, true).entries;
        assert!((a - b).norm() < 1e-15);
        let a = measure_gram(&s, &delta_half()).unwrap().entries;
        assert!((a[(0, 1)] - 2f64.sqrt() / 8.0).abs() < 1e-16);
    }

    #[test]
    fn singular_value_examples() {
        let gm = |v: f64| GramMatrix {
            entries: DMatrix::from_element(1, 1, v),
            basis: BasisKind::Normalized,
            measure: MeasureKind::Mu,
        };
        let s = singular_values(&gm(0.25), &gm(1.0 / 3.0)).unwrap();
        assert!((s[0] - 3f64.sqrt() / 2.0).abs() < 1e-15);

        let sq = make_geometric(1.0, 2.0, 8).unwrap();
        let b = lebesgue_gram(&sq, true);
        for s in singular_values(&b, &b).unwrap() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let mut a = b.clone();
        a.entries *= 2.5;
        for s in singular_values(&a, &b).unwrap() {
            assert!((s - 2.5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn analyze_rank_one() {
        let p = EmbeddingProblem::new(&seq(&[1.0]), delta_half(), 1).unwrap();
        let r = analyze(&p, &[0.5, 1.0, 2.0], Precision::Double).unwrap();
        let want = 3f64.sqrt() / 2.0;
        assert!((r.op_norm - want).abs() < 1e-12);
        for e in &r.schatten {
            assert!((e.norm - want).abs() < 1e-12);
        }
        assert_eq!(r.route, SpectralRoute::AtomicFactor);
    }

    #[test]
    fn analyze_lebesgue_identity() {
        let sq = make_geometric(2.0, 2.0, 16).unwrap();
        let p = EmbeddingProblem::new(&sq, Measure::lebesgue(), 16).unwrap();
        let r = analyze(&p, &[1.0, 2.0], Precision::Double).unwrap();
        for s in &r.singular_values {
            assert!((s - 1.0).abs() < 1e-10);
        }
        assert!((r.schatten[0].norm - 16.0).abs() < 1e-8);
        assert!((r.schatten[1].norm - 4.0).abs() < 1e-9);
        assert_eq!(r.n_trend.iter().map(|t| t.n).collect::<Vec<_>>(), vec![4, 8, 16]);
    }

    #[test]
    fn power_tail_decays_geometrically() {
        let sq = make_geometric(2.0, 2.0, 16).unwrap();
        let p = EmbeddingProblem::new(&sq, Measure::power_tail(1.0, 2.0, 0.0).unwrap(), 16).unwrap();
        let r = analyze(&p, &[1.0], Precision::Double).unwrap();
        assert!(r.decay_fit.unwrap().rate < 1.0);
    }

    #[test]
    fn extended_precision_agrees() {
        let sq = make_geometric(1.0, 2.0, 12).unwrap();
        let mu = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        let p = EmbeddingProblem::new(&sq, mu, 12).unwrap();
        let d = analyze(&p, &[], Precision::Double).unwrap();
        let e = analyze(&p, &[], Precision::Extended).unwrap();
        for (a, b) in d.singular_values.iter().zip(&e.singular_values) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn essential_trend_examples() {
        let sq = make_geometric(1.0, 2.0, 16).unwrap();
        let mu = Measure::lebesgue_on(0.0, 0.8).unwrap();
        let t = essential_norm_trend(&sq, &mu, 16, &[2, 4, 8], Precision::Double).unwrap();
        assert!(t[0].norm > 0.0 && t[2].norm == 0.0);
        assert!(essential_norm_trend(&sq, &mu, 16, &[4, 2], Precision::Double).is_err());
    }

    #[test]
    fn psi_certificate_examples() {
        let s = seq(&[1.0]);
        let psi = PsiEvaluator::new(&s);
        let c = psi_certificate(&psi, &delta_half()).unwrap();
        assert!((c.value - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(c.comparable());
        let c = psi_certificate(&psi, &Measure::lebesgue()).unwrap();
        assert!((c.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rho_certificate_examples() {
        let psi = PsiEvaluator::new(&seq(&[1.0]));
        let c = rho_certificate(&psi, &Measure::lebesgue(), &PowerMajorant::new(1.0, 1.0).unwrap()).unwrap();
        assert!((c.value - 1.0).abs() < 1e-14);
        let pt = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        let c = rho_certificate(&psi, &pt, &PowerMajorant::new(1.0, 2.0).unwrap()).unwrap();
        assert!((c.value - 0.5f64.sqrt()).abs() < 1e-14);
        let err = rho_certificate(&psi, &Measure::lebesgue(), &PowerMajorant::new(1.0, 2.0).unwrap());
        assert!(matches!(err, Err(Error::HypothesisViolated(_))));
    }

    /// A majorant that is not recognised as a power, forcing the quadrature path.
    struct Opaque(PowerMajorant);
    impl TailMajorant for Opaque {
        fn value(&self, e: f64) -> f64 {
            self.0.value(e)
        }
        fn derivative(&self, e: f64) -> f64 {
            self.0.derivative(e)
        }
    }

    #[test]
    fn rho_quadrature_path_matches_closed_form() {
        let psi = PsiEvaluator::new(&make_geometric(1.0, 2.0, 6).unwrap());
        let rho = PowerMajorant::new(1.0, 2.0).unwrap();
        let mu = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        let exact = rho_certificate(&psi, &mu, &rho).unwrap().value;
        let quad = rho_certificate(&psi, &mu, &Opaque(rho)).unwrap().value;
        assert!((exact - quad).abs() < 1e-9 * exact);
    }

    #[test]
    fn compact_support_examples() {
        let psi = PsiEvaluator::new(&seq(&[1.0]));
        let c = compact_support_certificate(&psi, &delta_half(), 0.5, 0.75, 1).unwrap();
        assert!((c.value - 4.0 / 6f64.sqrt()).abs() < 1e-14);
        assert!(c.comparable());
        let c = compact_support_certificate(&psi, &delta_half(), 0.5, 0.75, 2).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(!c.comparable());
        let err = compact_support_certificate(&psi, &delta_half(), 0.4, 0.75, 1);
        assert!(matches!(err, Err(Error::HypothesisViolated(_))));
        assert!(compact_support_certificate(&psi, &delta_half(), 0.5, 0.4, 1).is_err());
    }

    #[test]
    fn compact_support_bounds_schatten_norms() {
        let sq = make_geometric(2.0, 2.0, 20).unwrap();
        let mu = Measure::lebesgue_on(0.0, 0.5).unwrap();
        let psi = PsiEvaluator::new(&sq);
        let p = EmbeddingProblem::new(&sq, mu.clone(), 20).unwrap();
        let r = analyze(&p, &[2.0, 1.0], Precision::Double).unwrap();
        for (k, entry) in [(1usize, &r.schatten[0]), (2, &r.schatten[1])] {
            let c = compact_support_certificate(&psi, &mu, 0.5, 0.75, k).unwrap();
            assert!(c.comparable() && c.value >= entry.norm, "k={k}: {} vs {}", c.value, entry.norm);
        }
    }

    #[test]
    fn hilbert_schmidt_examples() {
        let c = hilbert_schmidt_certificate(&seq(&[1.0]), &delta_half()).unwrap();
        assert!((c.value - 9.0 * 0.5f64.sqrt()).abs() < 1e-13);
        let c = hilbert_schmidt_certificate(&seq(&[1.0]), &Measure::lebesgue()).unwrap();
        assert!((c.partition[0].mass - 0.5).abs() < 1e-15);
        assert!((c.partition[1].mass - (0.5f64.sqrt() - 0.5)).abs() < 1e-15);
        assert!(!c.comparable());

        let sq = make_geometric(2.0, 2.0, 32).unwrap();
        let fine = hilbert_schmidt_certificate(&sq, &Measure::power_tail(1.0, 5.0, 0.0).unwrap()).unwrap();
        assert!(fine.is_finite(), "{:?}", fine.trend);
        let diverging = hilbert_schmidt_certificate(&sq, &Measure::power_tail(1.0, 3.0, 0.0).unwrap()).unwrap();
        assert!(!diverging.is_finite(), "{:?}", diverging.trend);
    }

    #[test]
    fn sublinear_bound_examples() {
        let sq = make_geometric(1.0, 2.0, 10).unwrap();
        let c = sublinear_embedding_bound(&sq, &Measure::lebesgue()).unwrap();
        let ev = symmetric_eigenvalues(&lebesgue_gram(&sq, true).entries);
        assert!((c.value - (ev[0] / ev[9]).sqrt()).abs() < 1e-9 * c.value);
        let c4 = sublinear_embedding_bound(&sq, &Measure::scaled(4.0, Measure::lebesgue()).unwrap()).unwrap();
        assert!((c4.value - 2.0 * c.value).abs() < 1e-12 * c4.value);

        let sq = make_geometric(1.0, 2.0, 16).unwrap();
        let mu = Measure::atomic(&[(0.5, 0.5), (0.75, 0.25), (0.875, 0.125), (0.9375, 0.0625)]).unwrap();
        let c = sublinear_embedding_bound(&sq, &mu).unwrap();
        assert!(op_norm(&sq, &mu, Precision::Double).unwrap() <= c.value);

        let err = sublinear_embedding_bound(&sq, &Measure::power_tail(1.0, 0.5, 0.0).unwrap());
        assert!(matches!(err, Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn riesz_examples() {
        let r = riesz_sequence_check(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(r.offdiag_hs, 0.0);
        assert!(r.invertible);
        let r = riesz_sequence_check(&DMatrix::from_element(3, 3, 1.0)).unwrap();
        assert!(!r.invertible);
        assert!(r.min_eigenvalue.unwrap().abs() < 1e-12);
        assert!(riesz_sequence_check(&DMatrix::from_element(2, 2, 0.5)).is_err());
    }

    fn arb_measure() -> impl Strategy<Value = Measure> {
        prop_oneof![
            proptest::collection::vec((0.05f64..0.99, 0.05f64..3.0), 1..4)
                .prop_map(|v| Measure::atomic(&v).unwrap()),
            (0.2f64..3.0, 0.5f64..4.0).prop_map(|(c, a)| Measure::power_tail(c, a, 0.0).unwrap()),
            (0.0f64..0.8, 0.2f64..3.0).prop_map(|(lo, h)| Measure::scaled(h, Measure::lebesgue_on(lo, 1.0).unwrap()).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn truncation_monotone(mu in arb_measure(), n in 2usize..12) {
            let sq = make_geometric(1.0, 2.0, n).unwrap();
            let p = EmbeddingProblem::new(&sq, mu, n).unwrap();
            let r = analyze(&p, &[0.5, 1.0, 2.0], Precision::Double).unwrap();
            prop_assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
            for w in r.n_trend.windows(2) {
                prop_assert!(w[1].op_norm >= w[0].op_norm * (1.0 - 1e-10));
                for (a, b) in w[0].schatten.iter().zip(&w[1].schatten) {
                    prop_assert!(b.partial_sum >= a.partial_sum * (1.0 - 1e-8));
                }
            }
        }

        #[test]
        fn additivity_bounds(m1 in arb_measure(), m2 in arb_measure()) {
            let sq = make_geometric(1.0, 2.0, 8).unwrap();
            let n1 = op_norm(&sq, &m1, Precision::Double).unwrap().powi(2);
            let n2 = op_norm(&sq, &m2, Precision::Double).unwrap().powi(2);
            let both = op_norm(&sq, &Measure::sum(vec![m1, m2]).unwrap(), Precision::Double).unwrap().powi(2);
            prop_assert!(both <= n1 + n2 + 1e-10);
            prop_assert!(both >= n1.max(n2) - 1e-10);
        }

        #[test]
        fn scaling_is_exact(mu in arb_measure(), c in 0.01f64..100.0) {
            let sq = make_geometric(1.0, 2.0, 8).unwrap();
            let p0 = EmbeddingProblem::new(&sq, mu.clone(), 8).unwrap();
            let p1 = EmbeddingProblem::new(&sq, Measure::scaled(c, mu).unwrap(), 8).unwrap();
            let s0 = analyze(&p0, &[], Precision::Double).unwrap().singular_values;
            let s1 = analyze(&p1, &[], Precision::Double).unwrap().singular_values;
            for (a, b) in s0.iter().zip(&s1) {
                prop_assert!((b - c.sqrt() * a).abs() <= 1e-13 * b);
            }
        }

        #[test]
        fn atomic_rank_bound(atoms in proptest::collection::vec((0.05f64..0.99, 0.05f64..3.0), 1..5)) {
            let sq = make_geometric(1.0, 2.0, 10).unwrap();
            let mu = Measure::atomic(&atoms).unwrap();
            let s = analyze(&EmbeddingProblem::new(&sq, mu, 10).unwrap(), &[], Precision::Double).unwrap().singular_values;
            for v in &s[atoms.len()..] {
                prop_assert!(v.abs() <= 1e-10);
            }
        }

        #[test]
        fn certificates_dominate(mu in arb_measure(), n in 1usize..12) {
            let sq = make_geometric(1.0, 2.0, n).unwrap();
            let psi = PsiEvaluator::new(&sq);
            let norm = op_norm(&sq, &mu, Precision::Double).unwrap();
            let c = psi_certificate(&psi, &mu).unwrap();
            prop_assert!(c.value >= norm - 1e-9);
            if let Ok(c) = sublinear_embedding_bound(&sq, &mu) {
                prop_assert!(c.value >= norm - 1e-9);
            }
        }

        #[test]
        fn sublinear_monomial_bound(mu in arb_measure(), lam in 0.0f64..1e6) {
            let s = mu.modulus_report(None).unwrap().sublinear_norm;
            if s.is_finite() {
                let v = ((2.0 * lam + 1.0) * mu.moment(2.0 * lam).unwrap()).sqrt();
                prop_assert!(v <= s.sqrt() * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}

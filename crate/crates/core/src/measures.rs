//! Finite positive measures on `[0, 1]` with log-domain moments.
//!
//! Atoms are stored as `(ln a_k, ln c_k)`: positions such as `1 - 1e-18`
//! are not representable as `f64` but their logarithms are.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::logspace::{ln_one_minus_exp, log_sum_exp, pairwise_sum};
use crate::quadrature::{dyadic_breaks, integrate_partition, Quadrature};
use crate::special::{ln_gamma_fn, ln_gamma_ratio};

/// Relative tolerance used for measure quadrature.
pub const QUAD_TOL: f64 = 1e-13;
const TAIL_DEPTH: usize = 120;

/// A point mass, in logarithmic coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub ln_position: f64,
    pub ln_weight: f64,
}

impl Atom {
    pub fn position(&self) -> f64 {
        self.ln_position.exp()
    }
    pub fn weight(&self) -> f64 {
        self.ln_weight.exp()
    }
    /// `1 - a`, accurate for atoms next to 1.
    pub fn gap(&self) -> f64 {
        -self.ln_position.exp_m1()
    }
}

/// Finitely many atoms, sorted by position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atomic {
    atoms: Vec<Atom>,
}

impl Atomic {
    /// Atoms from `(position, weight)` pairs.
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut logs = Vec::with_capacity(atoms.len());
        for &(a, c) in atoms {
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid(format!("atom position {a} must lie strictly inside (0,1)")));
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(format!("atom weight {c} must be positive and finite")));
            }
            logs.push(Atom {
                ln_position: a.ln(),
                ln_weight: c.ln(),
            });
        }
        Self::from_logs(logs)
    }

    pub fn from_logs(mut atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("an atomic measure needs at least one atom"));
        }
        for a in &atoms {
            if !(a.ln_position < 0.0 && a.ln_position.is_finite()) {
                return Err(invalid(format!(
                    "atom with ln position {} is not strictly inside (0,1)",
                    a.ln_position
                )));
            }
            if !a.ln_weight.is_finite() {
                return Err(invalid(format!("atom ln weight {} is not finite", a.ln_weight)));
            }
        }
        atoms.sort_by(|x, y| x.ln_position.total_cmp(&y.ln_position));
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
}

/// Density `C alpha (1 - x)^(alpha - 1)` on `[x0, 1)`, so that `mu(J_eps) = C eps^alpha` for `eps <= 1 - x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTail {
    pub c: f64,
    pub alpha: f64,
    pub x0: f64,
}

impl PowerTail {
    pub fn new(c: f64, alpha: f64, x0: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("power tail constant C = {c} must be positive")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("power tail exponent alpha = {alpha} must be positive")));
        }
        if !(0.0..1.0).contains(&x0) {
            return Err(invalid(format!("power tail support start x0 = {x0} must lie in [0,1)")));
        }
        Ok(Self { c, alpha, x0 })
    }

    /// Length of the support, `1 - x0`.
    pub fn span(&self) -> f64 {
        1.0 - self.x0
    }
}

/// Piecewise-constant density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseDensity {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || densities.len() + 1 != breakpoints.len() {
            return Err(invalid(
                "piecewise density needs k+1 breakpoints for k densities (k >= 1)",
            ));
        }
        if breakpoints[0] < 0.0 || *breakpoints.last().expect("non-empty") > 1.0 {
            return Err(invalid("piecewise breakpoints must lie in [0,1]"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("piecewise breakpoints must be strictly increasing"));
        }
        if densities.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(invalid("piecewise densities must be finite and nonnegative"));
        }
        if densities.iter().all(|h| *h == 0.0) {
            return Err(invalid("piecewise density has zero total mass"));
        }
        Ok(Self { breakpoints, densities })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.densities)
            .map(|(w, &h)| (w[0], w[1], h))
    }
}

/// A finite positive Borel measure on `[0, 1]` with no mass at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Measure {
    Atomic(Atomic),
    PowerTail(PowerTail),
    Piecewise(PiecewiseDensity),
    Scaled { c: f64, inner: Box<Measure> },
    Sum { parts: Vec<Measure> },
    /// Produced only by restrictions that remove all mass.
    Zero,
}

impl Measure {
    pub fn lebesgue() -> Self {
        Measure::Piecewise(PiecewiseDensity {
            breakpoints: vec![0.0, 1.0],
            densities: vec![1.0],
        })
    }

    /// Lebesgue measure restricted to `[lo, hi]`.
    pub fn lebesgue_on(lo: f64, hi: f64) -> Result<Self> {
        Ok(Measure::Piecewise(PiecewiseDensity::new(vec![lo, hi], vec![1.0])?))
    }

    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        Ok(Measure::Atomic(Atomic::new(atoms)?))
    }

    pub fn power_tail(c: f64, alpha: f64, x0: f64) -> Result<Self> {
        Ok(Measure::PowerTail(PowerTail::new(c, alpha, x0)?))
    }

    pub fn scaled(c: f64, inner: Measure) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("scale factor c = {c} must be positive")));
        }
        Ok(Measure::Scaled {
            c,
            inner: Box::new(inner),
        })
    }

    pub fn sum(parts: Vec<Measure>) -> Result<Self> {
        if parts.is_empty() {
            return Err(invalid("a sum measure needs at least one part"));
        }
        Ok(Measure::Sum { parts })
    }

    pub fn is_lebesgue(&self) -> bool {
        matches!(self, Measure::Piecewise(p) if p.breakpoints == [0.0, 1.0] && p.densities == [1.0])
    }

    pub fn is_atomic(&self) -> bool {
        match self {
            Measure::Atomic(_) | Measure::Zero => true,
            Measure::Scaled { inner, .. } => inner.is_atomic(),
            Measure::Sum { parts } => parts.iter().all(Measure::is_atomic),
            _ => false,
        }
    }

    /// All atoms (with scaling applied), in log form.
    pub fn collect_atoms(&self) -> Option<Vec<Atom>> {
        match self {
            Measure::Atomic(a) => Some(a.atoms.clone()),
            Measure::Zero => Some(Vec::new()),
            Measure::Scaled { c, inner } => inner.collect_atoms().map(|v| {
                v.into_iter()
                    .map(|a| Atom {
                        ln_position: a.ln_position,
                        ln_weight: a.ln_weight + c.ln(),
                    })
                    .collect()
            }),
            Measure::Sum { parts } => {
                let mut all = Vec::new();
                for p in parts {
                    all.extend(p.collect_atoms()?);
                }
                Some(all)
            }
            _ => None,
        }
    }

    /// `ln ∫ x^s dmu`.
    pub fn ln_moment(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || s.is_infinite() {
            return Err(invalid(format!("moment order s = {s} must be finite and >= 0")));
        }
        Ok(self.ln_moment_unchecked(s))
    }

    pub fn moment(&self, s: f64) -> Result<f64> {
        Ok(self.ln_moment(s)?.exp())
    }

    fn ln_moment_unchecked(&self, s: f64) -> f64 {
        match self {
            Measure::Atomic(a) => {
                let terms: Vec<f64> = a
                    .atoms
                    .iter()
                    .map(|t| t.ln_weight + if s == 0.0 { 0.0 } else { s * t.ln_position })
                    .collect();
                log_sum_exp(&terms)
            }
            Measure::PowerTail(p) => power_tail_ln_moment(p, s),
            Measure::Piecewise(p) => {
                let sp1 = s + 1.0;
                let terms: Vec<f64> = p
                    .pieces()
                    .filter(|(_, _, h)| *h > 0.0)
                    .map(|(lo, hi, h)| {
                        // h (hi^{s+1} - lo^{s+1}) / (s+1)
                        let ln_hi = hi.ln();
                        let ratio = if lo == 0.0 { f64::NEG_INFINITY } else { sp1 * (lo.ln() - ln_hi) };
                        h.ln() + sp1 * ln_hi + ln_one_minus_exp(ratio) - sp1.ln()
                    })
                    .collect();
                log_sum_exp(&terms)
            }
            Measure::Scaled { c, inner } => c.ln() + inner.ln_moment_unchecked(s),
            Measure::Sum { parts } => {
                let terms: Vec<f64> = parts.iter().map(|p| p.ln_moment_unchecked(s)).collect();
                log_sum_exp(&terms)
            }
            Measure::Zero => f64::NEG_INFINITY,
        }
    }

    /// `mu([1 - eps, 1])`.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(invalid(format!("tail width eps = {eps} must lie in (0,1]")));
        }
        Ok(self.mass_from(eps, true))
    }

    /// `mu((b, 1])`.
    pub fn mass_above(&self, b: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&b) {
            return Err(invalid(format!("threshold b = {b} must lie in [0,1)")));
        }
        Ok(self.mass_from(1.0 - b, false))
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_from(1.0, true)
    }

    /// Mass of the set `{x : 1 - x <= eps}` (closed) or `{x : 1 - x < eps}` (open).
    fn mass_from(&self, eps: f64, closed: bool) -> f64 {
        match self {
            Measure::Atomic(a) => {
                let w: Vec<f64> = a
                    .atoms
                    .iter()
                    .filter(|t| {
                        let g = t.gap();
                        if closed {
                            g <= eps
                        } else {
                            g < eps
                        }
                    })
                    .map(|t| t.weight())
                    .collect();
                pairwise_sum(&w)
            }
            Measure::PowerTail(p) => p.c * eps.min(p.span()).powf(p.alpha),
            Measure::Piecewise(p) => {
                let w: Vec<f64> = p
                    .pieces()
                    .map(|(lo, hi, h)| {
                        let t_hi = (1.0 - lo).min(eps);
                        let t_lo = 1.0 - hi;
                        h * (t_hi - t_lo).max(0.0)
                    })
                    .collect();
                pairwise_sum(&w)
            }
            Measure::Scaled { c, inner } => c * inner.mass_from(eps, closed),
            Measure::Sum { parts } => {
                let w: Vec<f64> = parts.iter().map(|p| p.mass_from(eps, closed)).collect();
                pairwise_sum(&w)
            }
            Measure::Zero => 0.0,
        }
    }

    /// Restriction to `[lo, 1]`.
    pub fn restrict_to(&self, lo: f64) -> Measure {
        match self {
            Measure::Atomic(a) => {
                let kept: Vec<Atom> = a.atoms.iter().copied().filter(|t| t.position() >= lo).collect();
                if kept.is_empty() {
                    Measure::Zero
                } else {
                    Measure::Atomic(Atomic { atoms: kept })
                }
            }
            Measure::PowerTail(p) => Measure::PowerTail(PowerTail {
                x0: p.x0.max(lo),
                ..*p
            }),
            Measure::Piecewise(p) => {
                let mut bps = Vec::new();
                let mut hs = Vec::new();
                for (a, b, h) in p.pieces() {
                    if b <= lo {
                        continue;
                    }
                    if bps.is_empty() {
                        bps.push(a.max(lo));
                    }
                    bps.push(b);
                    hs.push(h);
                }
                if hs.iter().all(|h| *h == 0.0) {
                    Measure::Zero
                } else {
                    Measure::Piecewise(PiecewiseDensity {
                        breakpoints: bps,
                        densities: hs,
                    })
                }
            }
            Measure::Scaled { c, inner } => match inner.restrict_to(lo) {
                Measure::Zero => Measure::Zero,
                m => Measure::Scaled {
                    c: *c,
                    inner: Box::new(m),
                },
            },
            Measure::Sum { parts } => {
                let kept: Vec<Measure> = parts
                    .iter()
                    .map(|p| p.restrict_to(lo))
                    .filter(|m| !matches!(m, Measure::Zero))
                    .collect();
                if kept.is_empty() {
                    Measure::Zero
                } else {
                    Measure::Sum { parts: kept }
                }
            }
            Measure::Zero => Measure::Zero,
        }
    }

    /// Restriction to `J_{1/m} = [1 - 1/m, 1]`.
    pub fn restrict_tail(&self, m: usize) -> Result<Measure> {
        if m < 2 {
            return Err(invalid(format!("tail index m = {m} must be at least 2")));
        }
        Ok(self.restrict_to(1.0 - 1.0 / m as f64))
    }

    /// `ln` of the right end of the support (0 when mass accumulates at 1).
    pub fn ln_support_max(&self) -> f64 {
        match self {
            Measure::Atomic(a) => a.atoms.last().map(|t| t.ln_position).unwrap_or(f64::NEG_INFINITY),
            Measure::PowerTail(_) => 0.0,
            Measure::Piecewise(p) => p
                .pieces()
                .filter(|(_, _, h)| *h > 0.0)
                .map(|(_, hi, _)| hi.ln())
                .fold(f64::NEG_INFINITY, f64::max),
            Measure::Scaled { inner, .. } => inner.ln_support_max(),
            Measure::Sum { parts } => parts.iter().map(Measure::ln_support_max).fold(f64::NEG_INFINITY, f64::max),
            Measure::Zero => f64::NEG_INFINITY,
        }
    }

    /// Supremum of the density, when the measure is absolutely continuous with bounded density.
    pub fn sup_density(&self) -> Option<f64> {
        match self {
            Measure::Atomic(_) => None,
            Measure::PowerTail(p) if p.alpha >= 1.0 => Some(p.c * p.alpha * p.span().powf(p.alpha - 1.0)),
            Measure::PowerTail(_) => None,
            Measure::Piecewise(p) => Some(p.densities.iter().copied().fold(0.0, f64::max)),
            Measure::Scaled { c, inner } => inner.sup_density().map(|h| c * h),
            Measure::Sum { parts } => {
                let mut total = 0.0;
                for p in parts {
                    total += p.sup_density()?;
                }
                Some(total)
            }
            Measure::Zero => Some(0.0),
        }
    }

    /// Tail widths at which `mu(J_eps) / eps` can attain its supremum.
    pub fn candidate_eps(&self) -> Vec<f64> {
        let mut out = match self {
            Measure::Atomic(a) => a.atoms.iter().map(Atom::gap).collect(),
            Measure::PowerTail(p) => vec![p.span()],
            Measure::Piecewise(p) => p.breakpoints.iter().filter(|b| **b < 1.0).map(|b| 1.0 - b).collect(),
            Measure::Scaled { inner, .. } => inner.candidate_eps(),
            Measure::Sum { parts } => parts.iter().flat_map(Measure::candidate_eps).collect(),
            Measure::Zero => Vec::new(),
        };
        out.retain(|e| *e > 0.0 && *e <= 1.0);
        out
    }

    /// Exact `sup_eps mu(J_eps)/eps` where a closed form exists.
    pub fn exact_sublinear_norm(&self) -> Option<f64> {
        match self {
            Measure::Atomic(a) => {
                // suffix sums over atoms sorted by position
                let mut best = f64::NEG_INFINITY;
                let mut ln_suffix = f64::NEG_INFINITY;
                for t in a.atoms.iter().rev() {
                    ln_suffix = crate::logspace::log_add_exp(ln_suffix, t.ln_weight);
                    best = best.max(ln_suffix - t.gap().ln());
                }
                Some(best.exp())
            }
            Measure::PowerTail(p) => {
                if p.alpha >= 1.0 {
                    Some(p.c * p.span().powf(p.alpha - 1.0))
                } else {
                    Some(f64::INFINITY)
                }
            }
            Measure::Piecewise(p) => {
                let mut best: f64 = self.mass_from(1.0, true);
                for eps in self.candidate_eps() {
                    best = best.max(self.mass_from(eps, true) / eps);
                }
                let (_, hi, h) = p.pieces().last().expect("non-empty");
                if hi == 1.0 {
                    best = best.max(h);
                }
                Some(best)
            }
            Measure::Scaled { c, inner } => inner.exact_sublinear_norm().map(|v| c * v),
            Measure::Sum { .. } => None,
            Measure::Zero => Some(0.0),
        }
    }

    /// `∫ g dmu`.
    pub fn integrate(&self, g: &dyn Fn(f64) -> f64) -> Quadrature {
        self.integrate_with_breaks(g, &[])
    }

    /// `∫ g dmu` with extra breakpoints (in `x`) where `g` is not smooth.
    pub fn integrate_with_breaks(&self, g: &dyn Fn(f64) -> f64, x_breaks: &[f64]) -> Quadrature {
        match self {
            Measure::Atomic(a) => {
                let terms: Vec<f64> = a.atoms.iter().map(|t| t.weight() * g(t.position())).collect();
                Quadrature {
                    value: pairwise_sum(&terms),
                    error: 0.0,
                }
            }
            Measure::Scaled { c, inner } => {
                let q = inner.integrate_with_breaks(g, x_breaks);
                Quadrature {
                    value: c * q.value,
                    error: c * q.error,
                }
            }
            Measure::Sum { parts } => {
                let qs: Vec<Quadrature> = parts.iter().map(|p| p.integrate_with_breaks(g, x_breaks)).collect();
                let v: Vec<f64> = qs.iter().map(|q| q.value).collect();
                let e: Vec<f64> = qs.iter().map(|q| q.error).collect();
                Quadrature {
                    value: pairwise_sum(&v),
                    error: pairwise_sum(&e),
                }
            }
            Measure::Zero => Quadrature { value: 0.0, error: 0.0 },
            _ => {
                let t_breaks: Vec<f64> = x_breaks.iter().map(|x| 1.0 - x).collect();
                self.integrate_density_t(&|t| g(1.0 - t), &t_breaks)
            }
        }
    }

    /// `ln ∫ exp(ln_g(ln x)) dmu`, for integrands spanning a huge dynamic range.
    pub fn ln_integrate(&self, ln_g: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            Measure::Atomic(a) => {
                let terms: Vec<f64> = a.atoms.iter().map(|t| t.ln_weight + ln_g(t.ln_position)).collect();
                log_sum_exp(&terms)
            }
            Measure::Scaled { c, inner } => c.ln() + inner.ln_integrate(ln_g),
            Measure::Sum { parts } => {
                let terms: Vec<f64> = parts.iter().map(|p| p.ln_integrate(ln_g)).collect();
                log_sum_exp(&terms)
            }
            Measure::Zero => f64::NEG_INFINITY,
            _ => {
                let (t_lo, t_hi) = self.t_range();
                let mut scale = f64::NEG_INFINITY;
                let mut t = t_hi;
                for _ in 0..=TAIL_DEPTH {
                    if t < t_lo {
                        break;
                    }
                    scale = scale.max(ln_g((-t).ln_1p()));
                    t *= 0.5;
                }
                scale = scale.max(ln_g((-t_lo).ln_1p()));
                if scale == f64::NEG_INFINITY {
                    return scale;
                }
                if scale == f64::INFINITY {
                    return scale;
                }
                let q = self.integrate_density_t(&|t| (ln_g((-t).ln_1p()) - scale).exp(), &[]);
                scale + q.value.ln()
            }
        }
    }

    /// `t = 1 - x` range of the support of a density variant.
    fn t_range(&self) -> (f64, f64) {
        match self {
            Measure::PowerTail(p) => (0.0, p.span()),
            Measure::Piecewise(p) => (1.0 - p.breakpoints.last().expect("non-empty"), 1.0 - p.breakpoints[0]),
            _ => (0.0, 1.0),
        }
    }

    /// Quadrature of `∫ f(1 - x) dmu` for the density variants, in `t = 1 - x`.
    fn integrate_density_t(&self, f: &dyn Fn(f64) -> f64, t_breaks: &[f64]) -> Quadrature {
        match self {
            Measure::PowerTail(p) => {
                // mass coordinate u = t^alpha: dmu = C du on [0, span^alpha]
                let u_max = p.span().powf(p.alpha);
                let mut breaks = dyadic_breaks(0.0, u_max, true, TAIL_DEPTH);
                breaks.extend(
                    t_breaks
                        .iter()
                        .filter(|t| **t > 0.0 && **t < p.span())
                        .map(|t| t.powf(p.alpha)),
                );
                sort_dedup(&mut breaks);
                let inv = 1.0 / p.alpha;
                let q = integrate_partition(&|u: f64| f(u.powf(inv)), &breaks, QUAD_TOL);
                Quadrature {
                    value: p.c * q.value,
                    error: p.c * q.error,
                }
            }
            Measure::Piecewise(p) => {
                let mut values = Vec::new();
                let mut errors = Vec::new();
                for (lo, hi, h) in p.pieces() {
                    if h == 0.0 {
                        continue;
                    }
                    let (t_lo, t_hi) = (1.0 - hi, 1.0 - lo);
                    let mut breaks = if t_lo == 0.0 {
                        dyadic_breaks(t_lo, t_hi, true, TAIL_DEPTH)
                    } else {
                        vec![t_lo, 0.5 * (t_lo + t_hi), t_hi]
                    };
                    breaks.extend(t_breaks.iter().filter(|t| **t > t_lo && **t < t_hi));
                    sort_dedup(&mut breaks);
                    let q = integrate_partition(f, &breaks, QUAD_TOL);
                    values.push(h * q.value);
                    errors.push(h * q.error);
                }
                Quadrature {
                    value: pairwise_sum(&values),
                    error: pairwise_sum(&errors),
                }
            }
            _ => unreachable!("density quadrature on a non-density variant"),
        }
    }

    /// Sublinearity and power-modulus diagnostics over an `eps` grid.
    pub fn modulus_report(&self, grid: Option<&[f64]>) -> Result<ModulusReport> {
        let grid: Vec<f64> = match grid {
            Some(g) => {
                if g.len() < 8 {
                    return Err(invalid("modulus grid needs at least 8 points"));
                }
                if g.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                    return Err(invalid("modulus grid points must lie in (0,1]"));
                }
                g.to_vec()
            }
            None => default_eps_grid(),
        };
        let masses: Vec<f64> = grid.iter().map(|&e| self.mass_from(e, true)).collect();
        let ratios: Vec<f64> = grid.iter().zip(&masses).map(|(e, m)| m / e).collect();
        let mut grid_sup = ratios.iter().copied().fold(0.0, f64::max);
        for e in self.candidate_eps() {
            grid_sup = grid_sup.max(self.mass_from(e, true) / e);
        }
        let exact = self.exact_sublinear_norm();
        let sublinear_norm = exact.map_or(grid_sup, |v| v.max(grid_sup));

        // order ratios by decreasing eps
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&i, &j| grid[j].total_cmp(&grid[i]));
        let sorted: Vec<f64> = order.iter().map(|&i| ratios[i]).collect();
        let peak = sorted.iter().copied().fold(0.0, f64::max);
        let last = *sorted.last().expect("non-empty grid");
        let half = sorted.len() / 2;
        let decreasing_tail = sorted[half..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let vanishing = peak > 0.0 && last <= 1e-3 * peak && decreasing_tail;

        Ok(ModulusReport {
            power_fit: power_fit(&grid, &masses),
            grid,
            tail_masses: masses,
            tail_ratios: ratios,
            sublinear_norm,
            sublinear_exact: exact.is_some(),
            vanishing,
        })
    }
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

/// `ln ∫ x^s dmu` for the power-tail density.
fn power_tail_ln_moment(p: &PowerTail, s: f64) -> f64 {
    let sp1 = s + 1.0;
    if p.x0 == 0.0 {
        // C alpha B(s+1, alpha) = C Gamma(alpha+1) Gamma(s+1) / Gamma(s+1+alpha)
        return p.c.ln() + ln_gamma_fn(p.alpha + 1.0) - ln_gamma_ratio(sp1, p.alpha);
    }
    // x = e^{-z/(s+1)}: moment = C alpha (s+1)^{-alpha} ∫_0^Z e^{-z} z^{alpha-1} h(z) dz
    // with h(z) = ((1 - e^{-v}) / v)^{alpha-1}, v = z/(s+1).
    let alpha = p.alpha;
    let z_end = (sp1 * -p.x0.ln()).min(800.0 + 2.0 * alpha);
    let h = move |z: f64| -> f64 {
        let v = z / sp1;
        let r = if v == 0.0 { 1.0 } else { -(-v).exp_m1() / v };
        r.powf(alpha - 1.0)
    };
    let (upper, ln_prefactor, q) = if alpha >= 1.0 {
        let f = move |z: f64| {
            let core = if z == 0.0 {
                if alpha == 1.0 { 1.0 } else { 0.0 }
            } else {
                (-z + (alpha - 1.0) * z.ln()).exp()
            };
            core * h(z)
        };
        let breaks = z_breaks(z_end);
        (z_end, alpha.ln(), integrate_partition(&f, &breaks, QUAD_TOL))
    } else {
        // y = z^alpha removes the z^{alpha-1} singularity
        let y_end = z_end.powf(alpha);
        let inv = 1.0 / alpha;
        let f = move |y: f64| {
            let z = y.powf(inv);
            (-z).exp() * h(z)
        };
        let breaks = z_breaks(y_end);
        (y_end, 0.0, integrate_partition(&f, &breaks, QUAD_TOL))
    };
    debug_assert!(upper > 0.0);
    p.c.ln() + ln_prefactor - alpha * sp1.ln() + q.value.ln()
}

fn z_breaks(end: f64) -> Vec<f64> {
    let mut b = dyadic_breaks(0.0, end.min(1.0), true, 40);
    let mut x = 2.0;
    while x < end {
        b.push(x);
        x *= 2.0;
    }
    b.push(end);
    sort_dedup(&mut b);
    b
}

/// The geometric grid `eps = 2^{-j}`, `j = 0..=40`.
pub fn default_eps_grid() -> Vec<f64> {
    (0..=40).map(|j| 0.5f64.powi(j)).collect()
}

/// Least-squares fit `ln mu(J_eps) = ln C + alpha ln eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFit {
    pub c: f64,
    pub alpha: f64,
    /// Root-mean-square residual in `ln` units.
    pub residual: f64,
    pub points: usize,
    /// Whether the residual is below [`POWER_FIT_THRESHOLD`].
    pub accepted: bool,
}

pub const POWER_FIT_THRESHOLD: f64 = 1e-2;

fn power_fit(grid: &[f64], masses: &[f64]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(e, m)| (e.ln(), m.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (slope, intercept, residual) = linear_fit(&pts)?;
    Some(PowerFit {
        c: intercept.exp(),
        alpha: slope,
        residual,
        points: pts.len(),
        accepted: residual < POWER_FIT_THRESHOLD,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, rms residual)`.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    Some((b, a, (rss / n).sqrt()))
}

/// Near-1 behaviour of a measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusReport {
    pub grid: Vec<f64>,
    pub tail_masses: Vec<f64>,
    /// `mu(J_eps) / eps` along the grid.
    pub tail_ratios: Vec<f64>,
    pub sublinear_norm: f64,
    /// False when `sublinear_norm` is only a grid supremum, hence a lower estimate.
    pub sublinear_exact: bool,
    pub vanishing: bool,
    pub power_fit: Option<PowerFit>,
}

/// An increasing C¹ function `rho` with `rho(0) = 0` bounding tail masses.
pub trait TailMajorant: Sync {
    fn value(&self, eps: f64) -> f64;
    fn derivative(&self, eps: f64) -> f64;
    /// `(C, alpha)` when `rho(eps) = C eps^alpha`.
    fn as_power(&self) -> Option<(f64, f64)> {
        None
    }
}

/// `rho(eps) = C eps^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerMajorant {
    pub c: f64,
    pub alpha: f64,
}

impl PowerMajorant {
    pub fn new(c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite() && alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("majorant C eps^alpha needs C, alpha > 0 (got {c}, {alpha})")));
        }
        Ok(Self { c, alpha })
    }
}

impl TailMajorant for PowerMajorant {
    fn value(&self, eps: f64) -> f64 {
        self.c * eps.powf(self.alpha)
    }
    fn derivative(&self, eps: f64) -> f64 {
        self.c * self.alpha * eps.powf(self.alpha - 1.0)
    }
    fn as_power(&self) -> Option<(f64, f64)> {
        Some((self.c, self.alpha))
    }
}

/// Outcome of comparing `∫ g dmu` with `∫ g(x) rho'(1-x) dx`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorizationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
}

/// Verify `mu(J_eps) <= rho(eps)` on a grid and return the first failing width.
pub fn check_tail_majorant(mu: &Measure, rho: &dyn TailMajorant) -> Result<()> {
    let mut grid = default_eps_grid();
    grid.extend(mu.candidate_eps());
    for eps in grid {
        let m = mu.mass_from(eps, true);
        let r = rho.value(eps);
        if m > r * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::HypothesisViolated(format!(
                "mu(J_eps) = {m:e} exceeds rho(eps) = {r:e} at eps = {eps:e}"
            )));
        }
    }
    Ok(())
}

pub fn rho_majorization_check(
    mu: &Measure,
    rho: &dyn TailMajorant,
    g: &dyn Fn(f64) -> f64,
) -> Result<MajorizationCheck> {
    check_tail_majorant(mu, rho)?;
    let lhs = mu.integrate(g).value;
    let breaks = dyadic_breaks(0.0, 1.0, true, TAIL_DEPTH);
    let rhs = integrate_partition(&|t: f64| g(1.0 - t) * rho.derivative(t), &breaks, QUAD_TOL).value;
    let tol = 1e-10 * rhs.abs().max(1.0);
    Ok(MajorizationCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
        slack: rhs - lhs,
    })
}

/// Measure description as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Atomic {
        atoms: Vec<[f64; 2]>,
    },
    PowerTail {
        #[serde(rename = "C")]
        c: f64,
        alpha: f64,
        #[serde(default)]
        x0: f64,
    },
    Lebesgue,
    Piecewise {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
    Scaled {
        c: f64,
        inner: Box<MeasureSpec>,
    },
    Sum {
        parts: Vec<MeasureSpec>,
    },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<Measure> {
        match self {
            MeasureSpec::Atomic { atoms } => {
                let pairs: Vec<(f64, f64)> = atoms.iter().map(|a| (a[0], a[1])).collect();
                Measure::atomic(&pairs)
            }
            MeasureSpec::PowerTail { c, alpha, x0 } => Measure::power_tail(*c, *alpha, *x0),
            MeasureSpec::Lebesgue => Ok(Measure::lebesgue()),
            MeasureSpec::Piecewise { breakpoints, densities } => Ok(Measure::Piecewise(PiecewiseDensity::new(
                breakpoints.clone(),
                densities.clone(),
            )?)),
            MeasureSpec::Scaled { c, inner } => Measure::scaled(*c, inner.build()?),
            MeasureSpec::Sum { parts } => {
                let built = parts.iter().map(MeasureSpec::build).collect::<Result<Vec<_>>>()?;
                Measure::sum(built)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn moment_examples() {
        assert!(close(Measure::lebesgue().moment(2.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(close(Measure::atomic(&[(0.5, 1.0)]).unwrap().moment(1.0).unwrap(), 0.5, 1e-15));
        let pt = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        assert!(close(pt.moment(10.0).unwrap(), 1.0 / 66.0, 1e-13));
        assert!(Measure::lebesgue().moment(-1.0).is_err());
    }

    #[test]
    fn power_tail_moment_matches_direct_quadrature() {
        // oracle: plain x-space quadrature of C alpha x^s (1-x)^{alpha-1}
        for &(alpha, x0, s) in &[(2.0, 0.3, 5.0), (3.5, 0.5, 40.0), (1.0, 0.9, 2.0), (2.5, 0.1, 0.0)] {
            let mu = Measure::power_tail(1.5, alpha, x0).unwrap();
            let f = |x: f64| 1.5 * alpha * x.powf(s) * (1.0 - x).powf(alpha - 1.0);
            let oracle = integrate(&f, x0, 1.0, 1e-14).value;
            let got = mu.moment(s).unwrap();
            assert!(close(got, oracle, 1e-11), "alpha={alpha} x0={x0} s={s}: {got} vs {oracle}");
        }
    }

    #[test]
    fn power_tail_singular_density_moment() {
        // alpha = 1/2, x0 > 0: compare with the tiny-x0 limit of the closed form
        let a = Measure::power_tail(1.0, 0.5, 1e-300).unwrap().moment(3.0).unwrap();
        let b = Measure::power_tail(1.0, 0.5, 0.0).unwrap().moment(3.0).unwrap();
        assert!(close(a, b, 1e-10), "{a} {b}");
        // s = 0 gives the mass C (1 - x0)^alpha
        let m = Measure::power_tail(2.0, 0.5, 0.36).unwrap().moment(0.0).unwrap();
        assert!(close(m, 2.0 * 0.8, 1e-12), "{m}");
    }

    #[test]
    fn huge_moment_orders_stay_finite() {
        let pt = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        let ln_m = pt.ln_moment(1e12).unwrap();
        // 2 / ((s+1)(s+2)) ~ 2 s^{-2}
        assert!((ln_m - (2f64.ln() - 24.0 * 10f64.ln())).abs() < 1e-9);
        let at = Measure::Atomic(
            Atomic::from_logs(vec![Atom {
                ln_position: -1e-40,
                ln_weight: 0.0,
            }])
            .unwrap(),
        );
        assert!((at.ln_moment(1e40).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_mass_examples() {
        assert!(close(Measure::lebesgue().tail_mass(0.3).unwrap(), 0.3, 1e-15));
        let pt = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        assert!(close(pt.tail_mass(0.1).unwrap(), 0.01, 1e-14));
        let at = Measure::atomic(&[(0.9, 2.0)]).unwrap();
        assert_eq!(at.tail_mass(0.05).unwrap(), 0.0);
        assert_eq!(at.tail_mass(0.2).unwrap(), 2.0);
        assert!(at.tail_mass(0.0).is_err());
        assert!(at.tail_mass(1.5).is_err());
    }

    #[test]
    fn modulus_examples() {
        let r = Measure::lebesgue().modulus_report(None).unwrap();
        assert!(close(r.sublinear_norm, 1.0, 1e-15));
        assert!(!r.vanishing);
        assert!((r.power_fit.unwrap().alpha - 1.0).abs() < 1e-12);

        let r = Measure::power_tail(1.0, 2.0, 0.0).unwrap().modulus_report(None).unwrap();
        assert!(close(r.sublinear_norm, 1.0, 1e-15));
        assert!(r.vanishing);
        let fit = r.power_fit.unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-12 && fit.accepted);

        let r = Measure::atomic(&[(0.5, 1.0)]).unwrap().modulus_report(None).unwrap();
        assert!(close(r.sublinear_norm, 2.0, 1e-15));
        assert!(r.sublinear_exact);

        let r = Measure::power_tail(1.0, 0.5, 0.0).unwrap().modulus_report(None).unwrap();
        assert_eq!(r.sublinear_norm, f64::INFINITY);

        assert!(Measure::lebesgue().modulus_report(Some(&[0.5, 0.25])).is_err());
    }

    #[test]
    fn restrict_examples() {
        let r = Measure::lebesgue().restrict_tail(4).unwrap();
        assert!(close(r.total_mass(), 0.25, 1e-15));
        let at = Measure::atomic(&[(0.5, 1.0), (0.9, 2.0)]).unwrap();
        assert_eq!(at.restrict_tail(5).unwrap(), Measure::atomic(&[(0.9, 2.0)]).unwrap());
        let pt = Measure::power_tail(1.0, 2.0, 0.0).unwrap().restrict_tail(10).unwrap();
        assert!(close(pt.total_mass(), 0.01, 1e-12));
        assert_eq!(Measure::atomic(&[(0.5, 1.0)]).unwrap().restrict_tail(4).unwrap(), Measure::Zero);
        assert!(Measure::lebesgue().restrict_tail(1).is_err());
    }

    #[test]
    fn rejects_invalid_measures() {
        assert!(Measure::atomic(&[(1.0, 1.0)]).is_err());
        assert!(Measure::atomic(&[(0.5, 0.0)]).is_err());
        assert!(Measure::power_tail(1.0, 0.0, 0.0).is_err());
        assert!(PiecewiseDensity::new(vec![0.0, 0.5], vec![0.0]).is_err());
    }

    #[test]
    fn rho_examples() {
        let rho1 = PowerMajorant::new(1.0, 1.0).unwrap();
        let c = rho_majorization_check(&Measure::lebesgue(), &rho1, &|x| x * x).unwrap();
        assert!(close(c.lhs, 1.0 / 3.0, 1e-13) && close(c.rhs, 1.0 / 3.0, 1e-12) && c.holds);

        let rho2 = PowerMajorant::new(1.0, 2.0).unwrap();
        let pt = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
        let c = rho_majorization_check(&pt, &rho2, &|x: f64| x.powi(10)).unwrap();
        assert!(close(c.lhs, 1.0 / 66.0, 1e-12) && close(c.rhs, 1.0 / 66.0, 1e-12) && c.holds);

        let rho = PowerMajorant::new(2.0, 1.0).unwrap();
        let c = rho_majorization_check(&Measure::atomic(&[(0.5, 1.0)]).unwrap(), &rho, &|x| x).unwrap();
        assert!(close(c.lhs, 0.5, 1e-15) && close(c.rhs, 1.0, 1e-12) && c.holds);

        let err = rho_majorization_check(&Measure::lebesgue(), &rho2, &|x| x).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));
    }

    #[test]
    fn integrate_matches_moments() {
        let measures = [
            Measure::power_tail(0.7, 2.5, 0.2).unwrap(),
            Measure::power_tail(1.0, 0.5, 0.0).unwrap(),
            Measure::Piecewise(PiecewiseDensity::new(vec![0.1, 0.4, 1.0], vec![2.0, 0.5]).unwrap()),
        ];
        for mu in &measures {
            for s in [0.0, 1.0, 7.5, 300.0] {
                let q = mu.integrate(&|x: f64| x.powf(s)).value;
                let m = mu.moment(s).unwrap();
                assert!(close(q, m, 1e-10), "{mu:?} s={s}: {q} vs {m}");
                let l = mu.ln_integrate(&|lx| s * lx);
                assert!((l - m.ln()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let m: MeasureSpec = serde_json::from_str(r#"{"kind":"powertail","C":1,"alpha":2,"x0":0}"#).unwrap();
        assert_eq!(m.build().unwrap(), Measure::power_tail(1.0, 2.0, 0.0).unwrap());
        let m: MeasureSpec = serde_json::from_str(
            r#"{"kind":"sum","parts":[{"kind":"lebesgue"},{"kind":"scaled","c":2,"inner":{"kind":"atomic","atoms":[[0.5,1.0]]}}]}"#,
        )
        .unwrap();
        assert!(close(m.build().unwrap().total_mass(), 3.0, 1e-15));
    }

    fn arb_measure() -> impl Strategy<Value = Measure> {
        prop_oneof![
            proptest::collection::vec((0.01f64..0.999, 0.01f64..5.0), 1..5)
                .prop_map(|v| Measure::atomic(&v).unwrap()),
            (0.1f64..5.0, 0.3f64..4.0, 0.0f64..0.9).prop_map(|(c, a, x0)| Measure::power_tail(c, a, x0).unwrap()),
            (0.0f64..0.9, 0.1f64..3.0).prop_map(|(lo, h)| Measure::Piecewise(
                PiecewiseDensity::new(vec![lo, 1.0], vec![h]).unwrap()
            )),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sum_is_additive(a in arb_measure(), b in arb_measure(), s in 0.0f64..200.0) {
            let sum = Measure::sum(vec![a.clone(), b.clone()]).unwrap();
            let lhs = sum.moment(s).unwrap();
            let rhs = a.moment(s).unwrap() + b.moment(s).unwrap();
            prop_assert!(close(lhs, rhs, 1e-13));
        }

        #[test]
        fn scaling(a in arb_measure(), c in 0.01f64..100.0, s in 0.0f64..50.0) {
            let sc = Measure::scaled(c, a.clone()).unwrap();
            prop_assert!(close(sc.moment(s).unwrap(), c * a.moment(s).unwrap(), 1e-13));
            let n1 = sc.modulus_report(None).unwrap().sublinear_norm;
            let n0 = a.modulus_report(None).unwrap().sublinear_norm;
            prop_assert!(n1 == f64::INFINITY && n0 == f64::INFINITY || close(n1, c * n0, 1e-13));
        }

        #[test]
        fn moments_decrease_and_tails_increase(a in arb_measure(), s in 0.0f64..100.0, ds in 0.01f64..10.0,
                                               e in 0.001f64..0.99, de in 0.0f64..0.5) {
            prop_assert!(a.moment(s + ds).unwrap() < a.moment(s).unwrap());
            let e2 = (e + de).min(1.0);
            prop_assert!(a.tail_mass(e2).unwrap() >= a.tail_mass(e).unwrap());
        }

        #[test]
        fn sublinear_moment_bound(a in arb_measure(), s in 0.0f64..500.0) {
            let norm = a.modulus_report(None).unwrap().sublinear_norm;
            if norm.is_finite() {
                prop_assert!(a.moment(s).unwrap() <= norm / (s + 1.0) * (1.0 + 1e-12) + 1e-15);
            }
        }

        #[test]
        fn sublinear_norm_dominates_grid(a in arb_measure()) {
            let r = a.modulus_report(None).unwrap();
            for ratio in &r.tail_ratios {
                prop_assert!(*ratio <= r.sublinear_norm * (1.0 + 1e-15));
            }
        }
    }
}

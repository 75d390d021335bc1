//! Globally adaptive Gauss-Legendre quadrature.
//!
//! Each panel is integrated with a 12-point and a 24-point rule; the panel
//! with the largest discrepancy is bisected until the summed discrepancy is
//! below tolerance. Callers supply an initial partition, typically dyadic
//! toward an endpoint singularity.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::Serialize;

const LOW_ORDER: usize = 12;
const HIGH_ORDER: usize = 24;
const MAX_PANELS: usize = 4000;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rules() -> &'static (GaussLegendre, GaussLegendre) {
    static RULES: OnceLock<(GaussLegendre, GaussLegendre)> = OnceLock::new();
    RULES.get_or_init(|| (GaussLegendre::new(LOW_ORDER), GaussLegendre::new(HIGH_ORDER)))
}

/// An integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn panel<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Panel {
    let (lo, hi) = rules();
    let v_lo = lo.integrate(f, a, b);
    let v_hi = hi.integrate(f, a, b);
    let error = (v_hi - v_lo).abs();
    Panel {
        a,
        b,
        value: v_hi,
        error: if error.is_nan() { f64::INFINITY } else { error },
    }
}

/// Integrate `f` over the partition given by sorted `breaks` (at least two points).
pub fn integrate_partition<F: Fn(f64) -> f64 + ?Sized>(f: &F, breaks: &[f64], rel_tol: f64) -> Quadrature {
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(panel(f, w[0], w[1]));
        }
    }
    loop {
        let (total, err) = totals(&heap);
        let width_ok = heap.peek().map(|p| p.b - p.a > 4.0 * f64::EPSILON * p.b.abs().max(1e-300)).unwrap_or(false);
        if err <= rel_tol * total.abs() || err < 1e-300 || heap.len() >= MAX_PANELS || !width_ok {
            return Quadrature { value: total, error: err };
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(panel(f, worst.a, mid));
        heap.push(panel(f, mid, worst.b));
    }
}

fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    // Sum in position order so the result does not depend on heap layout.
    let mut items: Vec<(f64, f64, f64)> = heap.iter().map(|p| (p.a, p.value, p.error)).collect();
    items.sort_by(|x, y| x.0.total_cmp(&y.0));
    let values: Vec<f64> = items.iter().map(|t| t.1).collect();
    let errors: Vec<f64> = items.iter().map(|t| t.2).collect();
    (
        crate::logspace::pairwise_sum(&values),
        crate::logspace::pairwise_sum(&errors),
    )
}

/// Integrate over `[a, b]` with no interior breakpoints.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, rel_tol: f64) -> Quadrature {
    integrate_partition(f, &[a, b], rel_tol)
}

/// Breakpoints `a < ... < b` refined geometrically toward one endpoint.
pub fn dyadic_breaks(a: f64, b: f64, toward_a: bool, depth: usize) -> Vec<f64> {
    let len = b - a;
    let mut pts = Vec::with_capacity(depth + 2);
    pts.push(a);
    let mut offsets = Vec::with_capacity(depth);
    let mut h = len;
    for _ in 0..depth {
        h *= 0.5;
        offsets.push(h);
    }
    if toward_a {
        for h in offsets.iter().rev() {
            pts.push(a + h);
        }
    } else {
        for h in &offsets {
            pts.push(b - h);
        }
    }
    pts.push(b);
    pts.dedup_by(|x, y| *x <= *y);
    pts
}

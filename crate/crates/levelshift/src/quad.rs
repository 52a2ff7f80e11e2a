//! Adaptive composite Gauss–Legendre quadrature.
//!
//! Each panel is integrated with an `n`-point rule on the whole panel and
//! on its two halves; the difference is the error estimate. Panels with
//! the largest estimated error are bisected until the total meets the
//! requested tolerance. Integrands are complex, real integrals take `.re`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-8, max_panels: 20_000 }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
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
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const PANEL_ORDER: usize = 10;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

fn apply_rule<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Complex64 {
    let (x, w) = panel_rule();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..x.len() {
        sum += w[k] * f(mid + half * x[k]);
    }
    sum * half
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
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
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

fn evaluate<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Panel {
    let whole = apply_rule(f, a, b);
    let m = 0.5 * (a + b);
    let split = apply_rule(f, a, m) + apply_rule(f, m, b);
    Panel { a, b, value: split, error: (split - whole).norm() }
}

/// Integrates `f` over the union of the consecutive intervals given by
/// `breakpoints` (ascending, at least two entries).
///
/// Breakpoints should sit at kinks, poles of subtracted integrands and
/// near-singular features so no node lands on them.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, breakpoints: &[f64], opts: &QuadOptions) -> Result<Complex64> {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut heap: BinaryHeap<Panel> = pts.windows(2).map(|w| evaluate(&f, w[0], w[1])).collect();
    let mut done: Vec<Panel> = Vec::new();
    let mut total: Complex64 = heap.iter().map(|p| p.value).sum();
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    let mut steps = 0usize;
    loop {
        if !total.re.is_finite() || !total.im.is_finite() {
            return Err(Error::Quadrature { estimate: f64::NAN, error: f64::INFINITY });
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
            // Running sums drift; confirm with an exact recount.
            total = heap.iter().chain(done.iter()).map(|p| p.value).sum();
            err = heap.iter().chain(done.iter()).map(|p| p.error).sum();
            if err <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
                break;
            }
        }
        if heap.len() + done.len() >= opts.max_panels {
            return Err(Error::Quadrature { estimate: total.norm(), error: err });
        }
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel too narrow to split further; keep it as is.
            done.push(worst);
            continue;
        }
        let left = evaluate(&f, worst.a, m);
        let right = evaluate(&f, m, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        steps += 1;
        if steps % 256 == 0 {
            total = heap.iter().chain(done.iter()).map(|p| p.value).sum();
            err = heap.iter().chain(done.iter()).map(|p| p.error).sum();
        }
    }
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.extend(done);
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    Ok(panels.iter().map(|p| p.value).sum())
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], opts: &QuadOptions) -> Result<f64> {
    integrate(|x| Complex64::new(f(x), 0.0), breakpoints, opts).map(|z| z.re)
}

/// Breakpoints clustering geometrically towards `a`, for integrable
/// endpoint singularities of power type: `a + (b−a)·2^{-k}`, `k = 1..levels`.
pub fn geometric_cluster(a: f64, b: f64, levels: usize) -> Vec<f64> {
    (1..=levels).map(|k| a + (b - a) * 0.5f64.powi(k as i32)).collect()
}

/// Principal value `PV ∫_a^b f(r)/(x0 − r) dr` for `a < x0 < b`, by
/// subtracting `f(x0)`:
/// `∫ (f(r) − f(x0))/(x0 − r) dr + f(x0)·ln((x0 − a)/(b − x0))`.
///
/// `extra` breakpoints are merged with `a`, `x0`, `b`.
pub fn principal_value<F: Fn(f64) -> f64>(
    f: F,
    x0: f64,
    a: f64,
    b: f64,
    extra: &[f64],
    opts: &QuadOptions,
) -> Result<f64> {
    if !(a < x0 && x0 < b) {
        return Err(Error::InvalidArgument(format!("pole {x0} must lie strictly inside ({a}, {b})")));
    }
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::InvalidArgument(format!("integrand is not finite at the pole {x0}")));
    }
    let mut bp = vec![a, x0, b];
    bp.extend(extra.iter().copied().filter(|&x| x > a && x < b));
    let body = integrate_real(|r| (f(r) - f0) / (x0 - r), &bp, opts)?;
    Ok(body + f0 * ((x0 - a) / (b - x0)).ln())
}

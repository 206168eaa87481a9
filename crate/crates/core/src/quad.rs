//! Gauss-Legendre quadrature with adaptive panel refinement.
//!
//! The integrands of this crate (lattice Boltzmann weights, Brillouin-zone
//! integrals) are smooth on truncated boxes, so fixed-order Gauss rules on a
//! doubling number of panels converge fast; the panel-doubling difference is
//! the error estimate.

use crate::error::{Error, Result};
use crate::Real;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre<F: Real>(n: usize) -> (Vec<F>, Vec<F>) {
    assert!(n >= 1);
    let mut nodes = vec![F::zero(); n];
    let mut weights = vec![F::zero(); n];
    let nf = F::from_usize_lossy(n);
    for i in 0..n.div_ceil(2) {
        let theta = F::PI() * (F::from_usize_lossy(i) + F::from_f64_lossy(0.75))
            / (nf + F::from_f64_lossy(0.5));
        let mut x = theta.cos();
        let mut dp = F::one();
        for _ in 0..100 {
            let (p, d) = legendre_pair::<F>(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= F::epsilon() * (F::one() + x.abs()) {
                break;
            }
        }
        let w = F::from_f64_lossy(2.0) / ((F::one() - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // center node of an odd rule sits exactly at zero
        nodes[n / 2] = F::zero();
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre_pair<F: Real>(n: usize, x: F) -> (F, F) {
    let mut p0 = F::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = F::from_usize_lossy(k);
        let two = F::from_f64_lossy(2.0);
        let p2 = ((two * kf - F::one()) * x * p1 - (kf - F::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (p0, F::zero());
    }
    let nf = F::from_usize_lossy(n);
    let d = nf * (x * p1 - p0) / (x * x - F::one());
    (p1, d)
}

/// Fixed-rule integral of `f` over `[a, b]`.
pub fn integrate_fixed<F: Real>(f: &mut impl FnMut(F) -> F, a: F, b: F, order: usize) -> F {
    let (nodes, weights) = gauss_legendre::<F>(order);
    let half = (b - a) / F::from_f64_lossy(2.0);
    let mid = (a + b) / F::from_f64_lossy(2.0);
    let mut total = F::zero();
    for (x, w) in nodes.iter().zip(&weights) {
        total += *w * f(mid + half * *x);
    }
    total * half
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult<F> {
    pub value: F,
    pub error: F,
    pub panels: usize,
}

const PANEL_ORDER: usize = 24;
const MAX_PANELS: usize = 1 << 14;

/// Integrates `f` over `[a, b]` by doubling the panel count of a fixed
/// Gauss rule until the inter-level difference satisfies `tol`
/// (absolute, plus relative at the same magnitude).
pub fn integrate_adaptive<F: Real>(
    f: &mut impl FnMut(F) -> F,
    a: F,
    b: F,
    tol: F,
) -> Result<QuadResult<F>> {
    let (nodes, weights) = gauss_legendre::<F>(PANEL_ORDER);
    let mut panels = 2usize;
    let mut previous = panel_sum(f, a, b, panels, &nodes, &weights);
    loop {
        panels *= 2;
        let current = panel_sum(f, a, b, panels, &nodes, &weights);
        let error = (current - previous).abs();
        if error <= tol * F::max(F::one(), current.abs()) {
            return Ok(QuadResult {
                value: current,
                error,
                panels,
            });
        }
        if panels >= MAX_PANELS {
            return Err(Error::ToleranceUnachievable {
                requested: tol.to_f64().unwrap_or(f64::NAN),
                floor: error.to_f64().unwrap_or(f64::NAN),
            });
        }
        previous = current;
    }
}

fn panel_sum<F: Real>(
    f: &mut impl FnMut(F) -> F,
    a: F,
    b: F,
    panels: usize,
    nodes: &[F],
    weights: &[F],
) -> F {
    let width = (b - a) / F::from_usize_lossy(panels);
    let half = width / F::from_f64_lossy(2.0);
    let mut total = F::zero();
    for p in 0..panels {
        let lo = a + width * F::from_usize_lossy(p);
        let mid = lo + half;
        for (x, w) in nodes.iter().zip(weights) {
            total += *w * f(mid + half * *x);
        }
    }
    total * half
}

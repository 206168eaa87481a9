//! Free (gaussian) propagators on the four spaces: the real line, the
//! circle of length T, the doubly-infinite lattice and the circular lattice.
//!
//! The circular-lattice propagator is a finite discrete Fourier sum; the
//! other three are limits of it, and the cross-limit checks live in the
//! tests. All values are floating point; the exact cross-check against the
//! reduction engine goes through [`crate::lattice::LatticeSpec::free_field`].

use crate::error::{Error, Result};
use crate::quad;
use crate::Real;

/// Euclidean propagator on the real line: `exp(-m|t|) / (2m)`.
pub fn propagator_line<F: Real>(m: F, t: F) -> F {
    (-m * t.abs()).exp() / (F::from_f64_lossy(2.0) * m)
}

/// Euclidean propagator on the circle of length `T`, from its Fourier
/// series `T * sum_n exp(-2 pi i n t / T) / ((2 pi n)^2 + (m T)^2)`.
///
/// The `1/n^2` part of the coefficients is summed in closed form, which
/// leaves a `1/n^4` remainder series whose integral tail bound drives the
/// truncation; plain term-size stopping would underestimate the tail.
pub fn propagator_circle<F: Real>(m: F, period: F, t: F, tol: F) -> Result<F> {
    let beta = m * period; // m T
    let two = F::from_f64_lossy(2.0);
    let four_pi2 = F::from_f64_lossy(4.0) * F::PI() * F::PI();

    let floor = F::epsilon() * F::from_f64_lossy(50.0) * period * (F::one() / (beta * beta) + F::one());
    if tol < floor {
        return Err(Error::ToleranceUnachievable {
            requested: tol.to_f64().unwrap_or(f64::NAN),
            floor: floor.to_f64().unwrap_or(f64::NAN),
        });
    }

    // reduce t into [0, T) so the series argument sits in [0, 2 pi)
    let mut tr = t % period;
    if tr < F::zero() {
        tr += period;
    }
    let x = two * F::PI() * tr / period;

    // sum_{n>=1} cos(n x)/n^2 = pi^2/6 - pi x/2 + x^2/4 on [0, 2 pi]
    let closed = F::PI() * F::PI() / F::from_f64_lossy(6.0) - F::PI() * x / two + x * x / F::from_f64_lossy(4.0);

    // remainder: -beta^2 sum cos(n x) / ((2 pi n)^2 ((2 pi n)^2 + beta^2)),
    // bounded by beta^2/(16 pi^4) * 1/(3 M^3) past n = M
    let mut remainder = F::zero();
    let tail_scale = two * period * beta * beta / (F::from_f64_lossy(48.0) * four_pi2 * four_pi2);
    let mut n = 1usize;
    loop {
        let nf = F::from_usize_lossy(n);
        let lam2 = four_pi2 * nf * nf;
        let term = (nf * x).cos() * beta * beta / (lam2 * (lam2 + beta * beta));
        remainder -= term;
        let tail = tail_scale / (nf * nf * nf);
        if tail < tol / two && term.abs() < tol / (F::from_f64_lossy(10.0) * period) {
            break;
        }
        n += 1;
        if n > 50_000_000 {
            return Err(Error::ToleranceUnachievable {
                requested: tol.to_f64().unwrap_or(f64::NAN),
                floor: tail.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    let series = closed / four_pi2 + remainder;
    Ok(period * (F::one() / (beta * beta) + two * series))
}

/// Effective mass and pole residue of the infinite-lattice propagator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveParams<F> {
    pub m_eff: F,
    pub z_eff: F,
}

/// Lattice-corrected mass and residue at spacing `a`, with
/// `eta = (m a)^2 / 2`:
/// `m_eff = -(1/a) ln(1 + eta - sqrt(2 eta + eta^2))` and
/// `Z_eff = a / (2 sqrt(2 eta + eta^2))`.
pub fn lattice_effective_params<F: Real>(m: F, a: F) -> EffectiveParams<F> {
    let eta = (m * a) * (m * a) / F::from_f64_lossy(2.0);
    let root = (F::from_f64_lossy(2.0) * eta + eta * eta).sqrt();
    EffectiveParams {
        m_eff: -(F::one() / a) * (F::one() + eta - root).ln(),
        z_eff: a / (F::from_f64_lossy(2.0) * root),
    }
}

/// Propagator on the doubly-infinite lattice at discrete time `n a`:
/// `Z_eff exp(-m_eff |n| a)`.
pub fn propagator_infinite_lattice<F: Real>(m: F, a: F, n: i64) -> F {
    let params = lattice_effective_params(m, a);
    let t = F::from_f64_lossy(n.unsigned_abs() as f64) * a;
    params.z_eff * (-params.m_eff * t).exp()
}

/// Brillouin-zone integral form of the infinite-lattice propagator, used as
/// the independent route for cross-checks.
pub fn propagator_infinite_lattice_by_quadrature<F: Real>(
    m: F,
    a: F,
    n: i64,
    tol: F,
) -> Result<F> {
    let nf = F::from_f64_lossy(n as f64);
    let mut integrand = |e: F| {
        let s = a * a / (F::from_f64_lossy(2.0) * (F::one() - (e * a).cos()) + (m * a) * (m * a));
        s * (e * nf * a).cos()
    };
    let result = quad::integrate_adaptive(&mut integrand, -F::PI() / a, F::PI() / a, tol)?;
    Ok(result.value / (F::from_f64_lossy(2.0) * F::PI()))
}

/// Propagator on the circular lattice of `n_sites` points at spacing `a`,
/// by the discrete Fourier sum over the symmetric Brillouin window
/// `e = [-N/2]+1 ... [N/2]` (integer part with positive remainder).
pub fn propagator_circular_lattice<F: Real>(m: F, n_sites: u32, a: F, n: i64) -> F {
    let nn = i64::from(n_sites);
    let lo = (-nn).div_euclid(2) + 1;
    let hi = nn.div_euclid(2);
    let two_pi = F::from_f64_lossy(2.0) * F::PI();
    let nf = F::from_f64_lossy(n as f64);
    let nsites_f = F::from_f64_lossy(f64::from(n_sites));
    let mut total = F::zero();
    for e in lo..=hi {
        let ef = F::from_f64_lossy(e as f64);
        let phase = two_pi * ef / nsites_f;
        let denom = F::from_f64_lossy(2.0) * (F::one() - phase.cos()) + (m * a) * (m * a);
        total += (phase * nf).cos() * a * a / denom;
    }
    total / (nsites_f * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_propagator_values() {
        // Z = Delta(0) = 0.5 at m = 1
        assert!((propagator_line::<f64>(1.0, 0.0) - 0.5).abs() < 1e-15);
        // decays to zero at large times
        assert!(propagator_line::<f64>(1.0, 500.0) < 1e-200);
        // direct substitution at m = 2, t = 1
        assert!((propagator_line::<f64>(2.0, 1.0) - (-2.0f64).exp() / 4.0).abs() < 1e-15);
        // even in t
        assert_eq!(propagator_line::<f64>(1.3, 0.7), propagator_line::<f64>(1.3, -0.7));
    }

    /// Independent oracle: the image sum of line propagators over the
    /// periodic copies collapses to
    /// `cosh(m (T/2 - t)) / (2 m sinh(m T / 2))` for `0 <= t <= T`.
    fn circle_image_sum(m: f64, period: f64, t: f64) -> f64 {
        (m * (period / 2.0 - t)).cosh() / (2.0 * m * (m * period / 2.0).sinh())
    }

    #[test]
    fn circle_propagator_matches_image_sum() {
        let (m, period) = (1.0f64, 8.0f64);
        for t in [0.0, 0.5, 1.0, 2.0, 3.9, 7.2] {
            let fast = propagator_circle(m, period, t, 1e-11).unwrap();
            let exact = circle_image_sum(m, period, t);
            assert!((fast - exact).abs() < 1e-10, "t={t}: {fast} vs {exact}");
        }
    }

    #[test]
    fn circle_propagator_is_even() {
        for t in [0.5f64, 1.0, 3.0] {
            let plus = propagator_circle::<f64>(1.0, 8.0, t, 1e-12).unwrap();
            let minus = propagator_circle::<f64>(1.0, 8.0, -t, 1e-12).unwrap();
            assert!((plus - minus).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_propagator_is_periodic() {
        let v1 = propagator_circle::<f64>(1.0, 8.0, 1.0, 1e-12).unwrap();
        let v2 = propagator_circle::<f64>(1.0, 8.0, 9.0, 1e-12).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn circle_close_to_line_below_half_period() {
        // mT = 8 regime: within a few percent up to t ~ T/2
        let (m, period) = (1.0f64, 8.0f64);
        for t in [0.5, 1.0, 2.0] {
            let circle = propagator_circle(m, period, t, 1e-10).unwrap();
            let line = propagator_line(m, t);
            assert!((circle - line).abs() / line < 0.05, "t={t}");
        }
    }

    #[test]
    fn circle_minimum_has_exponential_scale() {
        let (m, period) = (1.0f64, 8.0f64);
        let min = propagator_circle::<f64>(m, period, period / 2.0, 1e-12).unwrap();
        let scale = (-m * period / 2.0f64).exp();
        assert!(min > 0.5 * scale && min < 5.0 * scale);
    }

    #[test]
    fn circle_rejects_sub_epsilon_tolerance() {
        assert!(matches!(
            propagator_circle::<f64>(1.0, 8.0, 1.0, 1e-18),
            Err(Error::ToleranceUnachievable { .. })
        ));
    }

    #[test]
    fn effective_params_figure_values() {
        // m = 1, a = 0.9: Z_eff ~ 0.456, m_eff ~ 0.969
        let p = lattice_effective_params::<f64>(1.0, 0.9);
        assert!((p.z_eff - 0.456).abs() < 1e-3);
        assert!((p.m_eff - 0.969).abs() < 1e-3);
    }

    #[test]
    fn effective_params_continuum_limit() {
        let p = lattice_effective_params::<f64>(1.0, 1e-6);
        assert!((p.m_eff - 1.0).abs() < 1e-9);
        assert!((p.z_eff - 0.5).abs() < 1e-9);
    }

    #[test]
    fn effective_mass_matches_small_a_series() {
        // m - m_eff = m (m a)^2 / 24 + O((m a)^4)
        let (m, a) = (1.0f64, 0.1f64);
        let p = lattice_effective_params(m, a);
        let series = m * (m * a) * (m * a) / 24.0;
        let exact = m - p.m_eff;
        assert!((exact - series).abs() < 0.1 * series.abs());

        let z_series = (1.0 - (m * a) * (m * a) / 8.0) / (2.0 * m);
        assert!((p.z_eff - z_series).abs() < 1e-5);
    }

    #[test]
    fn infinite_lattice_figure_value_and_symmetry() {
        let v0 = propagator_infinite_lattice::<f64>(1.0, 0.9, 0);
        assert!((v0 - 0.456).abs() < 1e-3);
        assert_eq!(
            propagator_infinite_lattice::<f64>(1.0, 0.9, 3),
            propagator_infinite_lattice(1.0, 0.9, -3)
        );
    }

    #[test]
    fn infinite_lattice_matches_brillouin_integral() {
        for n in [0i64, 1, 2, 5] {
            let closed = propagator_infinite_lattice::<f64>(1.0, 0.9, n);
            let integral = propagator_infinite_lattice_by_quadrature::<f64>(1.0, 0.9, n, 1e-13).unwrap();
            assert!((closed - integral).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn circular_lattice_is_periodic_and_even() {
        let (m, nsites, a) = (1.0f64, 12u32, 0.5f64);
        for n in 0..12i64 {
            let v = propagator_circular_lattice(m, nsites, a, n);
            let v_shift = propagator_circular_lattice(m, nsites, a, n + 12);
            let v_neg = propagator_circular_lattice(m, nsites, a, -n);
            assert!((v - v_shift).abs() < 1e-14);
            assert!((v - v_neg).abs() < 1e-14);
        }
    }

    #[test]
    fn circular_lattice_reaches_circle_as_spacing_shrinks() {
        // a -> 0 at fixed T: approaches the circle propagator
        let (m, period, t) = (1.0f64, 8.0f64, 1.0f64);
        let circle = propagator_circle(m, period, t, 1e-12).unwrap();
        let mut previous = f64::INFINITY;
        for n_sites in [16u32, 64, 256] {
            let a = period / f64::from(n_sites);
            let n = (t / a).round() as i64;
            let value = propagator_circular_lattice(m, n_sites, a, n);
            let gap = (value - circle).abs();
            assert!(gap < previous);
            previous = gap;
        }
        assert!(previous < 1e-3);
    }

    #[test]
    fn circular_lattice_reaches_infinite_lattice_as_volume_grows() {
        // T -> infinity at fixed a: approaches the infinite lattice
        let (m, a, n) = (1.0f64, 0.5f64, 2i64);
        let infinite = propagator_infinite_lattice(m, a, n);
        let mut previous = f64::INFINITY;
        for n_sites in [8u32, 16, 32] {
            let value = propagator_circular_lattice(m, n_sites, a, n);
            let gap = (value - infinite).abs();
            assert!(gap < previous);
            previous = gap;
        }
        assert!(previous < 1e-3);
    }

    #[test]
    fn limit_diagram_commutes_to_the_line() {
        // both composite limits from the circular lattice reach the real line
        let (m, t) = (1.0f64, 1.0f64);
        let line = propagator_line(m, t);

        // path 1: a -> 0 at T = 16, then T large is already taken care of
        let n_sites = 512u32;
        let a = 16.0 / f64::from(n_sites);
        let via_circle = propagator_circular_lattice(m, n_sites, a, (t / a).round() as i64);

        // path 2: T -> infinity at a = 1/32, then a -> 0
        let a2 = 1.0 / 32.0;
        let via_lattice = propagator_circular_lattice(m, 1024, a2, (t / a2).round() as i64);

        assert!((via_circle - line).abs() < 5e-3);
        assert!((via_lattice - line).abs() < 5e-3);
    }

    #[test]
    fn single_precision_instantiation_is_usable() {
        let line = propagator_line::<f32>(1.0, 0.0);
        assert!((line - 0.5).abs() < 1e-6);
        let params = lattice_effective_params::<f32>(1.0, 0.9);
        assert!((params.z_eff - 0.456).abs() < 1e-3);
        let circle = propagator_circle::<f32>(1.0, 8.0, 1.0, 1e-4).unwrap();
        let reference = propagator_circle::<f64>(1.0, 8.0, 1.0, 1e-10).unwrap();
        assert!((f64::from(circle) - reference).abs() < 1e-4);
    }

    #[test]
    fn finite_volume_deviation_shrinks_with_mt() {
        // |circular - infinite| at n = 0 shrinks as m T grows
        let (m, a) = (1.0f64, 0.5f64);
        let infinite = propagator_infinite_lattice(m, a, 0);
        let small_t = (propagator_circular_lattice(m, 6, a, 0) - infinite).abs();
        let large_t = (propagator_circular_lattice(m, 24, a, 0) - infinite).abs();
        assert!(large_t < small_t);
    }
}

//! Dormand-Prince 5(4) integrator with embedded error control.
//!
//! The flow systems of this crate are small dense linear systems with
//! coupling-dependent coefficients; an explicit adaptive pair with combined
//! absolute/relative per-component control is enough (the random-field
//! starting point keeps them non-stiff away from `lambda = 0`).

use crate::error::{Error, Result};
use crate::Real;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions<F> {
    pub rtol: F,
    pub atol: F,
    pub h_initial: Option<F>,
    pub h_min: F,
    pub max_steps: usize,
}

impl<F: Real> OdeOptions<F> {
    pub fn with_tol(tol: F) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol * F::from_f64_lossy(1e-3),
            h_initial: None,
            h_min: F::from_f64_lossy(1e-14),
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OdeSolution<F> {
    pub y: Vec<F>,
    /// Accumulated local error estimates of the accepted steps.
    pub error_estimate: F,
    pub steps: usize,
    pub rejected: usize,
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t_end`.
pub fn integrate<F: Real>(
    f: &mut impl FnMut(F, &[F], &mut [F]),
    t0: F,
    y0: &[F],
    t_end: F,
    opts: &OdeOptions<F>,
) -> Result<OdeSolution<F>> {
    let dim = y0.len();
    let mut y = y0.to_vec();
    if t_end == t0 || dim == 0 {
        return Ok(OdeSolution {
            y,
            error_estimate: F::zero(),
            steps: 0,
            rejected: 0,
        });
    }
    let span = t_end - t0;
    let direction = span.signum();
    let mut t = t0;
    let mut h = opts
        .h_initial
        .unwrap_or_else(|| span / F::from_f64_lossy(100.0))
        .abs()
        * direction;

    let c = dp_c::<F>();
    let a = dp_a::<F>();
    let b5 = dp_b5::<F>();
    let b4 = dp_b4::<F>();

    let mut k = vec![vec![F::zero(); dim]; 7];
    let mut y_stage = vec![F::zero(); dim];
    let mut y_new = vec![F::zero(); dim];
    let mut accumulated = F::zero();
    let mut steps = 0usize;
    let mut rejected = 0usize;

    f(t, &y, &mut k[0]);

    loop {
        if (t - t_end) * direction >= F::zero() {
            return Ok(OdeSolution {
                y,
                error_estimate: accumulated,
                steps,
                rejected,
            });
        }
        if (t + h - t_end) * direction > F::zero() {
            h = t_end - t;
        }
        if h.abs() < opts.h_min {
            return Err(Error::StepUnderflow {
                at: t.to_f64().unwrap_or(f64::NAN),
                step: h.to_f64().unwrap_or(f64::NAN),
            });
        }
        if steps + rejected > opts.max_steps {
            return Err(Error::StepUnderflow {
                at: t.to_f64().unwrap_or(f64::NAN),
                step: h.to_f64().unwrap_or(f64::NAN),
            });
        }

        for stage in 1..7 {
            for (i, ys) in y_stage.iter_mut().enumerate() {
                let mut acc = F::zero();
                for (prev, kp) in k.iter().enumerate().take(stage) {
                    acc += a[stage - 1][prev] * kp[i];
                }
                *ys = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut(stage);
            let _ = head;
            f(t + c[stage] * h, &y_stage, &mut tail[0]);
        }

        let mut err_norm = F::zero();
        for i in 0..dim {
            let mut acc5 = F::zero();
            let mut acc4 = F::zero();
            for stage in 0..7 {
                acc5 += b5[stage] * k[stage][i];
                acc4 += b4[stage] * k[stage][i];
            }
            y_new[i] = y[i] + h * acc5;
            let scale = opts.atol + opts.rtol * F::max(y[i].abs(), y_new[i].abs());
            let e = h * (acc5 - acc4) / scale;
            err_norm += e * e;
        }
        err_norm = (err_norm / F::from_usize_lossy(dim)).sqrt();

        if err_norm <= F::one() {
            t += h;
            y.copy_from_slice(&y_new);
            // FSAL: the last stage is the first stage of the next step
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
            accumulated += err_norm * opts.rtol;
            steps += 1;
        } else {
            rejected += 1;
        }

        let safety = F::from_f64_lossy(0.9);
        let exponent = F::from_f64_lossy(-0.2);
        let factor = if err_norm == F::zero() {
            F::from_f64_lossy(5.0)
        } else {
            F::min(
                F::from_f64_lossy(5.0),
                F::max(F::from_f64_lossy(0.2), safety * err_norm.powf(exponent)),
            )
        };
        h *= factor;
    }
}

fn dp_c<F: Real>() -> [F; 7] {
    [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0].map(F::from_f64_lossy)
}

fn dp_a<F: Real>() -> [[F; 6]; 6] {
    let rows: [[f64; 6]; 6] = [
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    rows.map(|row| row.map(F::from_f64_lossy))
}

fn dp_b5<F: Real>() -> [F; 7] {
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ]
    .map(F::from_f64_lossy)
}

fn dp_b4<F: Real>() -> [F; 7] {
    [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ]
    .map(F::from_f64_lossy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let opts = OdeOptions::with_tol(1e-10);
        let sol = integrate(&mut f, 0.0, &[1.0], 2.0, &opts).unwrap();
        assert!((sol.y[0] - (-2.0f64).exp()).abs() < 1e-9);
        assert!(sol.steps > 0);
    }

    #[test]
    fn harmonic_oscillator_round_trip() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let opts = OdeOptions::with_tol(1e-11);
        let two_pi = 2.0 * std::f64::consts::PI;
        let sol = integrate(&mut f, 0.0, &[1.0, 0.0], two_pi, &opts).unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-8);
        assert!(sol.y[1].abs() < 1e-8);
    }

    #[test]
    fn variable_coefficient_system() {
        // y' = t y has solution exp(t^2/2)
        let mut f = |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = t * y[0];
        let opts = OdeOptions::with_tol(1e-12);
        let sol = integrate(&mut f, 0.0, &[1.0], 1.5, &opts).unwrap();
        assert!((sol.y[0] - (1.5f64 * 1.5 / 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_length_flow_returns_initial_values() {
        let mut f = |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 1.0;
        let opts = OdeOptions::with_tol(1e-10);
        let sol = integrate(&mut f, 0.25, &[7.0], 0.25, &opts).unwrap();
        assert_eq!(sol.y[0], 7.0);
        assert_eq!(sol.steps, 0);
    }

    #[test]
    fn backward_integration() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        let opts = OdeOptions::with_tol(1e-10);
        let sol = integrate(&mut f, 1.0, &[1.0f64.exp()], 0.0, &opts).unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_precision_integration() {
        let mut f = |_t: f32, y: &[f32], dy: &mut [f32]| dy[0] = -y[0];
        let opts = OdeOptions::with_tol(1e-5f32);
        let sol = integrate(&mut f, 0.0f32, &[1.0f32], 1.0, &opts).unwrap();
        assert!((sol.y[0] - (-1.0f32).exp()).abs() < 1e-4);
    }

    #[test]
    fn stiffness_failure_reports_step_underflow() {
        // integrand with a pole inside the span cannot be crossed
        let mut f = |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] / (0.5 - t);
        let opts = OdeOptions::with_tol(1e-10);
        assert!(matches!(
            integrate(&mut f, 0.0, &[1.0], 1.0, &opts),
            Err(Error::StepUnderflow { .. })
        ));
    }
}

//! Exact workbench for lattice `phi^4` correlation functions.
//!
//! The pipeline has three legs:
//!
//! 1. **Reduction** ([`reduction`]): every correlator `G(nu)` is rewritten,
//!    through the lattice Dyson-Schwinger identities, as an exact linear
//!    combination of primitive correlators (all occupations at most two for
//!    a quartic potential). Coefficients live in an exact ring of rational
//!    Laurent polynomials in the coupling symbols ([`ring`]).
//! 2. **Evolution** ([`evolution`]): the primitive basis obeys a closed
//!    linear differential system in any chosen coupling; integrating it from
//!    the exactly-solvable random-field point (all bonds zero) evaluates
//!    every primitive numerically.
//! 3. **Validation** ([`oracle`], [`propagators`]): brute-force quadrature
//!    of the defining integral and closed-form free propagators cross-check
//!    both legs.
//!
//! Floating-point numerics are generic over the scalar type through the
//! [`Real`] trait; exact arithmetic uses arbitrary-precision rationals.

pub mod error;
pub mod evolution;
pub mod lattice;
pub mod ode;
pub mod oracle;
pub mod propagators;
pub mod quad;
pub mod reduction;
pub mod ring;
pub mod symmetry;

pub use error::{Error, Result};

/// Scalar trait for all floating-point numerics (f32 or f64).
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Exact rational scalar used by the reduction ring.
pub type Rational = num_rational::BigRational;

/// Default floating-point scalar of the command-line tools.
pub type Scalar = f64;

//! Coupling-flow evaluation of primitive correlators.
//!
//! At the random-field point (all bonds zero) every primitive correlator is
//! a product of one-dimensional moments, computable by quadrature. Deriving
//! the defining integral with respect to a coupling and reducing the result
//! back to the primitive basis yields a closed linear differential system;
//! integrating it from the random-field point evaluates the whole basis at
//! the target couplings.
//!
//! Supported flow parameters: the global bond coupling `w`, one parameter
//! per bond (the commuting-flow system), the global mass coupling `k` and
//! the global quartic coupling `lambda` (whose start point must avoid the
//! irregular singular point at zero).

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, MultiIndex, PotentialCoefficients, Site};
use crate::ode::{self, OdeOptions};
use crate::quad;
use crate::reduction::{LinearCombination, Reducer};
use crate::ring::{rat, Symbol};
use crate::symmetry;
use crate::Real;

/// Which coupling flows.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlowParameter {
    /// One shared bond coupling; a single ODE matrix.
    GlobalW,
    /// One independent coupling per bond; one matrix per bond.
    PerBondW,
    /// Shared mass coupling `k`.
    GlobalK,
    /// Shared quartic coupling `lambda`.
    GlobalLambda,
}

/// A generated flow system: ordered primitive basis, per-parameter
/// coefficient matrices over the exact ring, and the initial point.
#[derive(Clone, Debug)]
pub struct FlowSystem {
    spec: LatticeSpec,
    basis: Vec<MultiIndex>,
    parameter: FlowParameter,
    flow_symbols: Vec<Symbol>,
    /// `matrices[p][row]` is the right-hand side of `d P(basis[row]) / d p`.
    matrices: Vec<Vec<LinearCombination>>,
    /// Values of the non-flowing symbolic couplings.
    initial_point: BTreeMap<Symbol, BigRational>,
    /// Flow start value (zero for bond and mass flows).
    start: BigRational,
}

impl FlowSystem {
    pub fn basis(&self) -> &[MultiIndex] {
        &self.basis
    }

    pub fn parameter(&self) -> FlowParameter {
        self.parameter
    }

    pub fn flow_symbols(&self) -> &[Symbol] {
        &self.flow_symbols
    }

    pub fn matrix(&self, parameter_index: usize) -> &[LinearCombination] {
        &self.matrices[parameter_index]
    }

    pub fn row(&self, parameter_index: usize, row: usize) -> &LinearCombination {
        &self.matrices[parameter_index][row]
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn basis_position(&self, nu: &MultiIndex) -> Option<usize> {
        self.basis.iter().position(|b| b == nu)
    }

    /// Assigns the non-flowing symbolic couplings for integration.
    pub fn set_initial_point(&mut self, assignment: BTreeMap<Symbol, BigRational>) {
        self.initial_point = assignment;
    }

    /// Moves the flow start away from zero (needed for `lambda` flows).
    pub fn set_start(&mut self, start: BigRational) {
        self.start = start;
    }
}

/// Builds the flow system for `parameter` over `basis`.
///
/// The flowing coupling must be symbolic in `spec` (shared symbol for the
/// global selectors, pairwise-distinct symbols for the per-bond one). The
/// basis may be the full (parity-filtered) primitive basis or, for uniform
/// couplings and global selectors, the orbit-compressed basis; reduced
/// right-hand sides are canonicalized into it.
pub fn generate_flow_system(
    spec: &LatticeSpec,
    parameter: FlowParameter,
    basis: &[MultiIndex],
) -> Result<FlowSystem> {
    let flow_symbols = flow_symbols_of(spec, parameter)?;
    let positions: BTreeMap<&MultiIndex, usize> =
        basis.iter().enumerate().map(|(i, nu)| (nu, i)).collect();
    let compressed = basis.len()
        < symmetry::primitive_basis(spec, spec.is_even())
            .map(|full| full.len())
            .unwrap_or(usize::MAX);
    if compressed && parameter == FlowParameter::PerBondW {
        return Err(Error::InvalidFlowSystem(
            "per-bond flows cannot use an orbit-compressed basis".into(),
        ));
    }

    let mut reducer = Reducer::new(spec);
    let bonds: Vec<(Site, Site)> = spec.bonds().map(|(pair, _)| pair.clone()).collect();

    let parameter_count = match parameter {
        FlowParameter::PerBondW => bonds.len(),
        _ => 1,
    };
    let mut matrices: Vec<Vec<LinearCombination>> = vec![Vec::new(); parameter_count];

    for nu in basis {
        match parameter {
            FlowParameter::GlobalW => {
                let mut row = LinearCombination::zero();
                for (a, b) in &bonds {
                    let target = raise(nu, &[(a, 1), (b, 1)]);
                    row.add_assign(&reducer.reduce(&target)?.0);
                }
                matrices[0].push(into_basis(row, spec, &positions, compressed)?);
            }
            FlowParameter::PerBondW => {
                for (bond_index, (a, b)) in bonds.iter().enumerate() {
                    let target = raise(nu, &[(a, 1), (b, 1)]);
                    let row = reducer.reduce(&target)?.0;
                    matrices[bond_index].push(into_basis(row, spec, &positions, compressed)?);
                }
            }
            FlowParameter::GlobalK => {
                let mut row = LinearCombination::zero();
                for site in spec.sites() {
                    let target = raise(nu, &[(site, 2)]);
                    row.add_scaled(
                        &crate::ring::Coefficient::from_rational(rat(-1, 2)),
                        &reducer.reduce(&target)?.0,
                    );
                }
                matrices[0].push(into_basis(row, spec, &positions, compressed)?);
            }
            FlowParameter::GlobalLambda => {
                let mut row = LinearCombination::zero();
                for site in spec.sites() {
                    let target = raise(nu, &[(site, 4)]);
                    row.add_scaled(
                        &crate::ring::Coefficient::from_rational(rat(-1, 4)),
                        &reducer.reduce(&target)?.0,
                    );
                }
                matrices[0].push(into_basis(row, spec, &positions, compressed)?);
            }
        }
    }

    Ok(FlowSystem {
        spec: spec.clone(),
        basis: basis.to_vec(),
        parameter,
        flow_symbols,
        matrices,
        initial_point: BTreeMap::new(),
        start: BigRational::zero(),
    })
}

fn raise(nu: &MultiIndex, shifts: &[(&Site, i64)]) -> MultiIndex {
    let mut out = nu.clone();
    for (site, delta) in shifts {
        out = out.shifted(site, *delta).expect("raising cannot underflow");
    }
    out
}

fn into_basis(
    row: LinearCombination,
    spec: &LatticeSpec,
    positions: &BTreeMap<&MultiIndex, usize>,
    compressed: bool,
) -> Result<LinearCombination> {
    let mut out = LinearCombination::zero();
    for (nu, coeff) in row.iter() {
        if positions.contains_key(nu) {
            out.add_term(nu.clone(), coeff.clone());
            continue;
        }
        if compressed && spec.is_uniform() {
            let canonical = symmetry::canonicalize(nu, spec).canonical;
            if positions.contains_key(&canonical) {
                out.add_term(canonical, coeff.clone());
                continue;
            }
        }
        return Err(Error::InvalidFlowSystem(format!(
            "reduced term {nu} is outside the supplied basis"
        )));
    }
    Ok(out)
}

fn flow_symbols_of(spec: &LatticeSpec, parameter: FlowParameter) -> Result<Vec<Symbol>> {
    use crate::lattice::Coupling;
    let bond_symbols: Vec<Option<Symbol>> = spec
        .bonds()
        .map(|(_, w)| match w {
            Coupling::Symbol(s) => Some(s.clone()),
            Coupling::Rational(_) => None,
        })
        .collect();
    match parameter {
        FlowParameter::GlobalW => {
            let mut unique: BTreeSet<Symbol> = BTreeSet::new();
            for s in &bond_symbols {
                match s {
                    Some(s) => {
                        unique.insert(s.clone());
                    }
                    None => {
                        return Err(Error::InvalidFlowSystem(
                            "global bond flow needs symbolic bond couplings".into(),
                        ))
                    }
                }
            }
            if unique.len() != 1 {
                return Err(Error::InvalidFlowSystem(format!(
                    "global bond flow needs one shared bond symbol, found {}",
                    unique.len()
                )));
            }
            Ok(unique.into_iter().collect())
        }
        FlowParameter::PerBondW => {
            let mut symbols = Vec::new();
            let mut seen = BTreeSet::new();
            for s in &bond_symbols {
                match s {
                    Some(s) if seen.insert(s.clone()) => symbols.push(s.clone()),
                    Some(s) => {
                        return Err(Error::InvalidFlowSystem(format!(
                            "bond symbol {s} is shared between bonds"
                        )))
                    }
                    None => {
                        return Err(Error::InvalidFlowSystem(
                            "per-bond flow needs symbolic bond couplings".into(),
                        ))
                    }
                }
            }
            if symbols.is_empty() {
                return Err(Error::InvalidFlowSystem("lattice has no bonds".into()));
            }
            Ok(symbols)
        }
        FlowParameter::GlobalK | FlowParameter::GlobalLambda => {
            let mut unique: BTreeSet<Symbol> = BTreeSet::new();
            for site in spec.sites() {
                let pot = spec.potential_at(site);
                let coupling = if parameter == FlowParameter::GlobalK {
                    &pot.k
                } else {
                    &pot.lambda
                };
                match coupling {
                    Coupling::Symbol(s) => {
                        unique.insert(s.clone());
                    }
                    Coupling::Rational(_) => {
                        return Err(Error::InvalidFlowSystem(
                            "global potential flow needs a symbolic coupling".into(),
                        ))
                    }
                }
            }
            if unique.len() != 1 {
                return Err(Error::InvalidFlowSystem(
                    "global potential flow needs one shared symbol".into(),
                ));
            }
            Ok(unique.into_iter().collect())
        }
    }
}

/// One-dimensional on-site moment
/// `M_nu = integral phi^nu exp(-a phi - k phi^2/2 - g phi^3/3 - lambda phi^4/4) dphi`.
///
/// Odd `nu` with an even potential returns exactly zero. The integration
/// window is grown until the integrand tail drops below the tolerance by a
/// comfortable margin.
pub fn onsite_moment<F: Real>(nu: u32, pot: &PotentialCoefficients, tol: F) -> Result<F> {
    if !pot.is_numeric() {
        return Err(Error::NumericCouplingsRequired("onsite moment".into()));
    }
    let a = coupling_f64::<F>(&pot.a);
    let k = coupling_f64::<F>(&pot.k);
    let g = coupling_f64::<F>(&pot.g);
    let lambda = coupling_f64::<F>(&pot.lambda);

    if lambda < F::zero() {
        return Err(Error::NonIntegrablePotential(
            "negative quartic coupling".into(),
        ));
    }
    if lambda.is_zero() {
        if !g.is_zero() {
            return Err(Error::NonIntegrablePotential(
                "cubic term without quartic damping".into(),
            ));
        }
        if k <= F::zero() {
            return Err(Error::NonIntegrablePotential(
                "lambda = 0 and k <= 0".into(),
            ));
        }
    }
    if pot.is_even() && nu % 2 == 1 {
        return Ok(F::zero());
    }

    let potential = |phi: F| {
        a * phi
            + k * phi * phi / F::from_f64_lossy(2.0)
            + g * phi * phi * phi / F::from_f64_lossy(3.0)
            + lambda * phi * phi * phi * phi / F::from_f64_lossy(4.0)
    };
    let log_tail_target = tol.ln() - F::from_f64_lossy(30.0);
    let nu_f = F::from_f64_lossy(f64::from(nu));
    let mut radius = F::from_f64_lossy(4.0);
    for _ in 0..60 {
        let log_hi = nu_f * radius.ln() - potential(radius);
        let log_lo = nu_f * radius.ln() - potential(-radius);
        if log_hi < log_tail_target && log_lo < log_tail_target {
            break;
        }
        radius *= F::from_f64_lossy(1.5);
    }

    let mut integrand = |phi: F| phi.powi(nu as i32) * (-potential(phi)).exp();
    let result = quad::integrate_adaptive(&mut integrand, -radius, radius, tol)?;
    Ok(result.value)
}

fn coupling_f64<F: Real>(c: &crate::lattice::Coupling) -> F {
    F::from_f64_lossy(c.to_f64().expect("numeric coupling"))
}

/// Primitive values at the random-field point: each entry is the product of
/// the on-site moments of its occupations over all lattice sites.
pub fn initial_primitive_values<F: Real>(
    spec: &LatticeSpec,
    basis: &[MultiIndex],
    tol: F,
) -> Result<Vec<F>> {
    for ((a, b), w) in spec.bonds() {
        if !w.is_zero() {
            return Err(Error::NonzeroBondCoupling(format!("{a}-{b}")));
        }
    }
    let mut cache: BTreeMap<(PotentialCoefficients, u32), F> = BTreeMap::new();
    let mut values = Vec::with_capacity(basis.len());
    for nu in basis {
        let mut product = F::one();
        for site in spec.sites() {
            let occupation = nu.get(site);
            let pot = spec.potential_at(site).clone();
            let key = (pot.clone(), occupation);
            let moment = match cache.get(&key) {
                Some(m) => *m,
                None => {
                    let m = onsite_moment(occupation, &pot, tol)?;
                    cache.insert(key, m);
                    m
                }
            };
            product *= moment;
        }
        values.push(product);
    }
    Ok(values)
}

/// Endpoint of an integrated flow.
#[derive(Clone, Debug)]
pub struct FlowState<F> {
    /// Final value of each flow parameter.
    pub parameter: Vec<F>,
    /// Primitive values in basis order.
    pub values: Vec<F>,
    /// Accumulated integrator error estimate.
    pub error_estimate: F,
}

/// Path choice for per-bond flows.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlowPath {
    /// Switch bonds on one at a time, each from zero to its target.
    Sequential,
    /// Scale every bond together along the straight line to the target.
    Diagonal,
}

/// Target of a flow integration.
#[derive(Clone, Debug)]
pub enum FlowTarget<F> {
    Scalar(F),
    PerBond { values: Vec<F>, path: FlowPath },
}

/// Compiled matrix entry: one monomial `q * prod flow_p^exp` per term.
struct CompiledEntry {
    column: usize,
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

struct CompiledMatrix {
    rows: Vec<Vec<CompiledEntry>>,
}

impl CompiledMatrix {
    fn apply<F: Real>(&self, flow_values: &[F], y: &[F], dy: &mut [F], scale: F) {
        for (row, entries) in self.rows.iter().enumerate() {
            let mut total = F::zero();
            for entry in entries {
                let mut coeff = F::zero();
                for (q, powers) in &entry.terms {
                    let mut value = F::from_f64_lossy(*q);
                    for (idx, exp) in powers {
                        value *= flow_values[*idx].powi(*exp);
                    }
                    coeff += value;
                }
                total += coeff * y[entry.column];
            }
            dy[row] += scale * total;
        }
    }
}

fn compile_matrix(
    system: &FlowSystem,
    matrix: &[LinearCombination],
) -> Result<CompiledMatrix> {
    let positions: BTreeMap<&MultiIndex, usize> = system
        .basis
        .iter()
        .enumerate()
        .map(|(i, nu)| (nu, i))
        .collect();
    let flow_index: BTreeMap<&Symbol, usize> = system
        .flow_symbols
        .iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let mut rows = Vec::with_capacity(matrix.len());
    for row in matrix {
        let mut entries: Vec<CompiledEntry> = Vec::new();
        for (nu, coeff) in row.iter() {
            let column = *positions.get(nu).ok_or_else(|| {
                Error::InvalidFlowSystem(format!("row references {nu} outside the basis"))
            })?;
            let mut terms = Vec::new();
            for (monomial, q) in coeff.terms() {
                let mut factor = q.to_f64().ok_or_else(|| {
                    Error::InvalidFlowSystem("coefficient overflows f64".into())
                })?;
                let mut powers = Vec::new();
                for (sym, exp) in monomial.exponents() {
                    if let Some(&idx) = flow_index.get(sym) {
                        powers.push((idx, exp));
                        continue;
                    }
                    let value = system
                        .initial_point
                        .get(sym)
                        .ok_or_else(|| Error::UnassignedSymbol(sym.name().to_owned()))?;
                    if value.is_zero() && exp < 0 {
                        return Err(Error::DivisionByZeroCoupling(sym.name().to_owned()));
                    }
                    factor *= value.to_f64().unwrap_or(f64::NAN).powi(exp);
                }
                terms.push((factor, powers));
            }
            entries.push(CompiledEntry { column, terms });
        }
        rows.push(entries);
    }
    Ok(CompiledMatrix { rows })
}

/// Integrates the flow from its start point to `target`.
///
/// Initial values are the random-field products, so the resolved start spec
/// must have every bond at zero. Lambda flows refuse paths that touch the
/// irregular singular point at `lambda = 0`.
pub fn integrate_flow<F: Real>(
    system: &FlowSystem,
    target: &FlowTarget<F>,
    tol: F,
) -> Result<FlowState<F>> {
    let start_f = F::from_f64_lossy(system.start.to_f64().unwrap_or(0.0));

    // resolve the start-point spec and check it is a random field
    let mut assignment = system.initial_point.clone();
    for sym in &system.flow_symbols {
        assignment.insert(sym.clone(), system.start.clone());
    }
    let resolved = system.spec.substitute(&assignment);
    if !resolved.is_numeric() {
        return Err(Error::NumericCouplingsRequired(
            "flow integration needs every coupling assigned".into(),
        ));
    }
    if resolved.has_nonzero_bond() {
        return Err(Error::SingularFlowPoint(
            "initial conditions exist only at the random-field point (all bonds zero)".into(),
        ));
    }

    let moment_tol = F::max(tol * F::from_f64_lossy(1e-3), F::from_f64_lossy(5e-15));
    let y0 = initial_primitive_values::<F>(&resolved, &system.basis, moment_tol)?;
    let opts = OdeOptions::with_tol(tol);

    match (system.parameter, target) {
        (FlowParameter::PerBondW, FlowTarget::PerBond { values, path }) => {
            if values.len() != system.flow_symbols.len() {
                return Err(Error::InvalidFlowSystem(format!(
                    "expected {} bond targets, got {}",
                    system.flow_symbols.len(),
                    values.len()
                )));
            }
            let compiled: Vec<CompiledMatrix> = system
                .matrices
                .iter()
                .map(|m| compile_matrix(system, m))
                .collect::<Result<_>>()?;
            match path {
                FlowPath::Diagonal => {
                    let mut f = |s: F, y: &[F], dy: &mut [F]| {
                        let flow: Vec<F> = values.iter().map(|&v| v * s).collect();
                        for d in dy.iter_mut() {
                            *d = F::zero();
                        }
                        for (b, matrix) in compiled.iter().enumerate() {
                            matrix.apply(&flow, y, dy, values[b]);
                        }
                    };
                    let sol = ode::integrate(&mut f, F::zero(), &y0, F::one(), &opts)?;
                    Ok(FlowState {
                        parameter: values.clone(),
                        values: sol.y,
                        error_estimate: sol.error_estimate,
                    })
                }
                FlowPath::Sequential => {
                    let mut y = y0;
                    let mut error = F::zero();
                    let mut current = vec![F::zero(); values.len()];
                    for (b, &target_b) in values.iter().enumerate() {
                        let matrix = &compiled[b];
                        let mut f = |t: F, y: &[F], dy: &mut [F]| {
                            let mut flow = current.clone();
                            flow[b] = t;
                            for d in dy.iter_mut() {
                                *d = F::zero();
                            }
                            matrix.apply(&flow, y, dy, F::one());
                        };
                        let sol = ode::integrate(&mut f, F::zero(), &y, target_b, &opts)?;
                        y = sol.y;
                        error += sol.error_estimate;
                        current[b] = target_b;
                    }
                    Ok(FlowState {
                        parameter: values.clone(),
                        values: y,
                        error_estimate: error,
                    })
                }
            }
        }
        (FlowParameter::PerBondW, FlowTarget::Scalar(_)) => Err(Error::InvalidFlowSystem(
            "per-bond systems need per-bond targets".into(),
        )),
        (_, FlowTarget::PerBond { .. }) => Err(Error::InvalidFlowSystem(
            "global systems take a scalar target".into(),
        )),
        (parameter, FlowTarget::Scalar(end)) => {
            if parameter == FlowParameter::GlobalLambda {
                let crosses_zero = start_f <= F::zero()
                    || *end <= F::zero()
                    || (start_f.min(*end) <= F::zero() && start_f.max(*end) >= F::zero());
                if crosses_zero {
                    return Err(Error::SingularFlowPoint(
                        "lambda flow touches the irregular singular point lambda = 0".into(),
                    ));
                }
            }
            let compiled = compile_matrix(system, &system.matrices[0])?;
            let mut f = |t: F, y: &[F], dy: &mut [F]| {
                for d in dy.iter_mut() {
                    *d = F::zero();
                }
                compiled.apply(&[t], y, dy, F::one());
            };
            let sol = ode::integrate(&mut f, start_f, &y0, *end, &opts)?;
            Ok(FlowState {
                parameter: vec![*end],
                values: sol.y,
                error_estimate: sol.error_estimate,
            })
        }
    }
}

/// Exact residual of the commuting-flow compatibility condition for the
/// per-bond system, maximized over the basis rows:
/// `d g^(j)_nu(xi) / d w_i - d g^(i)_nu(xi) / d w_j
///  + sum_mu [ g^(j)_nu(mu) g^(i)_mu(xi) - g^(i)_nu(mu) g^(j)_mu(xi) ] = 0`.
///
/// Matrix entries are exact Laurent polynomials, so the derivatives are
/// symbolic and the residual is evaluated exactly at the rational `point`.
pub fn compatibility_residual_in(
    system: &FlowSystem,
    point: &[BigRational],
    bond_i: usize,
    bond_j: usize,
    xi: &MultiIndex,
) -> Result<f64> {
    if system.parameter != FlowParameter::PerBondW {
        return Err(Error::InvalidFlowSystem(
            "compatibility residuals are defined for per-bond systems".into(),
        ));
    }
    if point.len() != system.flow_symbols.len() {
        return Err(Error::InvalidFlowSystem(format!(
            "expected {} bond values, got {}",
            system.flow_symbols.len(),
            point.len()
        )));
    }
    let mut assignment = system.initial_point.clone();
    for (sym, value) in system.flow_symbols.iter().zip(point) {
        assignment.insert(sym.clone(), value.clone());
    }
    let sym_i = &system.flow_symbols[bond_i];
    let sym_j = &system.flow_symbols[bond_j];

    let mut worst = BigRational::zero();
    for row in 0..system.basis.len() {
        let g_i = &system.matrices[bond_i][row];
        let g_j = &system.matrices[bond_j][row];
        let mut residual = g_j
            .get(xi)
            .derivative(sym_i)
            .sub(&g_i.get(xi).derivative(sym_j))
            .eval(&assignment)?;
        for (mu, coeff_j) in g_j.iter() {
            let mu_row = system.basis_position(mu).ok_or_else(|| {
                Error::InvalidFlowSystem(format!("row references {mu} outside the basis"))
            })?;
            let inner = system.matrices[bond_i][mu_row].get(xi);
            residual += coeff_j.eval(&assignment)? * inner.eval(&assignment)?;
        }
        for (mu, coeff_i) in g_i.iter() {
            let mu_row = system.basis_position(mu).ok_or_else(|| {
                Error::InvalidFlowSystem(format!("row references {mu} outside the basis"))
            })?;
            let inner = system.matrices[bond_j][mu_row].get(xi);
            residual -= coeff_i.eval(&assignment)? * inner.eval(&assignment)?;
        }
        let magnitude = residual.abs();
        if magnitude > worst {
            worst = magnitude;
        }
    }
    Ok(worst.to_f64().unwrap_or(f64::NAN))
}

/// Convenience wrapper generating the per-bond system from `spec` first.
pub fn compatibility_residual(
    spec: &LatticeSpec,
    basis: &[MultiIndex],
    point: &[BigRational],
    bond_i: usize,
    bond_j: usize,
    xi: &MultiIndex,
) -> Result<f64> {
    let system = generate_flow_system(spec, FlowParameter::PerBondW, basis)?;
    compatibility_residual_in(&system, point, bond_i, bond_j, xi)
}

/// Largest residual over all bond pairs and basis elements.
pub fn max_compatibility_residual(system: &FlowSystem, point: &[BigRational]) -> Result<f64> {
    let bonds = system.flow_symbols.len();
    let mut worst = 0.0f64;
    for i in 0..bonds {
        for j in (i + 1)..bonds {
            for xi in &system.basis {
                let r = compatibility_residual_in(system, point, i, j, xi)?;
                if r > worst {
                    worst = r;
                }
            }
        }
    }
    Ok(worst)
}

/// Least fixed point of "add every basis element appearing on the
/// right-hand side of a member's row", across all parameter matrices.
pub fn dependency_closure(
    seed: &[MultiIndex],
    system: &FlowSystem,
) -> BTreeSet<MultiIndex> {
    let mut closure: BTreeSet<MultiIndex> = seed.iter().cloned().collect();
    let mut frontier: Vec<MultiIndex> = seed.to_vec();
    while let Some(nu) = frontier.pop() {
        let Some(row) = system.basis_position(&nu) else {
            continue;
        };
        for matrix in &system.matrices {
            for (dep, _) in matrix[row].iter() {
                if closure.insert(dep.clone()) {
                    frontier.push(dep.clone());
                }
            }
        }
    }
    closure
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Coupling;
    use crate::ring::{rat_int, Coefficient, Monomial};

    fn even_pot(k: (i64, i64), lambda: (i64, i64)) -> PotentialCoefficients {
        PotentialCoefficients::even(
            Coupling::Rational(rat(k.0, k.1)),
            Coupling::Rational(rat(lambda.0, lambda.1)),
        )
    }

    fn idx(spec: &LatticeSpec, dense: &[u32]) -> MultiIndex {
        MultiIndex::from_pairs(
            spec.sites()
                .iter()
                .zip(dense)
                .filter(|(_, &o)| o > 0)
                .map(|(s, &o)| (s.clone(), o)),
        )
    }

    fn sym_coeff(names_exps: &[(&str, i32)], q: BigRational) -> Coefficient {
        let mut m = Monomial::one();
        for (name, exp) in names_exps {
            m = m.mul(&Monomial::symbol_pow(Symbol::new(name), *exp));
        }
        Coefficient::term(m, q)
    }

    #[test]
    fn moment_odd_integrand_vanishes() {
        let pot = even_pot((1, 1), (1, 1));
        assert_eq!(onsite_moment::<f64>(1, &pot, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn moment_gaussian_second_moment_ratio() {
        let pot = even_pot((1, 1), (0, 1));
        let m0 = onsite_moment::<f64>(0, &pot, 1e-12).unwrap();
        let m2 = onsite_moment::<f64>(2, &pot, 1e-12).unwrap();
        assert!((m2 / m0 - 1.0).abs() < 1e-10);
        assert!((m0 - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn moment_pure_quartic_closed_form() {
        // integral of exp(-phi^4/4) = Gamma(1/4)/sqrt(2)
        let pot = even_pot((0, 1), (1, 1));
        let m0 = onsite_moment::<f64>(0, &pot, 1e-12).unwrap();
        assert!((m0 - 2.5636933520408474).abs() < 1e-10);
        // integration by parts at k = 0 gives M4 = M0
        let m4 = onsite_moment::<f64>(4, &pot, 1e-12).unwrap();
        assert!((m4 - m0).abs() < 1e-9);
    }

    #[test]
    fn moment_reference_values() {
        // frozen from an independent quadrature of the defining integral
        let pot = even_pot((1, 1), (1, 2));
        let m0 = onsite_moment::<f64>(0, &pot, 1e-13).unwrap();
        let m2 = onsite_moment::<f64>(2, &pot, 1e-13).unwrap();
        let m4 = onsite_moment::<f64>(4, &pot, 1e-13).unwrap();
        assert!((m0 - 2.101960916165517).abs() < 1e-9);
        assert!((m2 - 1.2174657945426195).abs() < 1e-9);
        assert!((m4 - 1.7689902432457945).abs() < 1e-9);
        // the lattice Dyson-Schwinger identity at one site:
        // M4 = (1/lambda) M0 - (k/lambda) M2
        assert!((m4 - (2.0 * m0 - 2.0 * m2)).abs() < 1e-9);
    }

    #[test]
    fn moment_rejects_non_integrable() {
        let flat = PotentialCoefficients::even(Coupling::int(0), Coupling::int(0));
        assert!(matches!(
            onsite_moment::<f64>(0, &flat, 1e-10),
            Err(Error::NonIntegrablePotential(_))
        ));
        let negative_k = even_pot((-1, 1), (0, 1));
        assert!(matches!(
            onsite_moment::<f64>(0, &negative_k, 1e-10),
            Err(Error::NonIntegrablePotential(_))
        ));
    }

    #[test]
    fn initial_values_factorize() {
        let spec = LatticeSpec::random_field(1, 2, even_pot((1, 1), (1, 1))).unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let values = initial_primitive_values::<f64>(&spec, &basis, 1e-12).unwrap();
        let m0 = onsite_moment::<f64>(0, &even_pot((1, 1), (1, 1)), 1e-12).unwrap();
        let m2 = onsite_moment::<f64>(2, &even_pot((1, 1), (1, 1)), 1e-12).unwrap();

        let vacuum = basis.iter().position(|nu| nu.is_empty()).unwrap();
        assert!((values[vacuum] - m0 * m0).abs() < 1e-9);

        let ones = basis.iter().position(|nu| nu == &idx(&spec, &[1, 1])).unwrap();
        assert_eq!(values[ones], 0.0);

        let twos = basis.iter().position(|nu| nu == &idx(&spec, &[2, 2])).unwrap();
        assert!((values[twos] - m2 * m2).abs() < 1e-9);
    }

    #[test]
    fn n1_k_flow_matches_displayed_system() {
        // dP(0)/dk = -1/2 P(2); dP(2)/dk = k/(2 lambda) P(2) - 1/(2 lambda) P(0)
        let spec = LatticeSpec::random_field(
            1,
            1,
            PotentialCoefficients::even(Coupling::sym("k"), Coupling::sym("lambda")),
        )
        .unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalK, &basis).unwrap();

        let p0 = MultiIndex::new();
        let p2 = idx(&spec, &[2]);
        let row0 = system.row(0, system.basis_position(&p0).unwrap());
        assert_eq!(row0.get(&p2), Coefficient::from_rational(rat(-1, 2)));
        assert_eq!(row0.len(), 1);

        let row2 = system.row(0, system.basis_position(&p2).unwrap());
        assert_eq!(
            row2.get(&p2),
            sym_coeff(&[("k", 1), ("lambda", -1)], rat(1, 2))
        );
        assert_eq!(row2.get(&p0), sym_coeff(&[("lambda", -1)], rat(-1, 2)));
    }

    #[test]
    fn n1_lambda_flow_matches_displayed_system() {
        // dP(0)/dl = k/(4 l) P(2) - 1/(4 l) P(0)
        // dP(2)/dl = -(1/(4 l))(k^2/l + 3) P(2) + k/(4 l^2) P(0)
        let spec = LatticeSpec::random_field(
            1,
            1,
            PotentialCoefficients::even(Coupling::sym("k"), Coupling::sym("lambda")),
        )
        .unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalLambda, &basis).unwrap();

        let p0 = MultiIndex::new();
        let p2 = idx(&spec, &[2]);
        let row0 = system.row(0, system.basis_position(&p0).unwrap());
        assert_eq!(
            row0.get(&p2),
            sym_coeff(&[("k", 1), ("lambda", -1)], rat(1, 4))
        );
        assert_eq!(row0.get(&p0), sym_coeff(&[("lambda", -1)], rat(-1, 4)));

        let row2 = system.row(0, system.basis_position(&p2).unwrap());
        let expected_p2 = sym_coeff(&[("k", 2), ("lambda", -2)], rat(-1, 4))
            .add(&sym_coeff(&[("lambda", -1)], rat(-3, 4)));
        assert_eq!(row2.get(&p2), expected_p2);
        assert_eq!(
            row2.get(&p0),
            sym_coeff(&[("k", 1), ("lambda", -2)], rat(1, 4))
        );
    }

    #[test]
    fn n2_w_flow_matches_displayed_system() {
        let spec = LatticeSpec::uniform_symbolic(1, 2).unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        assert_eq!(basis.len(), 5);
        let system = generate_flow_system(&spec, FlowParameter::GlobalW, &basis).unwrap();

        let p = |dense: &[u32]| idx(&spec, dense);
        let row = |nu: &MultiIndex| system.row(0, system.basis_position(nu).unwrap()).clone();

        // dP(0,0)/dw = P(1,1)
        let r00 = row(&p(&[0, 0]));
        assert_eq!(r00.len(), 1);
        assert_eq!(r00.get(&p(&[1, 1])), Coefficient::one());

        // dP(1,1)/dw = P(2,2)
        let r11 = row(&p(&[1, 1]));
        assert_eq!(r11.len(), 1);
        assert_eq!(r11.get(&p(&[2, 2])), Coefficient::one());

        // dP(2,0)/dw = -(k/l) P(1,1) + (w/l) P(0,2)
        let r20 = row(&p(&[2, 0]));
        assert_eq!(
            r20.get(&p(&[1, 1])),
            sym_coeff(&[("k", 1), ("lambda", -1)], rat_int(-1))
        );
        assert_eq!(
            r20.get(&p(&[0, 2])),
            sym_coeff(&[("w", 1), ("lambda", -1)], rat_int(1))
        );

        // dP(0,2)/dw mirrors it
        let r02 = row(&p(&[0, 2]));
        assert_eq!(
            r02.get(&p(&[2, 0])),
            sym_coeff(&[("w", 1), ("lambda", -1)], rat_int(1))
        );

        // dP(2,2)/dw = ((k^2 + w^2)/l^2) P(1,1) - (k w/l^2)(P(2,0) + P(0,2))
        //              + (w/l^2) P(0,0)
        let r22 = row(&p(&[2, 2]));
        assert_eq!(
            r22.get(&p(&[1, 1])),
            sym_coeff(&[("k", 2), ("lambda", -2)], rat_int(1))
                .add(&sym_coeff(&[("w", 2), ("lambda", -2)], rat_int(1)))
        );
        assert_eq!(
            r22.get(&p(&[2, 0])),
            sym_coeff(&[("k", 1), ("w", 1), ("lambda", -2)], rat_int(-1))
        );
        assert_eq!(
            r22.get(&p(&[0, 0])),
            sym_coeff(&[("w", 1), ("lambda", -2)], rat_int(1))
        );
    }

    #[test]
    fn compressed_n2_system_has_four_rows() {
        let spec = LatticeSpec::uniform_symbolic(1, 2).unwrap();
        let basis = symmetry::orbit_basis(&spec, true).unwrap();
        assert_eq!(basis.len(), 4);
        let system = generate_flow_system(&spec, FlowParameter::GlobalW, &basis).unwrap();
        // the (0,2) row now absorbs the (2,0) image
        let p02 = idx(&spec, &[0, 2]);
        let row = system.row(0, system.basis_position(&p02).unwrap());
        assert_eq!(
            row.get(&p02),
            sym_coeff(&[("w", 1), ("lambda", -1)], rat_int(1))
        );
    }

    #[test]
    fn zero_length_flow_returns_initial_values() {
        let mut spec = LatticeSpec::uniform_symbolic(1, 2).unwrap();
        let s0 = spec.site(&[0]);
        let s1 = spec.site(&[1]);
        spec.set_site_potential(s0, even_pot((1, 1), (1, 1)));
        spec.set_site_potential(s1, even_pot((1, 1), (1, 1)));
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalW, &basis).unwrap();

        let endpoint = integrate_flow(&system, &FlowTarget::Scalar(0.0f64), 1e-10).unwrap();
        let expected =
            initial_primitive_values::<f64>(&spec.with_zero_bonds(), &basis, 1e-13).unwrap();
        for (a, b) in endpoint.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn n1_k_flow_reaches_quadrature_moments() {
        // evolve k: 0 -> 1 at lambda = 1; P(2)/P(0) must match M2/M0 at k=1
        let spec = LatticeSpec::random_field(
            1,
            1,
            PotentialCoefficients::even(Coupling::sym("k"), Coupling::Rational(rat_int(1))),
        )
        .unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalK, &basis).unwrap();
        let endpoint = integrate_flow(&system, &FlowTarget::Scalar(1.0f64), 1e-12).unwrap();

        let pot = even_pot((1, 1), (1, 1));
        let m0 = onsite_moment::<f64>(0, &pot, 1e-13).unwrap();
        let m2 = onsite_moment::<f64>(2, &pot, 1e-13).unwrap();
        let p0 = system.basis_position(&MultiIndex::new()).unwrap();
        let p2 = system.basis_position(&idx(&spec, &[2])).unwrap();
        let ratio = endpoint.values[p2] / endpoint.values[p0];
        assert!(
            (ratio - m2 / m0).abs() < 1e-8,
            "ratio {ratio} vs {}",
            m2 / m0
        );
    }

    #[test]
    fn lambda_flow_rejects_paths_through_zero() {
        let spec = LatticeSpec::random_field(
            1,
            1,
            PotentialCoefficients::even(Coupling::Rational(rat_int(1)), Coupling::sym("lambda")),
        )
        .unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalLambda, &basis).unwrap();
        // default start is zero: singular
        assert!(matches!(
            integrate_flow(&system, &FlowTarget::Scalar(1.0f64), 1e-10),
            Err(Error::SingularFlowPoint(_))
        ));
    }

    #[test]
    fn n1_lambda_flow_between_quartic_points() {
        // evolve lambda: 1 -> 2 at k = 1 and compare with direct moments
        let spec = LatticeSpec::random_field(
            1,
            1,
            PotentialCoefficients::even(Coupling::Rational(rat_int(1)), Coupling::sym("lambda")),
        )
        .unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let mut system = generate_flow_system(&spec, FlowParameter::GlobalLambda, &basis).unwrap();
        system.set_start(rat_int(1));
        let endpoint = integrate_flow(&system, &FlowTarget::Scalar(2.0f64), 1e-12).unwrap();

        let pot = even_pot((1, 1), (2, 1));
        let m0 = onsite_moment::<f64>(0, &pot, 1e-13).unwrap();
        let m2 = onsite_moment::<f64>(2, &pot, 1e-13).unwrap();
        let p0 = system.basis_position(&MultiIndex::new()).unwrap();
        let p2 = system.basis_position(&idx(&spec, &[2])).unwrap();
        assert!((endpoint.values[p0] - m0).abs() < 1e-8);
        assert!((endpoint.values[p2] - m2).abs() < 1e-8);
    }

    #[test]
    fn one_term_rows_of_the_per_bond_system() {
        // dP/dw_i on indices <= 1 at the bond endpoints is exactly one term
        // with unit coefficient
        let spec = LatticeSpec::per_bond_symbolic(1, 3, even_pot((1, 1), (1, 2))).unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::PerBondW, &basis).unwrap();
        let vacuum_row = system.basis_position(&MultiIndex::new()).unwrap();
        for bond in 0..3 {
            let row = system.row(bond, vacuum_row);
            assert_eq!(row.len(), 1);
            let (target, coeff) = row.iter().next().unwrap();
            assert_eq!(target.weight(), 2);
            assert_eq!(coeff, &Coefficient::one());
        }
    }

    #[test]
    fn compatibility_residual_is_exactly_zero_for_n3() {
        let spec = LatticeSpec::per_bond_symbolic(1, 3, even_pot((1, 1), (1, 2))).unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::PerBondW, &basis).unwrap();
        let point = vec![rat(1, 4), rat(1, 3), rat(2, 7)];
        let worst = max_compatibility_residual(&system, &point).unwrap();
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn dependency_closure_from_vacuum_fills_the_basis() {
        let spec = LatticeSpec::uniform_symbolic(1, 2).unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalW, &basis).unwrap();
        let closure = dependency_closure(&[MultiIndex::new()], &system);
        assert_eq!(closure.len(), basis.len());

        // a full-basis seed is a fixed point
        let full = dependency_closure(&basis, &system);
        assert_eq!(full.len(), basis.len());
    }
}

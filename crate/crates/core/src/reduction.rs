//! The lattice Dyson-Schwinger engine.
//!
//! The integration-by-parts identity `<d/dphi_i (Phi^nu e^{-S})> = 0` lets a
//! correlator with `nu_i >= m_anh - 1` be rewritten as a short combination
//! of lower-weight correlators. Iterating over sites drives every correlator
//! into the hypercube of primitive correlators (occupations at most
//! `m_anh - 2`), with coefficients in the exact ring.
//!
//! Two degenerate regimes have their own solvers: the random field (all
//! bonds zero, per-site two-term recursion) and the gaussian theory (all
//! quartic couplings zero, two-step recursion through the inverse of the
//! kinetic matrix).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, MultiIndex, Site};
use crate::ring::{rat_int, Coefficient};

/// A correlator expressed in a basis: map from multi-index to exact
/// coefficient. Zero coefficients are never stored.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct LinearCombination {
    terms: BTreeMap<MultiIndex, Coefficient>,
}

impl LinearCombination {
    pub fn zero() -> Self {
        LinearCombination::default()
    }

    /// The single term `1 * G(nu)`.
    pub fn unit(nu: MultiIndex) -> Self {
        LinearCombination::term(nu, Coefficient::one())
    }

    pub fn term(nu: MultiIndex, coeff: Coefficient) -> Self {
        let mut lc = LinearCombination::zero();
        lc.add_term(nu, coeff);
        lc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, nu: &MultiIndex) -> Coefficient {
        self.terms.get(nu).cloned().unwrap_or_else(Coefficient::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Coefficient)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, nu: MultiIndex, coeff: Coefficient) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(nu) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().add(&coeff);
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
        }
    }

    pub fn add(&self, other: &LinearCombination) -> LinearCombination {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &LinearCombination) {
        for (nu, c) in &other.terms {
            self.add_term(nu.clone(), c.clone());
        }
    }

    pub fn scale(&self, coeff: &Coefficient) -> LinearCombination {
        if coeff.is_zero() {
            return LinearCombination::zero();
        }
        let mut out = LinearCombination::zero();
        for (nu, c) in &self.terms {
            out.add_term(nu.clone(), c.mul(coeff));
        }
        out
    }

    /// Adds `coeff * other` without materializing the scaled copy.
    pub fn add_scaled(&mut self, coeff: &Coefficient, other: &LinearCombination) {
        if coeff.is_zero() {
            return;
        }
        for (nu, c) in &other.terms {
            self.add_term(nu.clone(), c.mul(coeff));
        }
    }

    /// Applies a multi-index map term by term, merging collisions.
    pub fn map_indices(&self, mut f: impl FnMut(&MultiIndex) -> MultiIndex) -> LinearCombination {
        let mut out = LinearCombination::zero();
        for (nu, c) in &self.terms {
            out.add_term(f(nu), c.clone());
        }
        out
    }
}

impl fmt::Display for LinearCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (nu, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})*{nu}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for LinearCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Bookkeeping of one reduction run.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct ReductionTrace {
    /// Number of solve-step expansions performed (memo hits not repeated).
    pub steps: u64,
    /// Distinct reducible multi-indices expanded.
    pub visited: u64,
    /// Largest number of terms produced by a single expansion.
    pub max_branching: usize,
}

/// One application of the solved Dyson-Schwinger identity at `site`.
///
/// For a quartic site this is the `2 + (incident bonds)`-term combination:
/// `(nu_i - 3)/lambda_i` at `nu_i - 4`, `-k_i/lambda_i` at `nu_i - 2`, and
/// one mover `w_ij/lambda_i` at `(nu_i - 3, nu_j + 1)` per incident bond.
/// Nonzero linear and cubic coefficients contribute `-a_i/lambda_i` at
/// `nu_i - 3` and `-g_i/lambda_i` at `nu_i - 1`. For a cubic site all
/// shifts drop by one. The deepest diagonal coefficient vanishes
/// identically at `nu_i = m_anh - 1` and the term is dropped.
pub fn lds_solve_step(
    nu: &MultiIndex,
    site: &Site,
    spec: &LatticeSpec,
) -> Result<LinearCombination> {
    let pot = spec.potential_at(site);
    let m = pot.m_anh();
    let occupation = nu.get(site);
    if m < 3 {
        return Err(Error::VanishingTopCoupling(site.to_string()));
    }
    if occupation < m - 1 {
        return Err(Error::SiteNotReducible {
            site: site.to_string(),
            occupation,
            required: m - 1,
        });
    }
    site_expansion(nu, site, spec)
}

/// The formal operator expansion at `site`, shared by the solve step and the
/// elementary-operator algebra. Callers guarantee `m_anh >= 3` at the site.
fn site_expansion(nu: &MultiIndex, site: &Site, spec: &LatticeSpec) -> Result<LinearCombination> {
    let pot = spec.potential_at(site);
    let m = pot.m_anh();
    let top = pot.power_coupling(m);
    let inv_top = top
        .inverse_coefficient()
        .ok_or_else(|| Error::VanishingTopCoupling(site.to_string()))?;
    let occupation = i64::from(nu.get(site));
    let mut out = LinearCombination::zero();

    let shift_or_underflow = |delta: i64| -> Result<MultiIndex> {
        nu.shifted(site, delta)
            .ok_or_else(|| Error::OccupationUnderflow {
                site: site.to_string(),
                occupation: occupation as u32,
                shift: delta,
            })
    };

    // deepest diagonal: (nu_i - (m-1)) / c_m at nu_i - m
    let depth_factor = occupation - i64::from(m - 1);
    if depth_factor != 0 {
        let coeff = inv_top.scale(&rat_int(depth_factor));
        out.add_term(shift_or_underflow(-i64::from(m))?, coeff);
    }

    // lower potential powers p < m: -c_p / c_m at nu_i - (m - p)
    for p in 1..m {
        let coupling = pot.power_coupling(p);
        if coupling.is_zero() {
            continue;
        }
        let coeff = coupling.to_coefficient().mul(&inv_top).neg();
        out.add_term(shift_or_underflow(-i64::from(m - p))?, coeff);
    }

    // movers: +w_ij / c_m at (nu_i - (m-1), nu_j + 1) per incident bond
    for (neighbor, w) in spec.bonds_at(site) {
        if w.is_zero() {
            continue;
        }
        let coeff = w.to_coefficient().mul(&inv_top);
        let target = shift_or_underflow(-i64::from(m - 1))?
            .shifted(&neighbor, 1)
            .expect("raising cannot underflow");
        out.add_term(target, coeff);
    }

    Ok(out)
}

/// True when some site of `nu` can be lowered by the solve step.
fn reducible_site(nu: &MultiIndex, spec: &LatticeSpec) -> Option<Site> {
    nu.iter()
        .find(|(site, occ)| *occ >= spec.potential_at(site).m_anh() - 1)
        .map(|(site, _)| site.clone())
}

/// Memoizing reduction engine over one lattice.
///
/// The memo key is the raw multi-index, so the engine stays valid for
/// site-dependent couplings; symmetry compression is a separate pre-pass.
/// A shared engine can be reused across calls (flow-system generation hits
/// the same subproblems from many rows).
pub struct Reducer<'a> {
    spec: &'a LatticeSpec,
    memo: HashMap<MultiIndex, LinearCombination>,
    memo_cap: Option<usize>,
}

impl<'a> Reducer<'a> {
    pub fn new(spec: &'a LatticeSpec) -> Self {
        Reducer {
            spec,
            memo: HashMap::new(),
            memo_cap: None,
        }
    }

    /// Caps the number of memo entries; reductions stay correct beyond the
    /// cap, they just recompute.
    pub fn with_memo_cap(spec: &'a LatticeSpec, cap: usize) -> Self {
        Reducer {
            spec,
            memo: HashMap::new(),
            memo_cap: Some(cap),
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.spec
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// Reduces `nu` to a combination of primitive correlators, always
    /// expanding the lexicographically smallest reducible site.
    pub fn reduce(&mut self, nu: &MultiIndex) -> Result<(LinearCombination, ReductionTrace)> {
        let mut trace = ReductionTrace::default();
        let lc = self.reduce_inner(nu, &mut trace, &mut |sites| sites[0].clone())?;
        Ok((lc, trace))
    }

    /// Reduction with a caller-chosen site-selection strategy; `pick`
    /// receives the reducible sites in ascending order. Used to exercise
    /// path independence.
    pub fn reduce_with_strategy(
        &mut self,
        nu: &MultiIndex,
        pick: &mut dyn FnMut(&[Site]) -> Site,
    ) -> Result<(LinearCombination, ReductionTrace)> {
        let mut trace = ReductionTrace::default();
        let lc = self.reduce_inner(nu, &mut trace, pick)?;
        Ok((lc, trace))
    }

    fn reduce_inner(
        &mut self,
        nu: &MultiIndex,
        trace: &mut ReductionTrace,
        pick: &mut dyn FnMut(&[Site]) -> Site,
    ) -> Result<LinearCombination> {
        if reducible_site(nu, self.spec).is_none() {
            return Ok(LinearCombination::unit(nu.clone()));
        }
        if let Some(hit) = self.memo.get(nu) {
            return Ok(hit.clone());
        }
        let reducible: Vec<Site> = nu
            .iter()
            .filter(|(site, occ)| *occ >= self.spec.potential_at(site).m_anh() - 1)
            .map(|(site, _)| site.clone())
            .collect();
        let site = pick(&reducible);
        let step = lds_solve_step(nu, &site, self.spec)?;
        trace.steps += 1;
        trace.visited += 1;
        trace.max_branching = trace.max_branching.max(step.len());
        let mut acc = LinearCombination::zero();
        for (target, coeff) in step.iter() {
            let reduced = self.reduce_inner(target, trace, pick)?;
            acc.add_scaled(coeff, &reduced);
        }
        if self.memo_cap.map(|cap| self.memo.len() < cap).unwrap_or(true) {
            self.memo.insert(nu.clone(), acc.clone());
        }
        Ok(acc)
    }
}

/// Reduces an arbitrary correlator to the primitive basis.
pub fn reduce_to_primitive(
    nu: &MultiIndex,
    spec: &LatticeSpec,
) -> Result<(LinearCombination, ReductionTrace)> {
    Reducer::new(spec).reduce(nu)
}

/// Random-field reduction: requires every bond coupling to vanish, then the
/// per-site recursion factorizes across sites.
pub fn reduce_random_field(nu: &MultiIndex, spec: &LatticeSpec) -> Result<LinearCombination> {
    for ((a, b), w) in spec.bonds() {
        if !w.is_zero() {
            return Err(Error::NonzeroBondCoupling(format!("{a}-{b}")));
        }
    }
    Ok(reduce_to_primitive(nu, spec)?.0)
}

/// Gaussian reduction: with all quartic couplings zero and an even numeric
/// action, every correlator is an exact rational multiple of the vacuum.
///
/// Returns `alpha(nu)` with `G(nu) = alpha(nu) * G(0,...,0)`; odd weight
/// gives zero. Coefficients come from the inverse of the kinetic matrix
/// `T` (diagonal `-k_i`, bond entries `+w_ij`); a singular `T` is the
/// massless-zero-mode error.
pub fn gaussian_reduce(nu: &MultiIndex, spec: &LatticeSpec) -> Result<BigRational> {
    if !spec.is_numeric() {
        return Err(Error::NumericCouplingsRequired("gaussian reduction".into()));
    }
    for site in spec.sites() {
        let pot = spec.potential_at(site);
        if !pot.lambda.is_zero() || !pot.g.is_zero() || !pot.a.is_zero() {
            return Err(Error::InvalidLattice(
                "gaussian reduction needs a purely quadratic even action".into(),
            ));
        }
    }
    let sites = spec.sites().to_vec();
    let n = sites.len();
    let site_pos: BTreeMap<&Site, usize> = sites.iter().enumerate().map(|(i, s)| (s, i)).collect();

    let mut t = vec![vec![BigRational::zero(); n]; n];
    for (i, site) in sites.iter().enumerate() {
        t[i][i] = -spec.potential_at(site).k.as_rational().unwrap().clone();
    }
    for ((a, b), w) in spec.bonds() {
        let (ia, ib) = (site_pos[a], site_pos[b]);
        let w = w.as_rational().unwrap().clone();
        t[ia][ib] = w.clone();
        t[ib][ia] = w;
    }
    let t_inv = invert_rational_matrix(&t).ok_or(Error::SingularKineticOperator)?;

    let mut memo: HashMap<MultiIndex, BigRational> = HashMap::new();
    gaussian_alpha(nu, &sites, &site_pos, &t_inv, &mut memo)
}

fn gaussian_alpha(
    nu: &MultiIndex,
    sites: &[Site],
    site_pos: &BTreeMap<&Site, usize>,
    t_inv: &[Vec<BigRational>],
    memo: &mut HashMap<MultiIndex, BigRational>,
) -> Result<BigRational> {
    if nu.weight() == 0 {
        return Ok(BigRational::one());
    }
    if nu.weight() % 2 == 1 {
        return Ok(BigRational::zero());
    }
    if let Some(hit) = memo.get(nu) {
        return Ok(hit.clone());
    }
    let (site, _) = nu.iter().next().expect("nonzero weight has an entry");
    let site = site.clone();
    let i = site_pos[&site];
    let mu = nu.shifted(&site, -1).expect("occupation is positive");
    let mut total = BigRational::zero();
    for (j, other) in sites.iter().enumerate() {
        let occ = mu.get(other);
        if occ == 0 {
            continue;
        }
        let target = mu.shifted(other, -1).expect("occupation is positive");
        let sub = gaussian_alpha(&target, sites, site_pos, t_inv, memo)?;
        total += &t_inv[i][j] * rat_int(-i64::from(occ)) * sub;
    }
    memo.insert(nu.clone(), total.clone());
    Ok(total)
}

fn invert_rational_matrix(t: &[Vec<BigRational>]) -> Option<Vec<Vec<BigRational>>> {
    let n = t.len();
    let mut a: Vec<Vec<BigRational>> = t.to_vec();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= &pivot;
            inv[col][j] /= &pivot;
        }
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone();
            for j in 0..n {
                let av = &a[col][j] * &factor;
                a[row][j] -= av;
                let iv = &inv[col][j] * &factor;
                inv[row][j] -= iv;
            }
        }
    }
    Some(inv)
}

/// The four elementary reduction operators of the quartic theory.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ElementaryOp {
    /// `(1/lambda_i) i^{-4} (occupation - 3)`
    N,
    /// `-(k_i/lambda_i) i^{-2}`
    D,
    /// `(w_{i-1,i}/lambda_i) (i-1)^+ i^{-3}` (left mover along axis 0)
    L,
    /// `(w_{i,i+1}/lambda_i) i^{-3} (i+1)^+` (right mover along axis 0)
    R,
}

/// Applies one elementary operator to every term of `x`.
///
/// Terms whose coefficient vanishes are dropped before any shift, so
/// `N` applied at occupation 3 never underflows; a nonzero coefficient
/// shifting an occupation negative is an error. Movers use the bond along
/// axis 0; on a bondless axis they annihilate the term.
pub fn apply_elementary_operator(
    op: ElementaryOp,
    site: &Site,
    x: &LinearCombination,
    spec: &LatticeSpec,
) -> Result<LinearCombination> {
    let pot = spec.potential_at(site);
    if pot.m_anh() != 4 {
        return Err(Error::VanishingTopCoupling(site.to_string()));
    }
    let inv_lambda = pot
        .lambda
        .inverse_coefficient()
        .ok_or_else(|| Error::VanishingTopCoupling(site.to_string()))?;
    let mut out = LinearCombination::zero();
    for (nu, c) in x.iter() {
        let occupation = i64::from(nu.get(site));
        let (coeff, target) = match op {
            ElementaryOp::N => {
                let factor = occupation - 3;
                if factor == 0 {
                    continue;
                }
                (inv_lambda.scale(&rat_int(factor)), shift(nu, site, -4)?)
            }
            ElementaryOp::D => (
                pot.k.to_coefficient().mul(&inv_lambda).neg(),
                shift(nu, site, -2)?,
            ),
            ElementaryOp::L | ElementaryOp::R => {
                let delta = if op == ElementaryOp::L { -1 } else { 1 };
                let neighbor = site.shifted(0, delta, spec.extent());
                let w = match spec.bond_coupling(site, &neighbor) {
                    Some(w) if !w.is_zero() => w,
                    _ => continue,
                };
                let target = shift(nu, site, -3)?
                    .shifted(&neighbor, 1)
                    .expect("raising cannot underflow");
                (w.to_coefficient().mul(&inv_lambda), target)
            }
        };
        out.add_term(target, c.mul(&coeff));
    }
    Ok(out)
}

fn shift(nu: &MultiIndex, site: &Site, delta: i64) -> Result<MultiIndex> {
    nu.shifted(site, delta)
        .ok_or_else(|| Error::OccupationUnderflow {
            site: site.to_string(),
            occupation: nu.get(site),
            shift: delta,
        })
}

/// The full solve operator `O_i` as a linear map, with one mover per
/// distinct incident bond (so the two movers of a two-site lattice do not
/// double-count their shared bond).
pub fn apply_solve_operator(
    site: &Site,
    x: &LinearCombination,
    spec: &LatticeSpec,
) -> Result<LinearCombination> {
    let mut out = LinearCombination::zero();
    for (nu, c) in x.iter() {
        let expansion = site_expansion(nu, site, spec)?;
        out.add_scaled(c, &expansion);
    }
    Ok(out)
}

/// Checks `[O_i, O_j] = 0` on one sample by expanding both orders exactly.
pub fn check_operator_commutation(
    i: &Site,
    j: &Site,
    sample: &MultiIndex,
    spec: &LatticeSpec,
) -> Result<bool> {
    if i == j {
        return Ok(true);
    }
    let start = LinearCombination::unit(sample.clone());
    let ij = apply_solve_operator(i, &apply_solve_operator(j, &start, spec)?, spec)?;
    let ji = apply_solve_operator(j, &apply_solve_operator(i, &start, spec)?, spec)?;
    Ok(ij == ji)
}

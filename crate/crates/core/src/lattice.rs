//! Lattices, couplings and multi-indices.
//!
//! A lattice is a periodic hypercubic grid of `extent` points per axis in
//! `dimension` axes. Every site carries the coefficients of its on-site
//! potential and every unordered nearest-neighbor pair carries a bond
//! coupling. Couplings are either named symbols or exact rationals; mixed
//! specs are allowed (e.g. numeric potential, symbolic bonds for flow
//! generation).

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::ring::{rat_int, Coefficient, Symbol};

/// Lattice point with periodic coordinates, normalized to `0..extent`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site {
    coords: Vec<i64>,
}

impl Site {
    /// Normalizes each coordinate modulo the axis extent.
    pub fn new(coords: &[i64], extent: u32) -> Site {
        let n = i64::from(extent);
        Site {
            coords: coords.iter().map(|&c| c.rem_euclid(n)).collect(),
        }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    /// The site one step away along `axis` (periodic).
    pub fn shifted(&self, axis: usize, delta: i64, extent: u32) -> Site {
        let mut coords = self.coords.clone();
        coords[axis] += delta;
        Site::new(&coords, extent)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Sparse multi-index: map from site to positive occupation number.
///
/// Zero occupations are never stored, so two multi-indices describing the
/// same correlator compare equal regardless of construction order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MultiIndex {
    entries: BTreeMap<Site, u32>,
}

/// Norm summary of a multi-index in index space.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Norms {
    pub inf_norm: u32,
    pub one_norm: u64,
    /// One-distance to the hypercube of quartic primitives (edge two).
    pub distance_to_hc: u64,
}

impl MultiIndex {
    pub fn new() -> MultiIndex {
        MultiIndex::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Site, u32)>>(pairs: I) -> MultiIndex {
        let mut idx = MultiIndex::new();
        for (site, occ) in pairs {
            idx.set(site, occ);
        }
        idx
    }

    pub fn get(&self, site: &Site) -> u32 {
        self.entries.get(site).copied().unwrap_or(0)
    }

    pub fn set(&mut self, site: Site, occ: u32) {
        if occ == 0 {
            self.entries.remove(&site);
        } else {
            self.entries.insert(site, occ);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, u32)> {
        self.entries.iter().map(|(s, &o)| (s, o))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of all occupation numbers.
    pub fn weight(&self) -> u64 {
        self.entries.values().map(|&o| u64::from(o)).sum()
    }

    /// Number of sites with nonzero occupation.
    pub fn tau(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn norms(&self) -> Norms {
        let inf_norm = self.entries.values().copied().max().unwrap_or(0);
        let one_norm = self.weight();
        let distance_to_hc = self
            .entries
            .values()
            .map(|&o| u64::from(o.saturating_sub(2)))
            .sum();
        Norms {
            inf_norm,
            one_norm,
            distance_to_hc,
        }
    }

    /// True iff every occupation is at most `m_anh - 2`.
    pub fn is_primitive(&self, m_anh: u32) -> bool {
        let cap = m_anh.saturating_sub(2);
        self.entries.values().all(|&o| o <= cap)
    }

    /// The multi-index with the occupation of `site` shifted by `delta`.
    /// Returns `None` when the shift would drive the occupation negative.
    pub fn shifted(&self, site: &Site, delta: i64) -> Option<MultiIndex> {
        let occ = i64::from(self.get(site));
        let new = occ + delta;
        if new < 0 {
            return None;
        }
        let mut out = self.clone();
        out.set(site.clone(), new as u32);
        Some(out)
    }

    /// Dense occupation tuple in row-major site order.
    pub fn dense(&self, spec: &LatticeSpec) -> Vec<u32> {
        spec.sites().iter().map(|s| self.get(s)).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (site, occ)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{site}:{occ}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A coupling constant: a named symbol or an exact rational.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coupling {
    Symbol(Symbol),
    Rational(BigRational),
}

impl Coupling {
    pub fn sym(name: &str) -> Coupling {
        Coupling::Symbol(Symbol::new(name))
    }

    pub fn int(n: i64) -> Coupling {
        Coupling::Rational(rat_int(n))
    }

    pub fn zero() -> Coupling {
        Coupling::Rational(BigRational::zero())
    }

    /// Symbols are assumed nonzero; only the rational zero is zero.
    pub fn is_zero(&self) -> bool {
        match self {
            Coupling::Symbol(_) => false,
            Coupling::Rational(q) => q.is_zero(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Coupling::Rational(_))
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Coupling::Rational(q) => Some(q),
            Coupling::Symbol(_) => None,
        }
    }

    pub fn to_coefficient(&self) -> Coefficient {
        match self {
            Coupling::Symbol(s) => Coefficient::symbol(s.clone()),
            Coupling::Rational(q) => Coefficient::from_rational(q.clone()),
        }
    }

    /// Reciprocal as a ring element; errors on a zero rational.
    pub fn inverse_coefficient(&self) -> Option<Coefficient> {
        match self {
            Coupling::Symbol(s) => Some(Coefficient::symbol_pow(s.clone(), -1)),
            Coupling::Rational(q) => {
                if q.is_zero() {
                    None
                } else {
                    Some(Coefficient::from_rational(q.recip()))
                }
            }
        }
    }

    /// Replaces a symbol by its assigned rational value, if any.
    pub fn substitute(&self, assignment: &BTreeMap<Symbol, BigRational>) -> Coupling {
        match self {
            Coupling::Symbol(s) => match assignment.get(s) {
                Some(q) => Coupling::Rational(q.clone()),
                None => self.clone(),
            },
            Coupling::Rational(_) => self.clone(),
        }
    }

    pub fn to_f64(&self) -> Option<f64> {
        self.as_rational().and_then(|q| q.to_f64())
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Symbol(s) => write!(f, "{s}"),
            Coupling::Rational(q) => write!(f, "{q}"),
        }
    }
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Coefficients of the on-site potential
/// `a*phi + k*phi^2/2 + g*phi^3/3 + lambda*phi^4/4`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PotentialCoefficients {
    pub a: Coupling,
    pub k: Coupling,
    pub g: Coupling,
    pub lambda: Coupling,
}

impl PotentialCoefficients {
    pub fn new(a: Coupling, k: Coupling, g: Coupling, lambda: Coupling) -> Result<Self> {
        let pot = PotentialCoefficients { a, k, g, lambda };
        if pot.m_anh() < 2 {
            return Err(Error::InvalidLattice(
                "potential needs a nonzero coefficient of phi^2, phi^3 or phi^4".into(),
            ));
        }
        Ok(pot)
    }

    /// Even potential `k*phi^2/2 + lambda*phi^4/4`.
    pub fn even(k: Coupling, lambda: Coupling) -> Self {
        PotentialCoefficients {
            a: Coupling::zero(),
            k,
            g: Coupling::zero(),
            lambda,
        }
    }

    /// Pure quadratic potential.
    pub fn gaussian(k: Coupling) -> Self {
        PotentialCoefficients::even(k, Coupling::zero())
    }

    /// Largest power with a nonzero coefficient.
    pub fn m_anh(&self) -> u32 {
        if !self.lambda.is_zero() {
            4
        } else if !self.g.is_zero() {
            3
        } else if !self.k.is_zero() {
            2
        } else {
            1
        }
    }

    /// Coefficient of `phi^p` in the potential gradient basis (p = 1..4).
    pub fn power_coupling(&self, p: u32) -> &Coupling {
        match p {
            1 => &self.a,
            2 => &self.k,
            3 => &self.g,
            4 => &self.lambda,
            _ => panic!("potential power out of range"),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.a.is_numeric() && self.k.is_numeric() && self.g.is_numeric() && self.lambda.is_numeric()
    }

    pub fn is_even(&self) -> bool {
        self.a.is_zero() && self.g.is_zero()
    }

    pub fn substitute(&self, assignment: &BTreeMap<Symbol, BigRational>) -> Self {
        PotentialCoefficients {
            a: self.a.substitute(assignment),
            k: self.k.substitute(assignment),
            g: self.g.substitute(assignment),
            lambda: self.lambda.substitute(assignment),
        }
    }
}

impl fmt::Debug for PotentialCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pot(a={}, k={}, g={}, lambda={})",
            self.a, self.k, self.g, self.lambda
        )
    }
}

/// Site potentials: one shared record or one record per site.
#[derive(Clone, PartialEq, Eq, Debug)]
enum SitePotential {
    Uniform(PotentialCoefficients),
    PerSite(BTreeMap<Site, PotentialCoefficients>),
}

/// Periodic hypercubic lattice with couplings.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LatticeSpec {
    dimension: usize,
    extent: u32,
    potential: SitePotential,
    bonds: BTreeMap<(Site, Site), Coupling>,
    sites: Vec<Site>,
}

impl LatticeSpec {
    /// Uniform potential and uniform nearest-neighbor bond coupling.
    ///
    /// An axis of extent 1 produces no bonds along that axis; an axis of
    /// extent 2 produces a single collapsed bond per transverse position.
    pub fn uniform(
        dimension: usize,
        extent: u32,
        potential: PotentialCoefficients,
        bond: Coupling,
    ) -> Result<LatticeSpec> {
        let mut spec = LatticeSpec::random_field(dimension, extent, potential)?;
        if !bond.is_zero() {
            for pair in spec.nearest_neighbor_pairs() {
                spec.bonds.insert(pair, bond.clone());
            }
        }
        Ok(spec)
    }

    /// No bonds at all: independently fluctuating sites.
    pub fn random_field(
        dimension: usize,
        extent: u32,
        potential: PotentialCoefficients,
    ) -> Result<LatticeSpec> {
        if dimension == 0 {
            return Err(Error::InvalidLattice("dimension must be at least 1".into()));
        }
        if extent == 0 {
            return Err(Error::InvalidLattice("extent must be at least 1".into()));
        }
        let site_count = (u64::from(extent)).checked_pow(dimension as u32);
        match site_count {
            Some(n) if n <= 1 << 24 => {}
            _ => return Err(Error::InvalidLattice("too many lattice sites".into())),
        }
        let sites = enumerate_sites(dimension, extent);
        Ok(LatticeSpec {
            dimension,
            extent,
            potential: SitePotential::Uniform(potential),
            bonds: BTreeMap::new(),
            sites,
        })
    }

    /// Uniform symbolic couplings `k`, `w`, `lambda`.
    pub fn uniform_symbolic(dimension: usize, extent: u32) -> Result<LatticeSpec> {
        LatticeSpec::uniform(
            dimension,
            extent,
            PotentialCoefficients::even(Coupling::sym("k"), Coupling::sym("lambda")),
            Coupling::sym("w"),
        )
    }

    /// Uniform potential with one symbol `w{index}` per bond, in bond order.
    pub fn per_bond_symbolic(
        dimension: usize,
        extent: u32,
        potential: PotentialCoefficients,
    ) -> Result<LatticeSpec> {
        let mut spec = LatticeSpec::random_field(dimension, extent, potential)?;
        let pairs = spec.nearest_neighbor_pairs();
        for (idx, pair) in pairs.into_iter().enumerate() {
            spec.bonds.insert(pair, Coupling::sym(&format!("w{idx}")));
        }
        Ok(spec)
    }

    /// Gaussian d=1 lattice whose correlators reproduce the DFT propagator
    /// of mass `m` at lattice spacing `a`.
    ///
    /// Derived from the nearest-neighbor discretization of the continuum
    /// action: `k = (2 + (m a)^2)/a` and `w = 1/a` per directed term of the
    /// periodic sum. For extent 2 the two directed terms share one unordered
    /// pair, so the collapsed bond carries `2/a`; for extent 1 the directed
    /// term is a self-pairing and shifts the diagonal to `k = m^2 a`.
    pub fn free_field(extent: u32, m: BigRational, a: BigRational) -> Result<LatticeSpec> {
        if a.is_zero() {
            return Err(Error::InvalidLattice("lattice spacing must be nonzero".into()));
        }
        let ma2 = (&m * &a) * (&m * &a);
        let k = match extent {
            1 => &m * &m * &a,
            _ => (rat_int(2) + &ma2) / &a,
        };
        let w = match extent {
            2 => rat_int(2) / &a,
            _ => a.recip(),
        };
        LatticeSpec::uniform(
            1,
            extent,
            PotentialCoefficients::gaussian(Coupling::Rational(k)),
            if extent == 1 {
                Coupling::zero()
            } else {
                Coupling::Rational(w)
            },
        )
    }

    /// Overrides the coupling of one existing bond.
    pub fn set_bond(&mut self, a: &Site, b: &Site, coupling: Coupling) -> Result<()> {
        let key = ordered_pair(a.clone(), b.clone());
        if !self.bonds.contains_key(&key) && !self.nearest_neighbor_pairs().contains(&key) {
            return Err(Error::InvalidLattice(format!(
                "{} and {} are not nearest neighbors",
                key.0, key.1
            )));
        }
        if coupling.is_zero() {
            self.bonds.remove(&key);
        } else {
            self.bonds.insert(key, coupling);
        }
        Ok(())
    }

    /// Overrides the potential of one site.
    pub fn set_site_potential(&mut self, site: Site, pot: PotentialCoefficients) {
        let map = match &mut self.potential {
            SitePotential::PerSite(map) => map,
            SitePotential::Uniform(shared) => {
                let shared = shared.clone();
                let map: BTreeMap<Site, PotentialCoefficients> = self
                    .sites
                    .iter()
                    .map(|s| (s.clone(), shared.clone()))
                    .collect();
                self.potential = SitePotential::PerSite(map);
                match &mut self.potential {
                    SitePotential::PerSite(map) => map,
                    SitePotential::Uniform(_) => unreachable!(),
                }
            }
        };
        map.insert(site, pot);
    }

    fn nearest_neighbor_pairs(&self) -> Vec<(Site, Site)> {
        let mut pairs = std::collections::BTreeSet::new();
        if self.extent == 1 {
            return Vec::new();
        }
        for site in &self.sites {
            for axis in 0..self.dimension {
                let neighbor = site.shifted(axis, 1, self.extent);
                if neighbor == *site {
                    continue;
                }
                pairs.insert(ordered_pair(site.clone(), neighbor));
            }
        }
        pairs.into_iter().collect()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn extent(&self) -> u32 {
        self.extent
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    /// All sites in row-major order.
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, coords: &[i64]) -> Site {
        Site::new(coords, self.extent)
    }

    pub fn potential_at(&self, site: &Site) -> &PotentialCoefficients {
        match &self.potential {
            SitePotential::Uniform(p) => p,
            SitePotential::PerSite(map) => map
                .get(site)
                .unwrap_or_else(|| panic!("no potential stored for {site}")),
        }
    }

    pub fn bonds(&self) -> impl Iterator<Item = (&(Site, Site), &Coupling)> {
        self.bonds.iter()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn bond_coupling(&self, a: &Site, b: &Site) -> Option<&Coupling> {
        self.bonds.get(&ordered_pair(a.clone(), b.clone()))
    }

    /// Bonds incident to `site` as `(other endpoint, coupling)` pairs.
    pub fn bonds_at(&self, site: &Site) -> Vec<(Site, &Coupling)> {
        let mut out = Vec::new();
        for ((a, b), w) in &self.bonds {
            if a == site {
                out.push((b.clone(), w));
            } else if b == site {
                out.push((a.clone(), w));
            }
        }
        out
    }

    /// Largest anharmonicity over all sites.
    pub fn m_anh(&self) -> u32 {
        match &self.potential {
            SitePotential::Uniform(p) => p.m_anh(),
            SitePotential::PerSite(map) => map.values().map(|p| p.m_anh()).max().unwrap_or(2),
        }
    }

    /// True when every coupling is an exact rational.
    pub fn is_numeric(&self) -> bool {
        let pot_numeric = match &self.potential {
            SitePotential::Uniform(p) => p.is_numeric(),
            SitePotential::PerSite(map) => map.values().all(|p| p.is_numeric()),
        };
        pot_numeric && self.bonds.values().all(|w| w.is_numeric())
    }

    /// True when potential and bond couplings do not depend on the site.
    pub fn is_uniform(&self) -> bool {
        let pot_uniform = match &self.potential {
            SitePotential::Uniform(_) => true,
            SitePotential::PerSite(map) => {
                let mut values = map.values();
                match values.next() {
                    Some(first) => values.all(|p| p == first),
                    None => true,
                }
            }
        };
        let mut bond_values = self.bonds.values();
        let bonds_uniform = match bond_values.next() {
            Some(first) => bond_values.all(|w| w == first),
            None => true,
        };
        pot_uniform && bonds_uniform
    }

    /// True when every site potential has `a = g = 0`.
    pub fn is_even(&self) -> bool {
        match &self.potential {
            SitePotential::Uniform(p) => p.is_even(),
            SitePotential::PerSite(map) => map.values().all(|p| p.is_even()),
        }
    }

    pub fn has_nonzero_bond(&self) -> bool {
        self.bonds.values().any(|w| !w.is_zero())
    }

    /// Replaces symbolic couplings by assigned rational values.
    pub fn substitute(&self, assignment: &BTreeMap<Symbol, BigRational>) -> LatticeSpec {
        let potential = match &self.potential {
            SitePotential::Uniform(p) => SitePotential::Uniform(p.substitute(assignment)),
            SitePotential::PerSite(map) => SitePotential::PerSite(
                map.iter()
                    .map(|(s, p)| (s.clone(), p.substitute(assignment)))
                    .collect(),
            ),
        };
        let bonds = self
            .bonds
            .iter()
            .filter_map(|(pair, w)| {
                let w = w.substitute(assignment);
                if w.is_zero() {
                    None
                } else {
                    Some((pair.clone(), w))
                }
            })
            .collect();
        LatticeSpec {
            dimension: self.dimension,
            extent: self.extent,
            potential,
            bonds,
            sites: self.sites.clone(),
        }
    }

    /// This lattice with every bond coupling removed (the random-field point).
    pub fn with_zero_bonds(&self) -> LatticeSpec {
        let mut out = self.clone();
        out.bonds.clear();
        out
    }
}

fn ordered_pair(a: Site, b: Site) -> (Site, Site) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn enumerate_sites(dimension: usize, extent: u32) -> Vec<Site> {
    let mut sites = Vec::new();
    let mut coords = vec![0i64; dimension];
    loop {
        sites.push(Site::new(&coords, extent));
        let mut axis = dimension;
        loop {
            if axis == 0 {
                return sites;
            }
            axis -= 1;
            coords[axis] += 1;
            if coords[axis] < i64::from(extent) {
                break;
            }
            coords[axis] = 0;
        }
    }
}

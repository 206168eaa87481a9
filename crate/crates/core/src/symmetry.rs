//! Lattice symmetry equations: parity, the dihedral group of the circular
//! lattice and its hypercubic generalization, orbit canonicalization and
//! primitive-basis counting.
//!
//! In d dimensions the group is generated by per-axis rotations, per-axis
//! reflections and axis permutations. For d = 1 this is the dihedral group
//! with 2N elements; for d >= 2 it may be a proper subgroup of the full
//! lattice symmetry group, so orbit counts are upper bounds on the basis
//! compression.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, MultiIndex, Site};

/// Element of the lattice point group: an axis permutation followed by
/// per-axis reflections and rotations.
///
/// The action on a site `x` is `y[a] = rotation[a] + s[a] * x[perm[a]]`
/// (mod extent), with `s[a] = -1` when `reflection[a]` is set.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GroupElement {
    extent: u32,
    axis_permutation: Vec<usize>,
    reflection: Vec<bool>,
    rotation: Vec<i64>,
}

impl GroupElement {
    pub fn identity(dimension: usize, extent: u32) -> GroupElement {
        GroupElement {
            extent,
            axis_permutation: (0..dimension).collect(),
            reflection: vec![false; dimension],
            rotation: vec![0; dimension],
        }
    }

    pub fn rotation(dimension: usize, extent: u32, axis: usize, shift: i64) -> GroupElement {
        let mut g = GroupElement::identity(dimension, extent);
        g.rotation[axis] = shift.rem_euclid(i64::from(extent));
        g
    }

    pub fn reflection(dimension: usize, extent: u32, axis: usize) -> GroupElement {
        let mut g = GroupElement::identity(dimension, extent);
        g.reflection[axis] = true;
        g
    }

    pub fn dimension(&self) -> usize {
        self.axis_permutation.len()
    }

    pub fn apply_site(&self, site: &Site) -> Site {
        let x = site.coords();
        let d = self.dimension();
        let mut coords = vec![0i64; d];
        for a in 0..d {
            let v = x[self.axis_permutation[a]];
            let v = if self.reflection[a] { -v } else { v };
            coords[a] = self.rotation[a] + v;
        }
        Site::new(&coords, self.extent)
    }

    /// Group law: `(self.compose(other)).apply = self.apply ∘ other.apply`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.extent, other.extent, "mismatched extents");
        let d = self.dimension();
        let n = i64::from(self.extent);
        let mut axis_permutation = vec![0usize; d];
        let mut reflection = vec![false; d];
        let mut rotation = vec![0i64; d];
        for a in 0..d {
            // self maps axis p = self.perm[a]; other feeds axis p from
            // other.perm[p], so the composite permutation chains them.
            let p = self.axis_permutation[a];
            axis_permutation[a] = other.axis_permutation[p];
            reflection[a] = self.reflection[a] ^ other.reflection[p];
            let s = if self.reflection[a] { -1 } else { 1 };
            rotation[a] = (self.rotation[a] + s * other.rotation[p]).rem_euclid(n);
        }
        GroupElement {
            extent: self.extent,
            axis_permutation,
            reflection,
            rotation,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        let d = self.dimension();
        let n = i64::from(self.extent);
        let mut axis_permutation = vec![0usize; d];
        let mut reflection = vec![false; d];
        let mut rotation = vec![0i64; d];
        for a in 0..d {
            let p = self.axis_permutation[a];
            axis_permutation[p] = a;
            reflection[p] = self.reflection[a];
            let s = if self.reflection[a] { -1 } else { 1 };
            rotation[p] = (-s * self.rotation[a]).rem_euclid(n);
        }
        GroupElement {
            extent: self.extent,
            axis_permutation,
            reflection,
            rotation,
        }
    }
}

/// Every element of the generated point group: `extent^d * 2^d * d!` tuples.
pub fn group_elements(dimension: usize, extent: u32) -> Vec<GroupElement> {
    let mut perms = Vec::new();
    permutations((0..dimension).collect(), &mut Vec::new(), &mut perms);
    let mut out = Vec::new();
    for perm in &perms {
        for refl_mask in 0..(1u32 << dimension) {
            let reflection: Vec<bool> = (0..dimension).map(|a| refl_mask >> a & 1 == 1).collect();
            let mut rotation = vec![0i64; dimension];
            loop {
                out.push(GroupElement {
                    extent,
                    axis_permutation: perm.clone(),
                    reflection: reflection.clone(),
                    rotation: rotation.clone(),
                });
                let mut axis = dimension;
                let done = loop {
                    if axis == 0 {
                        break true;
                    }
                    axis -= 1;
                    rotation[axis] += 1;
                    if rotation[axis] < i64::from(extent) {
                        break false;
                    }
                    rotation[axis] = 0;
                };
                if done {
                    break;
                }
            }
        }
    }
    out
}

fn permutations(pool: Vec<usize>, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pool.is_empty() {
        out.push(prefix.clone());
        return;
    }
    for (i, &x) in pool.iter().enumerate() {
        let mut rest = pool.clone();
        rest.remove(i);
        prefix.push(x);
        permutations(rest, prefix, out);
        prefix.pop();
    }
}

/// Moves each occupation along with its site: `(g.nu)_{g.i} = nu_i`.
pub fn apply_group(g: &GroupElement, nu: &MultiIndex) -> MultiIndex {
    MultiIndex::from_pairs(nu.iter().map(|(site, occ)| (g.apply_site(site), occ)))
}

/// Canonical orbit representative and orbit size.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OrbitSummary {
    pub canonical: MultiIndex,
    pub orbit_size: usize,
}

/// Canonicalizes under the full point group when couplings are site-uniform;
/// with site-dependent couplings the symmetry group is trivial and the input
/// is its own representative.
pub fn canonicalize(nu: &MultiIndex, spec: &LatticeSpec) -> OrbitSummary {
    if !spec.is_uniform() {
        return OrbitSummary {
            canonical: nu.clone(),
            orbit_size: 1,
        };
    }
    let mut best: Option<(Vec<u32>, MultiIndex)> = None;
    let mut seen = BTreeSet::new();
    for g in group_elements(spec.dimension(), spec.extent()) {
        let image = apply_group(&g, nu);
        let dense = image.dense(spec);
        if best
            .as_ref()
            .map(|(best_dense, _)| dense < *best_dense)
            .unwrap_or(true)
        {
            best = Some((dense.clone(), image.clone()));
        }
        seen.insert(dense);
    }
    let (_, canonical) = best.expect("group is never empty");
    OrbitSummary {
        canonical,
        orbit_size: seen.len(),
    }
}

/// True iff the correlator vanishes by the field-sign symmetry.
///
/// Requires an even action; a nonzero linear or cubic coefficient breaks
/// parity (symbolic odd coefficients count as nonzero).
pub fn is_parity_zero(nu: &MultiIndex, spec: &LatticeSpec) -> Result<bool> {
    for site in spec.sites() {
        let pot = spec.potential_at(site);
        if !pot.a.is_zero() || !pot.g.is_zero() {
            return Err(Error::ParityNotASymmetry(site.to_string()));
        }
    }
    Ok(nu.weight() % 2 == 1)
}

/// Counting level for the primitive basis.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CountLevel {
    /// Raw count `(m_anh - 1)^(N^d)`.
    None,
    /// Parity-surviving count (closed form).
    Parity,
    /// Exact orbit count of parity-surviving primitives, by enumeration.
    Full,
}

const ENUMERATION_LIMIT: u128 = 20_000_000;

/// Number of primitive correlators on an `extent^dimension` lattice.
pub fn count_primitive_basis(
    extent: u32,
    dimension: usize,
    m_anh: u32,
    level: CountLevel,
) -> Result<u128> {
    assert!((2..=4).contains(&m_anh), "m_anh out of range");
    let sites = (extent as u128).checked_pow(dimension as u32);
    let sites = match sites {
        Some(s) if s <= u128::from(u32::MAX) => s as u32,
        _ => return Err(Error::EnumerationTooLarge(u128::MAX)),
    };
    let range = u128::from(m_anh - 1);
    let raw = checked_pow(range, sites).ok_or(Error::EnumerationTooLarge(u128::MAX))?;
    match level {
        CountLevel::None => Ok(raw),
        CountLevel::Parity => {
            // Per-site imbalance between even and odd occupations is 1 when
            // the range {0..m_anh-2} has odd length, else 0.
            let imbalance = u128::from((m_anh - 1) % 2);
            Ok((raw + imbalance) / 2)
        }
        CountLevel::Full => {
            if raw > ENUMERATION_LIMIT {
                return Err(Error::EnumerationTooLarge(raw));
            }
            let spec = LatticeSpec::uniform_symbolic(dimension, extent)?;
            let group = group_elements(dimension, extent);
            let mut canonicals: HashSet<Vec<u32>> = HashSet::new();
            for dense in enumerate_primitives(sites as usize, m_anh) {
                if dense.iter().map(|&o| u64::from(o)).sum::<u64>() % 2 == 1 {
                    continue;
                }
                let nu = dense_to_index(&dense, &spec);
                let mut best = dense.clone();
                for g in &group {
                    let image = apply_group(g, &nu).dense(&spec);
                    if image < best {
                        best = image;
                    }
                }
                canonicals.insert(best);
            }
            Ok(canonicals.len() as u128)
        }
    }
}

/// All primitive multi-indices, parity-filtered for even potentials, ordered
/// by (weight, dense tuple). This is the default flow basis.
pub fn primitive_basis(spec: &LatticeSpec, parity_filter: bool) -> Result<Vec<MultiIndex>> {
    let m_anh = spec.m_anh();
    let sites = spec.site_count();
    let raw = checked_pow(u128::from(m_anh - 1), sites as u32)
        .filter(|&r| r <= ENUMERATION_LIMIT)
        .ok_or(Error::EnumerationTooLarge(u128::MAX))?;
    let _ = raw;
    let mut basis: Vec<MultiIndex> = enumerate_primitives(sites, m_anh)
        .into_iter()
        .filter(|dense| {
            !parity_filter || dense.iter().map(|&o| u64::from(o)).sum::<u64>() % 2 == 0
        })
        .map(|dense| dense_to_index(&dense, spec))
        .collect();
    basis.sort_by_key(|nu| (nu.weight(), nu.dense(spec)));
    Ok(basis)
}

/// Canonical orbit representatives of the (parity-filtered) primitive basis,
/// for site-uniform couplings.
pub fn orbit_basis(spec: &LatticeSpec, parity_filter: bool) -> Result<Vec<MultiIndex>> {
    let full = primitive_basis(spec, parity_filter)?;
    let mut reps: Vec<MultiIndex> = Vec::new();
    let mut seen: BTreeSet<MultiIndex> = BTreeSet::new();
    for nu in full {
        let canonical = canonicalize(&nu, spec).canonical;
        if seen.insert(canonical.clone()) {
            reps.push(canonical);
        }
    }
    reps.sort_by_key(|nu| (nu.weight(), nu.dense(spec)));
    Ok(reps)
}

fn enumerate_primitives(sites: usize, m_anh: u32) -> Vec<Vec<u32>> {
    let cap = m_anh - 2;
    let mut out = Vec::new();
    let mut dense = vec![0u32; sites];
    loop {
        out.push(dense.clone());
        let mut axis = sites;
        let done = loop {
            if axis == 0 {
                break true;
            }
            axis -= 1;
            dense[axis] += 1;
            if dense[axis] <= cap {
                break false;
            }
            dense[axis] = 0;
        };
        if done {
            return out;
        }
    }
}

fn dense_to_index(dense: &[u32], spec: &LatticeSpec) -> MultiIndex {
    MultiIndex::from_pairs(
        spec.sites()
            .iter()
            .zip(dense)
            .filter(|(_, &occ)| occ > 0)
            .map(|(site, &occ)| (site.clone(), occ)),
    )
}

fn checked_pow(base: u128, exp: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Stabilizer size of `nu`, for orbit-stabilizer checks.
pub fn stabilizer_size(nu: &MultiIndex, spec: &LatticeSpec) -> usize {
    group_elements(spec.dimension(), spec.extent())
        .iter()
        .filter(|g| apply_group(g, nu) == *nu)
        .count()
}

/// Order of the generated point group.
pub fn group_order(dimension: usize, extent: u32) -> usize {
    group_elements(dimension, extent).len()
}

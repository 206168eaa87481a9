//! Exact scalar ring of the reduction: rational-coefficient Laurent
//! polynomials in the coupling symbols.
//!
//! Every reduction coefficient is a finite sum of terms
//! `q * s1^e1 * s2^e2 * ...` with `q` an exact rational and integer
//! exponents `ei` (negative powers arise from the repeated `1/lambda_i`
//! factors of the reduction). Zero terms are never stored, so equality
//! of two coefficients is structural equality.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Interned name of a coupling constant.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exact rational from an integer pair.
pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational from an integer.
pub fn rat_int(num: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(num))
}

/// Product of coupling symbols raised to (possibly negative) integer powers.
///
/// Zero exponents are never stored; the empty monomial is the unit.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial {
    exponents: BTreeMap<Symbol, i32>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn symbol(sym: Symbol) -> Self {
        Monomial::symbol_pow(sym, 1)
    }

    pub fn symbol_pow(sym: Symbol, exp: i32) -> Self {
        let mut exponents = BTreeMap::new();
        if exp != 0 {
            exponents.insert(sym, exp);
        }
        Monomial { exponents }
    }

    pub fn is_one(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, sym: &Symbol) -> i32 {
        self.exponents.get(sym).copied().unwrap_or(0)
    }

    pub fn exponents(&self) -> impl Iterator<Item = (&Symbol, i32)> {
        self.exponents.iter().map(|(s, &e)| (s, e))
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut exponents = self.exponents.clone();
        for (sym, &exp) in &other.exponents {
            let entry = exponents.entry(sym.clone()).or_insert(0);
            *entry += exp;
            if *entry == 0 {
                exponents.remove(sym);
            }
        }
        Monomial { exponents }
    }

    /// Monomial with the exponent of `sym` lowered by one; used by the
    /// symbolic derivative.
    fn lower(&self, sym: &Symbol) -> Monomial {
        let mut exponents = self.exponents.clone();
        match exponents.entry(sym.clone()) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() -= 1;
                if *e.get() == 0 {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(-1);
            }
        }
        Monomial { exponents }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for (sym, exp) in &self.exponents {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if *exp == 1 {
                write!(f, "{sym}")?;
            } else {
                write!(f, "{sym}^{exp}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Element of the exact reduction ring: map from monomial to nonzero rational.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Coefficient {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient::default()
    }

    pub fn one() -> Self {
        Coefficient::from_rational(BigRational::one())
    }

    pub fn from_rational(q: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !q.is_zero() {
            terms.insert(Monomial::one(), q);
        }
        Coefficient { terms }
    }

    pub fn from_int(n: i64) -> Self {
        Coefficient::from_rational(rat_int(n))
    }

    pub fn symbol(sym: Symbol) -> Self {
        Coefficient::symbol_pow(sym, 1)
    }

    pub fn symbol_pow(sym: Symbol, exp: i32) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::symbol_pow(sym, exp), BigRational::one());
        Coefficient { terms }
    }

    pub fn term(monomial: Monomial, q: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !q.is_zero() {
            terms.insert(monomial, q);
        }
        Coefficient { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    /// The rational value of a constant coefficient, if it is one.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.terms.is_empty() {
            return Some(BigRational::zero());
        }
        if self.terms.len() == 1 {
            let (m, q) = self.terms.iter().next().unwrap();
            if m.is_one() {
                return Some(q.clone());
            }
        }
        None
    }

    fn add_term(&mut self, monomial: Monomial, q: &BigRational) {
        if q.is_zero() {
            return;
        }
        match self.terms.entry(monomial) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += q;
                if e.get().is_zero() {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(q.clone());
            }
        }
    }

    pub fn add(&self, other: &Coefficient) -> Coefficient {
        let mut out = self.clone();
        for (m, q) in &other.terms {
            out.add_term(m.clone(), q);
        }
        out
    }

    pub fn sub(&self, other: &Coefficient) -> Coefficient {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Coefficient {
        let terms = self
            .terms
            .iter()
            .map(|(m, q)| (m.clone(), -q.clone()))
            .collect();
        Coefficient { terms }
    }

    pub fn mul(&self, other: &Coefficient) -> Coefficient {
        let mut out = Coefficient::zero();
        for (ma, qa) in &self.terms {
            for (mb, qb) in &other.terms {
                out.add_term(ma.mul(mb), &(qa * qb));
            }
        }
        out
    }

    pub fn scale(&self, q: &BigRational) -> Coefficient {
        if q.is_zero() {
            return Coefficient::zero();
        }
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| (m.clone(), c * q))
            .collect();
        Coefficient { terms }
    }

    /// Exact evaluation under a full symbol assignment.
    ///
    /// Every symbol occurring in the coefficient must be assigned; symbols
    /// carrying a negative exponent must be assigned a nonzero value.
    pub fn eval(&self, assignment: &BTreeMap<Symbol, BigRational>) -> Result<BigRational> {
        let mut total = BigRational::zero();
        for (m, q) in &self.terms {
            let mut value = q.clone();
            for (sym, exp) in m.exponents() {
                let v = assignment
                    .get(sym)
                    .ok_or_else(|| Error::UnassignedSymbol(sym.name().to_owned()))?;
                if v.is_zero() {
                    if exp < 0 {
                        return Err(Error::DivisionByZeroCoupling(sym.name().to_owned()));
                    }
                    value = BigRational::zero();
                    continue;
                }
                value *= rational_pow(v, exp);
            }
            total += value;
        }
        Ok(total)
    }

    /// Approximate evaluation; symbols must still all be assigned.
    pub fn eval_f64(&self, assignment: &BTreeMap<Symbol, f64>) -> Result<f64> {
        let mut total = 0.0;
        for (m, q) in &self.terms {
            let mut value = q.to_f64().unwrap_or(f64::NAN);
            for (sym, exp) in m.exponents() {
                let v = *assignment
                    .get(sym)
                    .ok_or_else(|| Error::UnassignedSymbol(sym.name().to_owned()))?;
                if v == 0.0 && exp < 0 {
                    return Err(Error::DivisionByZeroCoupling(sym.name().to_owned()));
                }
                value *= v.powi(exp);
            }
            total += value;
        }
        Ok(total)
    }

    /// Exact derivative with respect to one coupling symbol.
    pub fn derivative(&self, sym: &Symbol) -> Coefficient {
        let mut out = Coefficient::zero();
        for (m, q) in &self.terms {
            let exp = m.exponent(sym);
            if exp == 0 {
                continue;
            }
            out.add_term(m.lower(sym), &(q * rat_int(exp as i64)));
        }
        out
    }
}

fn rational_pow(base: &BigRational, exp: i32) -> BigRational {
    if exp == 0 {
        return BigRational::one();
    }
    let mut acc = BigRational::one();
    let positive = base.clone();
    for _ in 0..exp.unsigned_abs() {
        acc *= &positive;
    }
    if exp < 0 {
        acc.recip()
    } else {
        acc
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, q) in &self.terms {
            if first {
                if q.is_negative() {
                    write!(f, "-")?;
                }
            } else if q.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            first = false;
            let qa = q.abs();
            if m.is_one() {
                write!(f, "{qa}")?;
            } else if qa.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{qa}*{m}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Add for &Coefficient {
    type Output = Coefficient;
    fn add(self, rhs: &Coefficient) -> Coefficient {
        Coefficient::add(self, rhs)
    }
}

impl Sub for &Coefficient {
    type Output = Coefficient;
    fn sub(self, rhs: &Coefficient) -> Coefficient {
        Coefficient::sub(self, rhs)
    }
}

impl Mul for &Coefficient {
    type Output = Coefficient;
    fn mul(self, rhs: &Coefficient) -> Coefficient {
        Coefficient::mul(self, rhs)
    }
}

impl Neg for &Coefficient {
    type Output = Coefficient;
    fn neg(self) -> Coefficient {
        Coefficient::neg(self)
    }
}

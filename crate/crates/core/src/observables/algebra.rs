//! Symbolic operator words and the products they induce on observables.
//!
//! The Heisenberg operator of a field monomial is the time-ordered word of
//! `Q(site)` letters (larger sites to the left). Products of such words are
//! brought back into time order with the equal-distance commutator
//!
//! ```text
//! Q(s) Q(s+1) = Q(s+1) Q(s) + eps/Z
//! ```
//!
//! Letters further apart do not have a scalar commutator; words that would
//! need one are rejected with [`Error::UnsupportedBasis`].

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;

use super::coeff::Coeff;
use super::expr::{FieldMonomial, FieldPolynomial, ObservableExpr};
use crate::error::{Error, Result};

/// Linear combination of operator words in `Q(site)` letters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordPolynomial {
    terms: BTreeMap<Vec<i64>, Coeff>,
}

impl WordPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn word(letters: Vec<i64>, c: Coeff) -> Self {
        let mut out = Self::zero();
        out.add_term(letters, c);
        out
    }

    /// Time-ordered words of an observable.
    pub fn time_ordered(a: &ObservableExpr) -> Self {
        let mut out = Self::zero();
        for (m, c) in a.polynomial().terms() {
            out.add_term(m.letters(), c.clone());
        }
        out
    }

    fn add_term(&mut self, letters: Vec<i64>, c: Coeff) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(letters.clone()).or_default();
        *slot = &*slot + &c;
        if slot.is_zero() {
            self.terms.remove(&letters);
        }
    }

    pub fn add(&self, other: &WordPolynomial) -> WordPolynomial {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Coeff) -> WordPolynomial {
        let mut out = Self::zero();
        for (w, c0) in &self.terms {
            out.add_term(w.clone(), c0 * c);
        }
        out
    }

    /// Concatenation product, not reordered.
    pub fn mul(&self, other: &WordPolynomial) -> WordPolynomial {
        let mut out = Self::zero();
        for (w1, c1) in &self.terms {
            for (w2, c2) in &other.terms {
                let mut w = w1.clone();
                w.extend_from_slice(w2);
                out.add_term(w, c1 * c2);
            }
        }
        out
    }

    /// Rewrites every word into time order.
    pub fn normal_ordered(&self) -> Result<WordPolynomial> {
        let mut out = Self::zero();
        for (w, c) in &self.terms {
            order_word(w.clone(), c.clone(), &mut out)?;
        }
        Ok(out)
    }

    pub fn is_time_ordered(&self) -> bool {
        self.terms.keys().all(|w| w.windows(2).all(|p| p[0] >= p[1]))
    }

    /// Reads time-ordered words as field monomials.
    pub fn to_observable(&self) -> Result<ObservableExpr> {
        let mut p = FieldPolynomial::zero();
        for (w, c) in &self.terms {
            if w.windows(2).any(|x| x[0] < x[1]) {
                return Err(Error::UnsupportedBasis(format!("word {w:?} is not time ordered")));
            }
            p.add_term(FieldMonomial::from_powers(w.iter().map(|&s| (s, 1))), c.clone());
        }
        Ok(ObservableExpr::from_polynomial(&p))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Coeff)> {
        self.terms.iter()
    }
}

fn eps_over_z() -> Coeff {
    Coeff::monomial(Rational64::from_integer(1), 1, -1)
}

fn order_word(w: Vec<i64>, c: Coeff, out: &mut WordPolynomial) -> Result<()> {
    let Some(i) = w.windows(2).position(|p| p[0] < p[1]) else {
        out.add_term(w, c);
        return Ok(());
    };
    let (lo, hi) = (w[i], w[i + 1]);
    if hi - lo != 1 {
        return Err(Error::UnsupportedBasis(format!(
            "commutator of Q({lo}) and Q({hi}) is not a c-number"
        )));
    }
    let mut swapped = w.clone();
    swapped.swap(i, i + 1);
    order_word(swapped, c.clone(), out)?;
    let mut contracted = w;
    contracted.drain(i..i + 2);
    order_word(contracted, &c * &eps_over_z(), out)
}

/// Letter of an operator monomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpLetter {
    Q(i64),
    /// Transported derivative operator, `-Z (Q(s+1) - Q(s)) / eps`.
    R(i64),
}

impl OpLetter {
    pub fn site(&self) -> i64 {
        match *self {
            OpLetter::Q(s) | OpLetter::R(s) => s,
        }
    }

    fn words(&self) -> WordPolynomial {
        match *self {
            OpLetter::Q(s) => WordPolynomial::word(vec![s], Coeff::one()),
            OpLetter::R(s) => {
                let c = Coeff::monomial(Rational64::from_integer(-1), -1, 1);
                WordPolynomial::word(vec![s + 1], c.clone()).add(&WordPolynomial::word(vec![s], -c))
            }
        }
    }
}

impl fmt::Display for OpLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpLetter::Q(s) => write!(f, "Q({s})"),
            OpLetter::R(s) => write!(f, "R({s})"),
        }
    }
}

/// Formal ordered product of `Q` and `R` letters with a coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorMonomial {
    pub coeff: Coeff,
    pub letters: Vec<OpLetter>,
}

impl OperatorMonomial {
    pub fn new(coeff: Coeff, letters: Vec<OpLetter>) -> Self {
        Self { coeff, letters }
    }
}

/// The standard representative of a sum of operator monomials.
///
/// Every monomial must be time ordered by site, and the letters at one site
/// must form `Q^p`, `R`, `R Q`, `Q R` or `R R`. `Q R` is rewritten as
/// `R Q - 1` first. Any other monomial is rejected.
pub fn standard_representative(op: &[OperatorMonomial]) -> Result<ObservableExpr> {
    let mut words = WordPolynomial::zero();
    for m in op {
        check_basis(&m.letters)?;
        let mut w = WordPolynomial::word(Vec::new(), m.coeff.clone());
        for l in &m.letters {
            w = w.mul(&l.words());
        }
        words = words.add(&w);
    }
    words.normal_ordered()?.to_observable()
}

fn check_basis(letters: &[OpLetter]) -> Result<()> {
    let describe = || letters.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
    let mut groups: Vec<(i64, Vec<OpLetter>)> = Vec::new();
    for &l in letters {
        match groups.last_mut() {
            Some((s, g)) if *s == l.site() => g.push(l),
            Some((s, _)) if *s < l.site() => {
                return Err(Error::UnsupportedBasis(format!("{} is not time ordered", describe())))
            }
            _ => groups.push((l.site(), vec![l])),
        }
    }
    for (_, g) in &groups {
        let r_count = g.iter().filter(|l| matches!(l, OpLetter::R(_))).count();
        let allowed = matches!((r_count, g.len()), (0, _) | (1, 1) | (1, 2) | (2, 2));
        if !allowed {
            return Err(Error::UnsupportedBasis(format!("{} is outside the supported basis", describe())));
        }
    }
    Ok(())
}

/// `F[A_H B_H]`: the observable whose Heisenberg operator is the product of
/// the operators of `a` and `b`.
pub fn quantum_product(a: &ObservableExpr, b: &ObservableExpr) -> Result<ObservableExpr> {
    WordPolynomial::time_ordered(a)
        .mul(&WordPolynomial::time_ordered(b))
        .normal_ordered()?
        .to_observable()
}

/// `a o b - b o a`.
pub fn commutator_observable(a: &ObservableExpr, b: &ObservableExpr) -> Result<ObservableExpr> {
    Ok(quantum_product(a, b)?.sub(&quantum_product(b, a)?))
}

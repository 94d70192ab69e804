use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;

use super::coeff::Coeff;
use crate::error::{Error, Result};
use crate::lattice::{FieldGrid, LatticeConfiguration, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorKind {
    /// `phi(site)^p`
    Pow(u32),
    /// `(phi(site+1) - phi(site)) / eps`
    DFwd,
    /// `(phi(site+1) - phi(site-1)) / (2 eps)`
    DSym,
}

impl FactorKind {
    fn rank(&self) -> (u8, u32) {
        match *self {
            FactorKind::Pow(p) => (0, p),
            FactorKind::DFwd => (1, 0),
            FactorKind::DSym => (2, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Factor {
    pub site: i64,
    pub kind: FactorKind,
}

impl Factor {
    pub fn pow(site: i64, p: u32) -> Self {
        Self { site, kind: FactorKind::Pow(p) }
    }

    pub fn dfwd(site: i64) -> Self {
        Self { site, kind: FactorKind::DFwd }
    }

    pub fn dsym(site: i64) -> Self {
        Self { site, kind: FactorKind::DSym }
    }

    /// Sites the factor reads, as an inclusive range.
    pub fn support(&self) -> (i64, i64) {
        match self.kind {
            FactorKind::Pow(_) => (self.site, self.site),
            FactorKind::DFwd => (self.site, self.site + 1),
            FactorKind::DSym => (self.site - 1, self.site + 1),
        }
    }

    fn eval(&self, phi: impl Fn(i64) -> f64, eps: f64) -> f64 {
        let s = self.site;
        match self.kind {
            FactorKind::Pow(p) => phi(s).powi(p as i32),
            FactorKind::DFwd => (phi(s + 1) - phi(s)) / eps,
            FactorKind::DSym => (phi(s + 1) - phi(s - 1)) / (2.0 * eps),
        }
    }

    /// The factor as a polynomial in field values.
    fn expand(&self) -> FieldPolynomial {
        let s = self.site;
        let inv_eps = |num: i64, den: i64| Coeff::monomial(Rational64::new(num, den), -1, 0);
        match self.kind {
            FactorKind::Pow(p) => FieldPolynomial::monomial(FieldMonomial::power(s, p), Coeff::one()),
            FactorKind::DFwd => {
                let mut out = FieldPolynomial::monomial(FieldMonomial::power(s + 1, 1), inv_eps(1, 1));
                out.add_term(FieldMonomial::power(s, 1), inv_eps(-1, 1));
                out
            }
            FactorKind::DSym => {
                let mut out = FieldPolynomial::monomial(FieldMonomial::power(s + 1, 1), inv_eps(1, 2));
                out.add_term(FieldMonomial::power(s - 1, 1), inv_eps(-1, 2));
                out
            }
        }
    }
}

impl Ord for Factor {
    /// Larger sites first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.site.cmp(&self.site).then(self.kind.rank().cmp(&other.kind.rank()))
    }
}

impl PartialOrd for Factor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FactorKind::Pow(1) => write!(f, "phi({})", self.site),
            FactorKind::Pow(p) => write!(f, "phi({})^{p}", self.site),
            FactorKind::DFwd => write!(f, "dfwd({})", self.site),
            FactorKind::DSym => write!(f, "dsym({})", self.site),
        }
    }
}

/// Product of powers of field values at distinct sites, larger sites first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldMonomial(Vec<(i64, u32)>);

impl FieldMonomial {
    pub fn one() -> Self {
        Self(Vec::new())
    }

    pub fn power(site: i64, p: u32) -> Self {
        if p == 0 {
            Self::one()
        } else {
            Self(vec![(site, p)])
        }
    }

    /// Builds a monomial from arbitrary `(site, power)` pairs.
    pub fn from_powers(powers: impl IntoIterator<Item = (i64, u32)>) -> Self {
        let mut merged: BTreeMap<i64, u32> = BTreeMap::new();
        for (s, p) in powers {
            *merged.entry(s).or_default() += p;
        }
        Self(merged.into_iter().rev().filter(|&(_, p)| p > 0).collect())
    }

    /// `(site, power)` pairs, larger sites first.
    pub fn powers(&self) -> &[(i64, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, p)| p).sum()
    }

    pub fn mul(&self, other: &FieldMonomial) -> FieldMonomial {
        Self::from_powers(self.0.iter().chain(other.0.iter()).copied())
    }

    /// Site letters of the time-ordered operator word, leftmost first.
    pub fn letters(&self) -> Vec<i64> {
        self.0.iter().flat_map(|&(s, p)| std::iter::repeat_n(s, p as usize)).collect()
    }

    pub fn min_site(&self) -> Option<i64> {
        self.0.last().map(|&(s, _)| s)
    }

    pub fn max_site(&self) -> Option<i64> {
        self.0.first().map(|&(s, _)| s)
    }
}

/// Canonical form of a local observable: a polynomial in field values with
/// exact coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FieldPolynomial {
    terms: BTreeMap<FieldMonomial, Coeff>,
}

impl FieldPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(m: FieldMonomial, c: Coeff) -> Self {
        let mut out = Self::zero();
        out.add_term(m, c);
        out
    }

    pub fn add_term(&mut self, m: FieldMonomial, c: Coeff) {
        let slot = self.terms.entry(m.clone()).or_default();
        *slot = &*slot + &c;
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &FieldPolynomial) -> FieldPolynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn mul(&self, other: &FieldPolynomial) -> FieldPolynomial {
        let mut out = FieldPolynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &Coeff) -> FieldPolynomial {
        let mut out = FieldPolynomial::zero();
        for (m, c0) in &self.terms {
            out.add_term(m.clone(), c0 * c);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FieldMonomial, &Coeff)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// One product of factors with its coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub coeff: Coeff,
    /// Sorted by site, larger sites first.
    pub factors: Vec<Factor>,
}

/// A local observable: a linear combination of products of field powers and
/// discrete derivatives.
///
/// Two expressions compare equal when they define the same functional of the
/// field, so `dfwd(0)` equals `(phi(1) - phi(0)) / eps`.
#[derive(Clone, Debug, Default)]
pub struct ObservableExpr {
    terms: Vec<Term>,
}

impl ObservableExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Coeff) -> Self {
        Self::from_terms(vec![Term { coeff: c, factors: Vec::new() }])
    }

    pub fn one() -> Self {
        Self::constant(Coeff::one())
    }

    pub fn factor(f: Factor) -> Self {
        Self::from_terms(vec![Term { coeff: Coeff::one(), factors: vec![f] }])
    }

    pub fn phi(site: i64) -> Self {
        Self::factor(Factor::pow(site, 1))
    }

    pub fn pow(site: i64, p: u32) -> Self {
        Self::factor(Factor::pow(site, p))
    }

    pub fn dfwd(site: i64) -> Self {
        Self::factor(Factor::dfwd(site))
    }

    pub fn dsym(site: i64) -> Self {
        Self::factor(Factor::dsym(site))
    }

    /// Canonicalizes: factors sorted with larger sites first, like-site
    /// powers merged, like terms collected.
    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut collected: Vec<Term> = Vec::new();
        for t in terms {
            let factors = canonical_factors(t.factors);
            if let Some(existing) = collected.iter_mut().find(|e| e.factors == factors) {
                existing.coeff = &existing.coeff + &t.coeff;
            } else {
                collected.push(Term { coeff: t.coeff, factors });
            }
        }
        collected.retain(|t| !t.coeff.is_zero());
        collected.sort_by(|a, b| a.factors.cmp(&b.factors));
        Self { terms: collected }
    }

    /// Observable whose field polynomial is `p`, written with field powers only.
    pub fn from_polynomial(p: &FieldPolynomial) -> Self {
        Self::from_terms(
            p.terms()
                .map(|(m, c)| Term {
                    coeff: c.clone(),
                    factors: m.powers().iter().map(|&(s, k)| Factor::pow(s, k)).collect(),
                })
                .collect(),
        )
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.polynomial().is_zero()
    }

    pub fn add(&self, other: &ObservableExpr) -> ObservableExpr {
        Self::from_terms(self.terms.iter().chain(other.terms.iter()).cloned().collect())
    }

    pub fn sub(&self, other: &ObservableExpr) -> ObservableExpr {
        self.add(&other.scale(&Coeff::int(-1)))
    }

    pub fn scale(&self, c: &Coeff) -> ObservableExpr {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term { coeff: &t.coeff * c, factors: t.factors.clone() })
                .collect(),
        )
    }

    /// Expansion into field values.
    pub fn polynomial(&self) -> FieldPolynomial {
        let mut out = FieldPolynomial::zero();
        for t in &self.terms {
            let mut p = FieldPolynomial::monomial(FieldMonomial::one(), t.coeff.clone());
            for f in &t.factors {
                p = p.mul(&f.expand());
            }
            out = out.add(&p);
        }
        out
    }

    /// Inclusive range of sites read by the observable, `None` for constants.
    pub fn support(&self) -> Option<(i64, i64)> {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(Factor::support))
            .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
    }

    /// Requires the support to avoid both boundary sites of a window of
    /// `window_len` sites.
    pub fn check_support(&self, window_len: usize) -> Result<()> {
        match self.support() {
            Some((lo, hi)) if lo < 1 || hi > window_len as i64 - 2 => {
                Err(Error::SupportViolation { lo, hi, len: window_len })
            }
            _ => Ok(()),
        }
    }
}

impl PartialEq for ObservableExpr {
    fn eq(&self, other: &Self) -> bool {
        self.polynomial() == other.polynomial()
    }
}

impl fmt::Display for ObservableExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, t) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({})", t.coeff)?;
            for x in &t.factors {
                write!(f, "*{x}")?;
            }
        }
        Ok(())
    }
}

fn canonical_factors(mut factors: Vec<Factor>) -> Vec<Factor> {
    factors.sort();
    let mut out: Vec<Factor> = Vec::with_capacity(factors.len());
    for f in factors {
        if let FactorKind::Pow(p) = f.kind {
            if p == 0 {
                continue;
            }
            if let Some(last) = out.last_mut() {
                if let (true, FactorKind::Pow(q)) = (last.site == f.site, last.kind) {
                    last.kind = FactorKind::Pow(p + q);
                    continue;
                }
            }
        }
        out.push(f);
    }
    out
}

/// Pointwise product of two observables.
pub fn classical_product(a: &ObservableExpr, b: &ObservableExpr) -> ObservableExpr {
    let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
    for x in &a.terms {
        for y in &b.terms {
            let mut factors = x.factors.clone();
            factors.extend_from_slice(&y.factors);
            terms.push(Term { coeff: &x.coeff * &y.coeff, factors });
        }
    }
    ObservableExpr::from_terms(terms)
}

/// Value of the observable on one field configuration.
pub fn eval_on_config(
    a: &ObservableExpr,
    config: &LatticeConfiguration,
    grid: &FieldGrid,
    params: &ModelParams,
) -> Result<f64> {
    if let Some((lo, hi)) = a.support() {
        if !(config.contains(lo) && config.contains(hi)) {
            return Err(Error::SupportViolation { lo, hi, len: config.len() });
        }
    }
    let eps = params.epsilon();
    let z = params.uniform_z();
    let phi = |s: i64| config.phi(s as usize, grid);
    let mut total = 0.0;
    for t in &a.terms {
        let mut v = t.coeff.value(eps, z)?;
        for f in &t.factors {
            v *= f.eval(phi, eps);
        }
        total += v;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Potential;
    use proptest::prelude::*;

    fn params(eps: f64) -> ModelParams {
        ModelParams::uniform(eps, Potential::harmonic(1.0), 1.0, 3).unwrap()
    }

    #[test]
    fn eval_examples() {
        let g = FieldGrid::symmetric(5, 1.0).unwrap();
        // indices 0..5 -> -1, -0.5, 0, 0.5, 1
        let c = LatticeConfiguration::new(0, vec![0, 3, 2, 4, 2], &g).unwrap();
        let p = params(0.5);
        assert_eq!(eval_on_config(&ObservableExpr::phi(1), &c, &g, &p).unwrap(), 0.5);
        assert_eq!(eval_on_config(&ObservableExpr::dfwd(2), &c, &g, &p).unwrap(), 2.0);
        let c = LatticeConfiguration::new(0, vec![2, 0, 2, 4], &g).unwrap();
        let d = ObservableExpr::dsym(2);
        let d2 = classical_product(&d, &d);
        assert_eq!(eval_on_config(&d2, &c, &g, &params(1.0)).unwrap(), 1.0);
        assert!(matches!(
            eval_on_config(&ObservableExpr::dsym(0), &c, &g, &p),
            Err(Error::SupportViolation { lo: -1, hi: 1, len: 4 })
        ));
    }

    #[test]
    fn canonical_form() {
        let a = classical_product(&ObservableExpr::phi(1), &ObservableExpr::phi(3));
        assert_eq!(a.terms()[0].factors, vec![Factor::pow(3, 1), Factor::pow(1, 1)]);
        let sq = classical_product(&ObservableExpr::phi(2), &ObservableExpr::phi(2));
        assert_eq!(sq.terms()[0].factors, vec![Factor::pow(2, 2)]);
        assert_eq!(sq, ObservableExpr::pow(2, 2));
        let d = ObservableExpr::dfwd(1);
        let by_hand = ObservableExpr::phi(2)
            .sub(&ObservableExpr::phi(1))
            .scale(&Coeff::monomial(Rational64::from_integer(1), -1, 0));
        assert_eq!(d, by_hand);
        assert_ne!(d, ObservableExpr::dsym(1));
        assert!(ObservableExpr::phi(1).sub(&ObservableExpr::phi(1)).is_zero());
    }

    #[test]
    fn support_rules() {
        assert_eq!(ObservableExpr::dsym(2).support(), Some((1, 3)));
        assert_eq!(ObservableExpr::one().support(), None);
        assert!(ObservableExpr::dsym(2).check_support(5).is_ok());
        assert!(ObservableExpr::dsym(1).check_support(5).is_err());
        assert!(ObservableExpr::dfwd(2).check_support(4).is_err());
        assert!(ObservableExpr::phi(0).check_support(4).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = ObservableExpr> {
        let factor = (1i64..5, 0usize..4).prop_map(|(s, k)| match k {
            0 => ObservableExpr::phi(s),
            1 => ObservableExpr::pow(s, 2),
            2 => ObservableExpr::dfwd(s),
            _ => ObservableExpr::dsym(s),
        });
        prop::collection::vec((factor, -3i64..4), 1..4).prop_map(|fs| {
            fs.into_iter()
                .fold(ObservableExpr::zero(), |acc, (f, c)| acc.add(&f.scale(&Coeff::int(c))))
        })
    }

    proptest! {
        #[test]
        fn classical_product_is_commutative_and_pointwise(
            a in arb_expr(),
            b in arb_expr(),
            idx in prop::collection::vec(0usize..7, 7),
        ) {
            prop_assert_eq!(classical_product(&a, &b), classical_product(&b, &a));
            let g = FieldGrid::symmetric(7, 1.5).unwrap();
            let c = LatticeConfiguration::new(0, idx, &g).unwrap();
            let p = params(0.4);
            let ab = eval_on_config(&classical_product(&a, &b), &c, &g, &p).unwrap();
            let prod = eval_on_config(&a, &c, &g, &p).unwrap() * eval_on_config(&b, &c, &g, &p).unwrap();
            prop_assert!((ab - prod).abs() <= 1e-9 * prod.abs().max(1.0));
            // the expansion defines the same functional
            let flat = ObservableExpr::from_polynomial(&a.polynomial());
            let x = eval_on_config(&flat, &c, &g, &p).unwrap();
            let y = eval_on_config(&a, &c, &g, &p).unwrap();
            prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }
}

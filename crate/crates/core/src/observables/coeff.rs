use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Rational64;

use crate::error::{Error, Result};

/// Exact coefficient: a finite sum of rational multiples of `eps^a Z^b`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coeff {
    /// `(eps power, Z power) -> rational factor`, zero entries removed.
    terms: BTreeMap<(i32, i32), Rational64>,
}

impl Coeff {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::int(1)
    }

    pub fn int(n: i64) -> Self {
        Self::monomial(Rational64::from_integer(n), 0, 0)
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Self::monomial(Rational64::new(num, den), 0, 0)
    }

    /// `r * eps^eps_pow * Z^z_pow`
    pub fn monomial(r: Rational64, eps_pow: i32, z_pow: i32) -> Self {
        let mut terms = BTreeMap::new();
        if r != Rational64::from_integer(0) {
            terms.insert((eps_pow, z_pow), r);
        }
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The plain rational value if no power of `eps` or `Z` is involved.
    pub fn as_rational(&self) -> Option<Rational64> {
        match self.terms.len() {
            0 => Some(Rational64::from_integer(0)),
            1 => self.terms.get(&(0, 0)).copied(),
            _ => None,
        }
    }

    pub fn depends_on_z(&self) -> bool {
        self.terms.keys().any(|&(_, z)| z != 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, i32, Rational64)> + '_ {
        self.terms.iter().map(|(&(e, z), &r)| (e, z, r))
    }

    /// Numeric value; `z` may be `None` only when no power of `Z` occurs.
    pub fn value(&self, eps: f64, z: Option<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (&(e, zp), r) in &self.terms {
            let mut t = *r.numer() as f64 / *r.denom() as f64 * eps.powi(e);
            if zp != 0 {
                let z = z.ok_or_else(|| {
                    Error::InvalidParams("coefficient involves Z but the chain has site-dependent Z".into())
                })?;
                t *= z.powi(zp);
            }
            total += t;
        }
        Ok(total)
    }

    fn insert(&mut self, key: (i32, i32), r: Rational64) {
        let zero = Rational64::from_integer(0);
        let slot = self.terms.entry(key).or_insert(zero);
        *slot += r;
        if *slot == zero {
            self.terms.remove(&key);
        }
    }
}

impl From<i64> for Coeff {
    fn from(n: i64) -> Self {
        Coeff::int(n)
    }
}

impl Add<&Coeff> for &Coeff {
    type Output = Coeff;

    fn add(self, rhs: &Coeff) -> Coeff {
        let mut out = self.clone();
        for (&k, &r) in &rhs.terms {
            out.insert(k, r);
        }
        out
    }
}

impl Add for Coeff {
    type Output = Coeff;

    fn add(self, rhs: Coeff) -> Coeff {
        &self + &rhs
    }
}

impl Neg for &Coeff {
    type Output = Coeff;

    fn neg(self) -> Coeff {
        Coeff { terms: self.terms.iter().map(|(&k, &r)| (k, -r)).collect() }
    }
}

impl Neg for Coeff {
    type Output = Coeff;

    fn neg(self) -> Coeff {
        -&self
    }
}

impl Sub<&Coeff> for &Coeff {
    type Output = Coeff;

    fn sub(self, rhs: &Coeff) -> Coeff {
        self + &(-rhs)
    }
}

impl Sub for Coeff {
    type Output = Coeff;

    fn sub(self, rhs: Coeff) -> Coeff {
        &self - &rhs
    }
}

impl Mul<&Coeff> for &Coeff {
    type Output = Coeff;

    fn mul(self, rhs: &Coeff) -> Coeff {
        let mut out = Coeff::zero();
        for (&(e1, z1), &r1) in &self.terms {
            for (&(e2, z2), &r2) in &rhs.terms {
                out.insert((e1 + e2, z1 + z2), r1 * r2);
            }
        }
        out
    }
}

impl Mul for Coeff {
    type Output = Coeff;

    fn mul(self, rhs: Coeff) -> Coeff {
        &self * &rhs
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (&(e, z), r)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{r}")?;
            if e != 0 {
                write!(f, "*eps^{e}")?;
            }
            if z != 0 {
                write!(f, "*Z^{z}")?;
            }
        }
        Ok(())
    }
}

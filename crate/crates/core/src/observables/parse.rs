//! Prefix syntax for observables.
//!
//! ```text
//! expr := "phi(" site ")" | "phi2(" site ")" | "dfwd(" site ")" | "dsym(" site ")"
//!       | "mul(" expr "," expr ")" | "qmul(" expr "," expr ")"
//! site := integer
//! ```
//!
//! `mul` is the pointwise product and `qmul` the quantum product. Whitespace
//! between tokens is ignored.

use super::algebra::quantum_product;
use super::expr::{classical_product, ObservableExpr};
use crate::error::{Error, Result};

pub fn parse_observable(text: &str) -> Result<ObservableExpr> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Syntax { pos: self.pos + 1, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn ident(&mut self) -> Result<&str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a function name"));
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).expect("ascii"))
    }

    fn site(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        s.parse().map_err(|_| Error::Syntax { pos: start + 1, msg: "expected a site index".into() })
    }

    fn expr(&mut self) -> Result<ObservableExpr> {
        let at = self.pos;
        let name = self.ident()?.to_string();
        self.expect(b'(')?;
        let out = match name.as_str() {
            "phi" | "phi2" | "dfwd" | "dsym" => {
                let s = self.site()?;
                match name.as_str() {
                    "phi" => ObservableExpr::phi(s),
                    "phi2" => ObservableExpr::pow(s, 2),
                    "dfwd" => ObservableExpr::dfwd(s),
                    _ => ObservableExpr::dsym(s),
                }
            }
            "mul" | "qmul" => {
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                if name == "mul" {
                    classical_product(&a, &b)
                } else {
                    quantum_product(&a, &b)?
                }
            }
            _ => return Err(Error::Syntax { pos: at + 1, msg: format!("unknown function `{name}`") }),
        };
        self.expect(b')')?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::coeff::Coeff;
    use num_rational::Rational64;

    #[test]
    fn primitives() {
        assert_eq!(parse_observable("phi(2)").unwrap(), ObservableExpr::phi(2));
        assert_eq!(parse_observable(" phi2( 3 ) ").unwrap(), ObservableExpr::pow(3, 2));
        assert_eq!(parse_observable("dfwd(0)").unwrap(), ObservableExpr::dfwd(0));
        assert_eq!(parse_observable("dsym(1)").unwrap(), ObservableExpr::dsym(1));
    }

    #[test]
    fn products() {
        let d = ObservableExpr::dfwd(2);
        assert_eq!(parse_observable("mul(dfwd(2),dfwd(2))").unwrap(), classical_product(&d, &d));
        let q = parse_observable("qmul(dfwd(2), dfwd(2))").unwrap();
        let shift = ObservableExpr::constant(Coeff::monomial(Rational64::from_integer(1), -1, -1));
        assert_eq!(q, classical_product(&d, &d).sub(&shift));
        assert!(matches!(parse_observable("qmul(phi(1), phi(3))"), Err(Error::UnsupportedBasis(_))));
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(
            parse_observable("phi(2"),
            Err(Error::Syntax { pos: 6, msg: "expected `)`".into() })
        );
        assert!(matches!(parse_observable("psi(1)"), Err(Error::Syntax { pos: 1, .. })));
        assert!(matches!(parse_observable("phi(x)"), Err(Error::Syntax { pos: 5, .. })));
        assert!(matches!(parse_observable("phi(1) phi(2)"), Err(Error::Syntax { pos: 8, .. })));
        assert!(matches!(parse_observable("mul(phi(1))"), Err(Error::Syntax { .. })));
    }
}

//! Numerical images of observables.
//!
//! A field monomial `f_n(phi(s_n)) ... f_1(phi(s_1))` with `s_n >= ... >= s_1`
//! maps onto the segment operator `f_n(Q) U(s_n, s_{n-1}) ... f_1(Q)` that runs
//! from `s_1` to `s_n`. Three evaluations of it are provided:
//!
//! * [`expectation`] contracts the segment with evolved boundary states and
//!   never inverts anything.
//! * [`HeisenbergMap`] transports the segment to a reference site with dense
//!   evolution operators and their inverses, which only works while those
//!   stay well conditioned.
//! * [`ModeFrame`] writes the transported operator in the eigenbasis of a
//!   site-independent step kernel, where transport is diagonal, and keeps a
//!   low-energy block of it.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::expr::{classical_product, FieldMonomial, ObservableExpr};
use crate::error::{Error, Result};
use crate::operators::OperatorMatrix;
use crate::states::{Side, StateVector};
use crate::transfer::{Chain, SpectralPropagator};

/// Numeric coefficients of the field expansion.
fn numeric_terms(chain: &Chain, a: &ObservableExpr) -> Result<Vec<(FieldMonomial, f64)>> {
    let eps = chain.params().epsilon();
    let z = chain.params().uniform_z();
    a.polynomial()
        .terms()
        .map(|(m, c)| Ok((m.clone(), c.value(eps, z)?)))
        .collect()
}

/// Site range of a monomial, `(r, r)` for constants.
fn span(m: &FieldMonomial, reference: usize) -> (usize, usize) {
    match (m.min_site(), m.max_site()) {
        (Some(lo), Some(hi)) => (lo as usize, hi as usize),
        _ => (reference, reference),
    }
}

fn power_at(m: &FieldMonomial, site: usize) -> u32 {
    m.powers().iter().find(|&&(s, _)| s == site as i64).map_or(0, |&(_, p)| p)
}

fn check_inside(chain: &Chain, a: &ObservableExpr, lo: usize, hi: usize) -> Result<()> {
    if let Some((l, h)) = a.support() {
        if l < lo as i64 || h > hi as i64 {
            return Err(Error::SupportViolation { lo: l, hi: h, len: chain.window_len() });
        }
    }
    Ok(())
}

/// `{bra| A |ket} / {bra|ket}` computed by contracting segment operators with
/// the evolved states. The support of `a` must lie between the ket and the
/// bra site.
pub fn expectation(chain: &Chain, a: &ObservableExpr, bra: &StateVector, ket: &StateVector) -> Result<f64> {
    if bra.side() != Side::Bra || ket.side() != Side::Ket {
        return Err(Error::InvalidState("expected a bra and a ket".into()));
    }
    let (k0, b0) = (ket.tau_site(), bra.tau_site());
    chain.check_site(b0)?;
    if k0 > b0 {
        return Err(Error::SiteMismatch(b0, k0));
    }
    if ket.len() != chain.grid().n_points() || bra.len() != chain.grid().n_points() {
        return Err(Error::GridMismatch);
    }
    check_inside(chain, a, k0, b0)?;
    let mut kets = vec![ket.values().clone()];
    for s in k0..b0 {
        let next = chain.step(s).apply(&kets[s - k0]);
        kets.push(next);
    }
    let mut bras = vec![bra.values().clone(); b0 - k0 + 1];
    for s in (k0..b0).rev() {
        bras[s - k0] = chain.step(s).apply_left(&bras[s + 1 - k0]);
    }
    let norm = bras[0].dot(&kets[0]);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm(norm));
    }
    let grid = chain.grid();
    let mut total = 0.0;
    for (m, c) in numeric_terms(chain, a)? {
        let (lo, hi) = span(&m, k0);
        let mut v = kets[lo - k0].clone();
        for s in lo..=hi {
            if s > lo {
                v = chain.step(s - 1).apply(&v);
            }
            let p = power_at(&m, s);
            if p > 0 {
                for (i, x) in v.iter_mut().enumerate() {
                    *x *= grid.value(i).powi(p as i32);
                }
            }
        }
        total += c * bras[hi - k0].dot(&v) / norm;
    }
    Ok(total)
}

/// Segment operator of one monomial as a dense action matrix.
fn segment(chain: &Chain, m: &FieldMonomial, lo: usize, hi: usize) -> Result<OperatorMatrix> {
    let grid = *chain.grid();
    let diag = |s: usize| {
        let p = power_at(m, s) as i32;
        OperatorMatrix::diagonal(grid, |i| grid.value(i).powi(p))
    };
    let mut out = diag(lo);
    for s in lo + 1..=hi {
        out = diag(s).mul(&chain.step(s - 1).mul(&out)?)?;
    }
    Ok(out)
}

/// Dense Heisenberg operators relative to a reference site.
pub struct HeisenbergMap<'a> {
    chain: &'a Chain,
    reference: usize,
}

impl<'a> HeisenbergMap<'a> {
    pub fn new(chain: &'a Chain, reference: usize) -> Result<Self> {
        chain.check_site(reference)?;
        Ok(Self { chain, reference })
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// `sum_terms c U(r, s_n) f_n(Q) ... f_1(Q) U(s_1, r)`.
    pub fn to_heisenberg(&self, a: &ObservableExpr) -> Result<OperatorMatrix> {
        a.check_support(self.chain.window_len())?;
        let r = self.reference;
        let mut cache: HashMap<(usize, usize), OperatorMatrix> = HashMap::new();
        let mut propagator = |to: usize, from: usize| -> Result<OperatorMatrix> {
            if let Some(u) = cache.get(&(to, from)) {
                return Ok(u.clone());
            }
            let u = self.chain.propagator(to, from)?;
            cache.insert((to, from), u.clone());
            Ok(u)
        };
        let n = self.chain.grid().n_points();
        let mut total = OperatorMatrix::new(*self.chain.grid(), DMatrix::zeros(n, n))?;
        for (m, c) in numeric_terms(self.chain, a)? {
            let (lo, hi) = span(&m, r);
            let seg = segment(self.chain, &m, lo, hi)?;
            let term = propagator(r, hi)?.mul(&seg)?.mul(&propagator(lo, r)?)?;
            total = total.add(&term.scale(c))?;
        }
        Ok(total)
    }

    /// `T(A_H B_H)`: the image of the pointwise product.
    pub fn time_ordered(&self, a: &ObservableExpr, b: &ObservableExpr) -> Result<OperatorMatrix> {
        self.to_heisenberg(&classical_product(a, b))
    }
}

/// `(first site, last site, coefficient, segment in the mode basis)`
type SegmentTerm = (usize, usize, f64, DMatrix<f64>);

/// Heisenberg operators in the eigenbasis of a site-independent step kernel.
pub struct ModeFrame<'a> {
    chain: &'a Chain,
    reference: usize,
    /// Kernel eigenvalues divided by the largest one, descending.
    ratios: DVector<f64>,
    modes: DMatrix<f64>,
}

/// Low-energy block of a Heisenberg operator together with where it was
/// taken.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceWitness {
    pub block: DMatrix<f64>,
    pub reference: usize,
    pub window_len: usize,
}

impl EquivalenceWitness {
    /// Spectral norm of the difference of two blocks.
    pub fn distance(&self, other: &EquivalenceWitness) -> Result<f64> {
        if self.reference != other.reference
            || self.window_len != other.window_len
            || self.block.shape() != other.block.shape()
        {
            return Err(Error::Other("witnesses taken in different frames".into()));
        }
        Ok((&self.block - &other.block).singular_values().max())
    }
}

impl<'a> ModeFrame<'a> {
    pub fn new(chain: &'a Chain, reference: usize) -> Result<Self> {
        chain.check_site(reference)?;
        let sp = SpectralPropagator::new(chain)?;
        let top = sp.eigenvalues()[0];
        let ratios = DVector::from_iterator(sp.eigenvalues().len(), sp.eigenvalues().iter().map(|l| l / top));
        Ok(Self { chain, reference, ratios, modes: sp.modes().clone() })
    }

    pub fn ratios(&self) -> &DVector<f64> {
        &self.ratios
    }

    fn dim(&self) -> usize {
        self.ratios.len()
    }

    /// `V^T f(Q) V` for `f = phi^p`.
    fn power_tilde(&self, p: u32) -> DMatrix<f64> {
        let grid = self.chain.grid();
        let n = self.dim();
        if p == 0 {
            return DMatrix::identity(n, n);
        }
        let mut scaled = self.modes.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= grid.value(i).powi(p as i32);
        }
        self.modes.tr_mul(&scaled)
    }

    /// Segment operator in the mode basis with the kernel scaled to a unit
    /// top eigenvalue.
    fn segment_tilde(&self, m: &FieldMonomial, lo: usize, hi: usize) -> DMatrix<f64> {
        let mut out = self.power_tilde(power_at(m, lo));
        for s in lo + 1..=hi {
            for (k, mut row) in out.row_iter_mut().enumerate() {
                row *= self.ratios[k];
            }
            let p = power_at(m, s);
            if p > 0 {
                out = self.power_tilde(p) * out;
            }
        }
        out
    }

    fn terms(&self, a: &ObservableExpr) -> Result<Vec<SegmentTerm>> {
        a.check_support(self.chain.window_len())?;
        Ok(numeric_terms(self.chain, a)?
            .into_iter()
            .map(|(m, c)| {
                let (lo, hi) = span(&m, self.reference);
                let seg = self.segment_tilde(&m, lo, hi);
                (lo, hi, c, seg)
            })
            .collect())
    }

    fn power(&self, k: usize, exponent: i64) -> f64 {
        self.ratios[k].powi(exponent as i32)
    }

    /// The `m x m` low-energy block of the Heisenberg operator of `a`.
    pub fn block(&self, a: &ObservableExpr, m: usize) -> Result<DMatrix<f64>> {
        let m = m.min(self.dim());
        let r = self.reference as i64;
        let mut out = DMatrix::zeros(m, m);
        for (lo, hi, c, seg) in self.terms(a)? {
            for k in 0..m {
                for l in 0..m {
                    out[(k, l)] += c * self.power(k, r - hi as i64) * seg[(k, l)] * self.power(l, lo as i64 - r);
                }
            }
        }
        Ok(out)
    }

    pub fn witness(&self, a: &ObservableExpr, m: usize) -> Result<EquivalenceWitness> {
        Ok(EquivalenceWitness {
            block: self.block(a, m)?,
            reference: self.reference,
            window_len: self.chain.window_len(),
        })
    }

    /// The `m x m` block of `A_H B_H`.
    ///
    /// The intermediate sum over modes is exact when every term of `a` lies
    /// at or after every term of `b`. Otherwise intermediate modes whose
    /// transport factor exceeds `max_growth` are dropped; the flag reports
    /// whether that happened.
    pub fn product_block(
        &self,
        a: &ObservableExpr,
        b: &ObservableExpr,
        m: usize,
        max_growth: f64,
    ) -> Result<(DMatrix<f64>, bool)> {
        let m = m.min(self.dim());
        let n = self.dim();
        let r = self.reference as i64;
        let ta = self.terms(a)?;
        let tb = self.terms(b)?;
        let mut out = DMatrix::zeros(m, m);
        let mut truncated = false;
        for (lo_a, hi_a, ca, sa) in &ta {
            for (lo_b, hi_b, cb, sb) in &tb {
                let gap = *lo_a as i64 - *hi_b as i64;
                let kept: Vec<usize> = (0..n)
                    .filter(|&j| {
                        let f = self.power(j, gap);
                        f.is_finite() && f.abs() <= max_growth.max(1.0)
                    })
                    .collect();
                truncated |= kept.len() < n;
                for k in 0..m {
                    let left = ca * self.power(k, r - *hi_a as i64);
                    for l in 0..m {
                        let right = cb * self.power(l, *lo_b as i64 - r);
                        let mut acc = 0.0;
                        for &j in &kept {
                            acc += sa[(k, j)] * self.power(j, gap) * sb[(j, l)];
                        }
                        out[(k, l)] += left * acc * right;
                    }
                }
            }
        }
        Ok((out, truncated))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{FieldGrid, ModelParams, Potential};
    use crate::observables::algebra::quantum_product;
    use crate::observables::coeff::Coeff;
    use crate::operators::{build_q, build_r};
    use crate::states::{boundary_state, density_matrix, evolve_state, expect_density, BoundaryKind};
    use num_rational::Rational64;

    fn coarse_chain(n_sites: usize) -> Chain {
        let p = ModelParams::uniform(0.2, Potential::Quartic { mu2: 0.7, lambda: 0.4 }, 1.0, n_sites).unwrap();
        Chain::new(p, FieldGrid::symmetric(9, 2.0).unwrap()).unwrap()
    }

    fn harmonic_chain(eps: f64, n_sites: usize) -> Chain {
        let p = ModelParams::uniform(eps, Potential::harmonic(1.0), 1.0, n_sites).unwrap();
        let width = eps.sqrt();
        Chain::new(p, FieldGrid::resolving(6.0, width, 3.0).unwrap()).unwrap()
    }

    fn states(chain: &Chain) -> (StateVector, StateVector) {
        (
            boundary_state(BoundaryKind::Gaussian { width: 1.3 }, chain, Side::Bra).unwrap(),
            boundary_state(BoundaryKind::Gaussian { width: 0.6 }, chain, Side::Ket).unwrap(),
        )
    }

    #[test]
    fn single_field_maps_to_transported_q() {
        let c = coarse_chain(3);
        let map = HeisenbergMap::new(&c, 2).unwrap();
        let q = build_q(c.grid());
        let at_ref = map.to_heisenberg(&ObservableExpr::phi(2)).unwrap();
        assert!((at_ref.entries() - q.entries()).amax() < 1e-14);
        let later = map.to_heisenberg(&ObservableExpr::phi(3)).unwrap();
        let by_hand = c.propagator(2, 3).unwrap().mul(&q).unwrap().mul(&c.propagator(3, 2).unwrap()).unwrap();
        assert!((later.entries() - by_hand.entries()).amax() < 1e-12);
    }

    #[test]
    fn dense_and_transfer_routes_agree() {
        let c = coarse_chain(4);
        let (bra, ket) = states(&c);
        let r = 2;
        let rho = density_matrix(&evolve_state(&c, &bra, r).unwrap(), &evolve_state(&c, &ket, r).unwrap(), c.grid())
            .unwrap();
        let map = HeisenbergMap::new(&c, r).unwrap();
        let d = ObservableExpr::dfwd(2);
        for a in [
            ObservableExpr::phi(1),
            ObservableExpr::pow(3, 2),
            classical_product(&ObservableExpr::phi(4), &ObservableExpr::phi(1)),
            classical_product(&d, &d),
            ObservableExpr::dsym(3).add(&ObservableExpr::one()),
        ] {
            let t = expectation(&c, &a, &bra, &ket).unwrap();
            let h = expect_density(&rho, &map.to_heisenberg(&a).unwrap()).unwrap();
            assert!((t - h).abs() < 1e-9 * t.abs().max(1.0), "{a}: {t} vs {h}");
        }
    }

    #[test]
    fn heisenberg_image_is_reference_free() {
        let c = coarse_chain(4);
        let (bra, ket) = states(&c);
        let a = classical_product(&ObservableExpr::dfwd(2), &ObservableExpr::phi(4));
        let t = expectation(&c, &a, &bra, &ket).unwrap();
        for r in 0..=c.last_site() {
            let rho =
                density_matrix(&evolve_state(&c, &bra, r).unwrap(), &evolve_state(&c, &ket, r).unwrap(), c.grid())
                    .unwrap();
            let h = expect_density(&rho, &HeisenbergMap::new(&c, r).unwrap().to_heisenberg(&a).unwrap()).unwrap();
            assert!((t - h).abs() < 1e-8, "reference {r}");
        }
    }

    #[test]
    fn support_must_avoid_boundary_sites() {
        let c = coarse_chain(3);
        let map = HeisenbergMap::new(&c, 2).unwrap();
        assert!(matches!(map.to_heisenberg(&ObservableExpr::phi(0)), Err(Error::SupportViolation { .. })));
        assert!(matches!(map.to_heisenberg(&ObservableExpr::dfwd(3)), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn ill_conditioned_transport_is_refused() {
        let c = harmonic_chain(0.02, 6);
        let map = HeisenbergMap::new(&c, 1).unwrap();
        assert!(matches!(map.to_heisenberg(&ObservableExpr::phi(5)), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn mode_frame_matches_dense_frame() {
        let c = coarse_chain(4);
        let r = 2;
        let map = HeisenbergMap::new(&c, r).unwrap();
        let frame = ModeFrame::new(&c, r).unwrap();
        let sp = SpectralPropagator::new(&c).unwrap();
        let v = sp.modes();
        for a in [ObservableExpr::phi(3), ObservableExpr::dfwd(1), ObservableExpr::dsym(2)] {
            let dense = v.transpose() * map.to_heisenberg(&a).unwrap().entries() * v;
            let block = frame.block(&a, 4).unwrap();
            assert!((dense.view((0, 0), (4, 4)) - &block).amax() < 1e-9, "{a}");
        }
    }

    #[test]
    fn ordered_product_block_is_exact() {
        let c = coarse_chain(4);
        let frame = ModeFrame::new(&c, 2).unwrap();
        let map = HeisenbergMap::new(&c, 2).unwrap();
        let a = ObservableExpr::dfwd(3);
        let b = ObservableExpr::pow(2, 2);
        let (block, truncated) = frame.product_block(&a, &b, 5, 1e8).unwrap();
        assert!(!truncated);
        let v = SpectralPropagator::new(&c).unwrap().modes().clone();
        let dense = map.to_heisenberg(&a).unwrap().mul(&map.to_heisenberg(&b).unwrap()).unwrap();
        let dense = v.transpose() * dense.entries() * &v;
        assert!((dense.view((0, 0), (5, 5)) - &block).amax() < 1e-9);
        let qp = frame.block(&quantum_product(&a, &b).unwrap(), 5).unwrap();
        assert!((qp - block).amax() < 1e-9);
    }

    #[test]
    fn neighbour_commutator_is_minus_eps_over_z() {
        let eps = 0.02;
        let c = harmonic_chain(eps, 6);
        let frame = ModeFrame::new(&c, 3).unwrap();
        let (ab, _) = frame.product_block(&ObservableExpr::phi(4), &ObservableExpr::phi(3), 6, 1e8).unwrap();
        let (ba, _) = frame.product_block(&ObservableExpr::phi(3), &ObservableExpr::phi(4), 6, 1e8).unwrap();
        let comm = ab - ba;
        let expected = DMatrix::<f64>::identity(6, 6) * (-eps);
        assert!((&comm - &expected).amax() < 1e-3 * eps, "{comm}");
        let sym = frame.block(&commutator_image(), 6).unwrap();
        assert!((sym - expected).amax() < 1e-15);
    }

    fn commutator_image() -> ObservableExpr {
        crate::observables::algebra::commutator_observable(&ObservableExpr::phi(4), &ObservableExpr::phi(3)).unwrap()
    }

    #[test]
    fn derivative_images_approach_minus_r_over_z() {
        let eps = 0.02;
        let c = harmonic_chain(eps, 4);
        let r = 2;
        let frame = ModeFrame::new(&c, r).unwrap();
        let v = SpectralPropagator::new(&c).unwrap().modes().columns(0, 10).into_owned();
        let rr = v.transpose() * build_r(c.grid()).entries() * &v;
        let minus_r = rr * -1.0;
        let fwd = frame.block(&ObservableExpr::dfwd(r as i64), 10).unwrap();
        let sym = frame.block(&ObservableExpr::dsym(r as i64), 10).unwrap();
        let dist = |x: &DMatrix<f64>, y: &DMatrix<f64>| (x - y).singular_values().max();
        assert!(dist(&sym, &minus_r) < 0.05, "{}", dist(&sym, &minus_r));
        assert!(dist(&fwd, &sym) < 2.0 * eps);
    }

    #[test]
    fn witness_distance() {
        let c = coarse_chain(3);
        let frame = ModeFrame::new(&c, 2).unwrap();
        let w1 = frame.witness(&ObservableExpr::dfwd(1), 5).unwrap();
        let by_hand = ObservableExpr::phi(2)
            .sub(&ObservableExpr::phi(1))
            .scale(&Coeff::monomial(Rational64::from_integer(1), -1, 0));
        let w2 = frame.witness(&by_hand, 5).unwrap();
        assert!(w1.distance(&w2).unwrap() < 1e-12);
        let other = ModeFrame::new(&c, 1).unwrap().witness(&by_hand, 5).unwrap();
        assert!(w1.distance(&other).is_err());
    }
}

//! Boundary states, their evolution along the chain and rank-one density
//! matrices.
//!
//! A ket lives on the first site of the window and is pushed forward with
//! the evolution operator, a bra lives on the last site and is contracted
//! from the right. Expectations are always ratios, so states never need a
//! global normalization.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::FieldGrid;
use crate::operators::OperatorMatrix;
use crate::transfer::{invert_evolution, Chain};

/// Residual `|T v - lambda v| / |T v|` at which power iteration stops.
pub const GROUND_RESIDUAL: f64 = 1e-12;
const MAX_POWER_ITERATIONS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Ket,
    Bra,
}

/// How the exterior of the window is summarized on a boundary site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryKind {
    Uniform,
    /// `exp(-phi^2 / (2 width^2))`
    Gaussian { width: f64 },
    /// Dominant eigenvector of the adjacent step kernel.
    Ground,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    values: DVector<f64>,
    tau_site: usize,
    side: Side,
}

impl StateVector {
    /// A user supplied boundary state; every entry must be non-negative and
    /// at least one positive.
    pub fn positive(values: DVector<f64>, tau_site: usize, side: Side) -> Result<Self> {
        if let Some(bad) = values.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidState(format!("boundary state entry {bad} is not a non-negative number")));
        }
        Self::new(values, tau_site, side)
    }

    /// Any finite, not identically vanishing grid function.
    pub fn new(values: DVector<f64>, tau_site: usize, side: Side) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("non-finite state entry".into()));
        }
        if values.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidState("state vanishes identically".into()));
        }
        Ok(Self { values, tau_site, side })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn tau_site(&self) -> usize {
        self.tau_site
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.values * factor, self.tau_site, self.side)
    }

    pub fn min_entry(&self) -> f64 {
        self.values.min()
    }

    /// `phi,amplitude` rows.
    pub fn to_csv(&self, grid: &FieldGrid) -> Result<String> {
        if grid.n_points() != self.len() {
            return Err(Error::GridMismatch);
        }
        let mut out = String::from("phi,amplitude\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", grid.value(i), v).expect("write to string");
        }
        Ok(out)
    }

    /// Reads the output of [`StateVector::to_csv`] back; grid values must
    /// match `grid` to 1e-12.
    pub fn from_csv(text: &str, grid: &FieldGrid, tau_site: usize, side: Side) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("phi,amplitude") {
            return Err(Error::InvalidState("missing `phi,amplitude` header".into()));
        }
        let mut values = Vec::with_capacity(grid.n_points());
        for (i, line) in lines.enumerate() {
            let (phi, amp) = line
                .split_once(',')
                .ok_or_else(|| Error::InvalidState(format!("row {}: expected two columns", i + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidState(format!("row {}: {e}", i + 1)))
            };
            let phi = parse(phi)?;
            if i >= grid.n_points() || (phi - grid.value(i)).abs() > 1e-12 {
                return Err(Error::GridMismatch);
            }
            values.push(parse(amp)?);
        }
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch);
        }
        Self::new(DVector::from_vec(values), tau_site, side)
    }
}

/// Dominant eigenpair of a matrix with strictly positive entries, by power
/// iteration on a power of the matrix. The vector is unit length with
/// positive entries.
pub fn dominant_eigenvector(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    // Iterate with m^16, rescaled so repeated products stay finite.
    let mut accel = m.clone();
    for _ in 0..4 {
        accel = &accel * &accel;
        let s = accel.amax();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::NoConvergence(f64::NAN));
        }
        accel /= s;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_POWER_ITERATIONS / 16 {
        let w = m * &v;
        let lambda = v.dot(&w);
        residual = (&w - &v * lambda).norm() / w.norm();
        if residual <= GROUND_RESIDUAL {
            return Ok((lambda, (w / lambda).normalize()));
        }
        v = (&accel * &v).normalize();
    }
    Err(Error::NoConvergence(residual))
}

/// Boundary state of `side` for the window of `chain`: kets sit on site 0,
/// bras on the last site.
pub fn boundary_state(kind: BoundaryKind, chain: &Chain, side: Side) -> Result<StateVector> {
    let grid = chain.grid();
    let site = match side {
        Side::Ket => 0,
        Side::Bra => chain.last_site(),
    };
    let values = match kind {
        BoundaryKind::Uniform => DVector::from_element(grid.n_points(), 1.0),
        BoundaryKind::Gaussian { width } => {
            if width.is_nan() || width <= 0.0 {
                return Err(Error::InvalidState(format!("gaussian width {width} must be > 0")));
            }
            DVector::from_fn(grid.n_points(), |i, _| {
                let x = grid.value(i) / width;
                (-0.5 * x * x).exp()
            })
        }
        BoundaryKind::Ground => {
            let kernel = match side {
                Side::Ket => chain.step(0).entries().clone(),
                Side::Bra => chain.step(chain.last_site() - 1).entries().transpose(),
            };
            dominant_eigenvector(&kernel)?.1
        }
    };
    StateVector::positive(values, site, side)
}

/// Moves a state to `to_site`. Kets move forward and bras backward by plain
/// kernel products; the opposite directions need an inverse evolution
/// operator and fail when that is ill-conditioned.
pub fn evolve_state(chain: &Chain, s: &StateVector, to_site: usize) -> Result<StateVector> {
    chain.check_site(to_site)?;
    chain.check_site(s.tau_site)?;
    if chain.grid().n_points() != s.len() {
        return Err(Error::GridMismatch);
    }
    let from = s.tau_site;
    let values = match (s.side, to_site >= from) {
        (Side::Ket, true) => chain.push_ket(&s.values, from, to_site)?,
        (Side::Bra, false) => chain.pull_bra(&s.values, from, to_site)?,
        (Side::Ket, false) => {
            let inv = invert_evolution(&chain.evolve(to_site, from)?)?;
            inv.inverse.apply(&s.values)
        }
        (Side::Bra, true) => {
            let inv = invert_evolution(&chain.evolve(from, to_site)?)?;
            inv.inverse.apply_left(&s.values)
        }
    };
    StateVector::new(values, to_site, s.side)
}

fn check_pair(bra: &StateVector, ket: &StateVector) -> Result<()> {
    if bra.side != Side::Bra || ket.side != Side::Ket {
        return Err(Error::InvalidState("expected a bra and a ket".into()));
    }
    if bra.tau_site != ket.tau_site {
        return Err(Error::SiteMismatch(bra.tau_site, ket.tau_site));
    }
    if bra.len() != ket.len() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `spacing * sum_i bra_i ket_i`.
pub fn inner(bra: &StateVector, ket: &StateVector, grid: &FieldGrid) -> Result<f64> {
    check_pair(bra, ket)?;
    if grid.n_points() != ket.len() {
        return Err(Error::GridMismatch);
    }
    Ok(grid.spacing() * bra.values.dot(&ket.values))
}

/// `{bra| A |ket} / {bra|ket}`.
pub fn expect_operator(bra: &StateVector, op: &OperatorMatrix, ket: &StateVector) -> Result<f64> {
    check_pair(bra, ket)?;
    if op.dim() != ket.len() {
        return Err(Error::GridMismatch);
    }
    let norm = bra.values.dot(&ket.values);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm(norm));
    }
    Ok(bra.values.dot(&op.apply(&ket.values)) / norm)
}

/// `|ket}{bra|` at one site, scaled to unit trace.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    entries: OperatorMatrix,
    site: usize,
}

impl DensityMatrix {
    pub fn entries(&self) -> &OperatorMatrix {
        &self.entries
    }

    pub fn site(&self) -> usize {
        self.site
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `rho(to) = U(to, from) rho U(from, to)`, inverting whichever factor
    /// runs backward.
    pub fn evolve(&self, chain: &Chain, to_site: usize) -> Result<DensityMatrix> {
        let from = self.site;
        let (fwd, bwd) = if to_site >= from {
            let u = chain.evolve(from, to_site)?;
            let inv = invert_evolution(&u)?.inverse;
            (u, inv)
        } else {
            let u = chain.evolve(to_site, from)?;
            let inv = invert_evolution(&u)?.inverse;
            (inv, u)
        };
        let entries = fwd.mul(&self.entries)?.mul(&bwd)?;
        Ok(DensityMatrix { entries, site: to_site })
    }
}

pub fn density_matrix(bra: &StateVector, ket: &StateVector, grid: &FieldGrid) -> Result<DensityMatrix> {
    check_pair(bra, ket)?;
    let norm = bra.values.dot(&ket.values);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm(norm));
    }
    let entries = &ket.values * bra.values.transpose() / norm;
    Ok(DensityMatrix { entries: OperatorMatrix::new(*grid, entries)?, site: ket.tau_site })
}

/// `Tr(rho A)`.
pub fn expect_density(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<f64> {
    if op.dim() != rho.entries.dim() {
        return Err(Error::GridMismatch);
    }
    Ok(rho.entries.entries().component_mul(&op.entries().transpose()).sum())
}

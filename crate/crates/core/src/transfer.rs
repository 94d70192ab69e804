//! Transfer kernels and Euclidean evolution operators.
//!
//! The link `n -> n+1` carries the kernel
//!
//! ```text
//! K(phi_2, phi_1) = sqrt(Z/(2 pi eps)) exp[-(eps/2)(V_{n+1}(phi_2) + V_n(phi_1)) - Z/(2 eps) (phi_2 - phi_1)^2]
//! ```
//!
//! with `Z` the link-averaged kinetic coefficient. Ordered products of these
//! kernels are the evolution operators `U(n_2, n_1)`; for `n_2 < n_1` the
//! evolution is the matrix inverse of `U(n_1, n_2)`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{log_measure_factor, FieldGrid, ModelParams};
use crate::operators::{build_h, OperatorMatrix, SpectralDecomposition};

/// Inverses whose residual `|U U^-1 - 1|_max` exceeds this are refused.
pub const MAX_INVERSE_RESIDUAL: f64 = 1e-6;
/// Inverses of matrices with a larger 2-norm condition number are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// One-step transfer kernel of the link `link -> link + 1`.
pub fn step_kernel(params: &ModelParams, link: usize, grid: &FieldGrid) -> OperatorMatrix {
    let eps = params.epsilon();
    let z = params.z_link(link);
    let log_norm = log_measure_factor(params, link);
    let lower = params.potential(link);
    let upper = params.potential(link + 1);
    let v_lo: Vec<f64> = (0..grid.n_points()).map(|i| lower.at(grid, i)).collect();
    let v_hi: Vec<f64> = (0..grid.n_points()).map(|i| upper.at(grid, i)).collect();
    OperatorMatrix::from_kernel(*grid, |i, j| {
        let d = grid.value(i) - grid.value(j);
        (log_norm - 0.5 * eps * (v_hi[i] + v_lo[j]) - z / (2.0 * eps) * d * d).exp()
    })
}

/// How well the grid resolves the kernel Gaussian of width `sqrt(eps/Z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingTier {
    /// spacing <= sqrt(eps/Z)/3
    Resolved,
    /// up to 5x the resolved bound on `spacing^2 Z / eps`
    Marginal,
    Unresolved,
}

/// `9 spacing^2 Z / eps`; at most 1 when the grid has three points per
/// kernel width.
pub fn coupling_number(eps: f64, z: f64, spacing: f64) -> f64 {
    9.0 * spacing * spacing * z / eps
}

pub fn coupling_tier(eps: f64, z: f64, spacing: f64) -> CouplingTier {
    let c = coupling_number(eps, z, spacing);
    if c <= 1.0 {
        CouplingTier::Resolved
    } else if c <= 5.0 {
        CouplingTier::Marginal
    } else {
        CouplingTier::Unresolved
    }
}

/// Warns on marginal resolution and refuses unresolved grids.
pub fn check_coupling(eps: f64, z: f64, grid: &FieldGrid) -> Result<CouplingTier> {
    let spacing = grid.spacing();
    let tier = coupling_tier(eps, z, spacing);
    let width = (eps / z).sqrt();
    let coupling = coupling_number(eps, z, spacing);
    match tier {
        CouplingTier::Resolved => {}
        CouplingTier::Marginal => {
            warn!("grid spacing {spacing:.4} only marginally resolves kernel width {width:.4} (coupling {coupling:.2})")
        }
        CouplingTier::Unresolved => return Err(Error::CouplingViolated { spacing, width, coupling }),
    }
    Ok(tier)
}

/// A matrix inverse together with its quality.
#[derive(Clone, Debug)]
pub struct Inverse {
    pub inverse: OperatorMatrix,
    /// `|U U^-1 - 1|_max`
    pub residual: f64,
    /// Ratio of extreme singular values of `U`.
    pub condition: f64,
}

pub fn invert_evolution(u: &OperatorMatrix) -> Result<Inverse> {
    let n = u.dim();
    let sv = u.entries().clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let inv = u.entries().clone().lu().try_inverse();
    let Some(inv) = inv else {
        return Err(Error::IllConditioned { residual: f64::INFINITY, condition });
    };
    let residual = (u.entries() * &inv - DMatrix::<f64>::identity(n, n)).amax();
    if condition > MAX_CONDITION || residual > MAX_INVERSE_RESIDUAL || !residual.is_finite() {
        return Err(Error::IllConditioned { residual, condition });
    }
    Ok(Inverse { inverse: OperatorMatrix::new(*u.grid(), inv)?, residual, condition })
}

/// The window of a chain with all of its link kernels.
#[derive(Clone, Debug)]
pub struct Chain {
    params: ModelParams,
    grid: FieldGrid,
    steps: Vec<OperatorMatrix>,
}

impl Chain {
    pub fn new(params: ModelParams, grid: FieldGrid) -> Result<Self> {
        params.validate_for(&grid)?;
        let steps = (0..params.window_len() - 1).map(|l| step_kernel(&params, l, &grid)).collect();
        Ok(Self { params, grid, steps })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    pub fn window_len(&self) -> usize {
        self.params.window_len()
    }

    pub fn last_site(&self) -> usize {
        self.window_len() - 1
    }

    pub fn step(&self, link: usize) -> &OperatorMatrix {
        &self.steps[link]
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site < self.window_len() {
            Ok(())
        } else {
            Err(Error::SiteOutOfWindow { site: site as i64, len: self.window_len() })
        }
    }

    /// `U(to, from)` for `to >= from`: the ordered product of link kernels.
    pub fn evolve(&self, from: usize, to: usize) -> Result<OperatorMatrix> {
        self.check_site(from)?;
        self.check_site(to)?;
        if to < from {
            return Err(Error::Other(format!(
                "forward evolution needs to >= from, got {to} < {from}"
            )));
        }
        let mut u = OperatorMatrix::identity(self.grid);
        for link in from..to {
            u = self.steps[link].mul(&u)?;
        }
        Ok(u)
    }

    /// `U(to, from)` for any order; backward evolution is the inverse of the
    /// forward one.
    pub fn propagator(&self, to: usize, from: usize) -> Result<OperatorMatrix> {
        if to >= from {
            self.evolve(from, to)
        } else {
            Ok(invert_evolution(&self.evolve(to, from)?)?.inverse)
        }
    }

    /// Forward-evolves a ket: `U(to, from) psi`.
    pub fn push_ket(&self, psi: &DVector<f64>, from: usize, to: usize) -> Result<DVector<f64>> {
        self.check_site(to)?;
        let mut out = psi.clone();
        for link in from..to {
            out = self.steps[link].apply(&out);
        }
        Ok(out)
    }

    /// Backward-contracts a bra: `psi^T U(from, to)` for `to <= from`.
    pub fn pull_bra(&self, psi: &DVector<f64>, from: usize, to: usize) -> Result<DVector<f64>> {
        self.check_site(from)?;
        let mut out = psi.clone();
        for link in (to..from).rev() {
            out = self.steps[link].apply_left(&out);
        }
        Ok(out)
    }

    /// Hamiltonian of the site.
    pub fn hamiltonian(&self, site: usize) -> Result<OperatorMatrix> {
        build_h(self.params.potential(site), self.params.z(site), &self.grid)
    }
}

/// Evolution of a translation invariant chain through the eigenmodes of its
/// symmetric step kernel.
#[derive(Clone, Debug)]
pub struct SpectralPropagator {
    epsilon: f64,
    /// Step kernel eigenvalues, descending.
    eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns.
    modes: DMatrix<f64>,
}

impl SpectralPropagator {
    pub fn new(chain: &Chain) -> Result<Self> {
        if !chain.params().is_translation_invariant() {
            return Err(Error::InvalidParams("spectral evolution needs site-independent V and Z".into()));
        }
        let sd = SpectralDecomposition::of_matrix(chain.step(0).entries())?;
        let n = sd.len();
        let eigenvalues = (0..n).rev().map(|k| sd.eigenvalues()[k]).collect();
        let mut modes = DMatrix::zeros(n, n);
        for k in 0..n {
            modes.set_column(k, &sd.vector(n - 1 - k));
        }
        Ok(Self { epsilon: chain.params().epsilon(), eigenvalues, modes })
    }

    /// Kernel eigenvalues, largest first.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> DVector<f64> {
        self.modes.column(k).into_owned()
    }

    /// `-ln(lambda_k) / eps` for the `count` largest kernel eigenvalues.
    pub fn energies(&self, count: usize) -> Vec<f64> {
        self.eigenvalues.iter().take(count).map(|l| -l.ln() / self.epsilon).collect()
    }

    /// `sum_k v_k lambda_k^steps (v_k . psi)`, the mode-sum form of `T^steps psi`.
    pub fn evolve(&self, psi: &DVector<f64>, steps: usize) -> DVector<f64> {
        let coeffs = self.modes.tr_mul(psi);
        let scaled = DVector::from_fn(coeffs.len(), |k, _| coeffs[k] * self.eigenvalues[k].powi(steps as i32));
        &self.modes * scaled
    }
}

/// One row of [`hamiltonian_consistency`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyRow {
    pub epsilon: f64,
    pub n_points: usize,
    /// Spectral norm of `V^T [(1 - T)/eps - H] V` over the lowest `m`
    /// eigenvectors `V` of `H`.
    pub deviation: f64,
    /// `-ln(lambda_max(T)) / eps`.
    pub kernel_ground_energy: f64,
    /// Lowest eigenvalue of `H`.
    pub hamiltonian_ground_energy: f64,
}

/// Compares the one-step kernel with `exp(-eps H)` on a low-energy subspace
/// for a decreasing sequence of `eps`, refining the grid as
/// `spacing <= sqrt(eps/Z) / resolution` on `[-phi_max, phi_max]`.
///
/// Only the potential and `Z` of site 0 and link 0 enter.
pub fn hamiltonian_consistency(
    params: &ModelParams,
    phi_max: f64,
    eps_sequence: &[f64],
    subspace: usize,
    resolution: f64,
) -> Result<Vec<ConsistencyRow>> {
    if eps_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Other("eps sequence must be strictly decreasing".into()));
    }
    if subspace == 0 {
        return Err(Error::Other("subspace dimension must be positive".into()));
    }
    let z = params.z_link(0);
    let mut rows = Vec::with_capacity(eps_sequence.len());
    for &eps in eps_sequence {
        let p = params.same_with_epsilon(eps)?;
        let grid = FieldGrid::resolving(phi_max, (eps / z).sqrt(), resolution)?;
        if check_coupling(eps, z, &grid)? != CouplingTier::Resolved {
            let spacing = grid.spacing();
            return Err(Error::CouplingViolated {
                spacing,
                width: (eps / z).sqrt(),
                coupling: coupling_number(eps, z, spacing),
            });
        }
        let t = step_kernel(&p, 0, &grid);
        let h = build_h(p.potential(0), p.z(0), &grid)?;
        let hs = SpectralDecomposition::of_matrix(h.entries())?;
        let m = subspace.min(hs.len());
        let v = hs.block(0, m);
        let n = grid.n_points();
        let gen = (DMatrix::<f64>::identity(n, n) - t.entries()) / eps - h.entries();
        let projected = v.transpose() * gen * &v;
        let deviation = projected.singular_values().max();
        let ts = SpectralDecomposition::of_matrix(t.entries())?;
        let lam = ts.eigenvalues()[ts.len() - 1];
        rows.push(ConsistencyRow {
            epsilon: eps,
            n_points: n,
            deviation,
            kernel_ground_energy: -lam.ln() / eps,
            hamiltonian_ground_energy: hs.eigenvalues()[0],
        });
    }
    Ok(rows)
}

//! Grid-discretized operators and their algebra.
//!
//! An [`OperatorMatrix`] stores the matrix that acts on sampled grid
//! functions by ordinary matrix-vector multiplication. For an integral kernel
//! `K(phi_2, phi_1)` this is `K_ij * spacing` (rectangle rule), so kernel
//! composition, commutators and Heisenberg transport are plain matrix
//! products. The identity operator corresponds to the kernel
//! `delta(phi_2 - phi_1)`, i.e. `1/spacing` on the diagonal.
//!
//! Differential operators use Dirichlet closure: grid functions vanish just
//! outside the truncated field axis. Identities between them hold exactly on
//! rows that do not touch the edges (rows `1..n-1`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lattice::{FieldGrid, Potential};

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    grid: FieldGrid,
    entries: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn new(grid: FieldGrid, entries: DMatrix<f64>) -> Result<Self> {
        let n = grid.n_points();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidGrid(format!(
                "{}x{} matrix on a {n}-point grid",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { grid, entries })
    }

    /// Operator with integral kernel `kernel(i, j) = K(phi_i, phi_j)`.
    pub fn from_kernel(grid: FieldGrid, kernel: impl Fn(usize, usize) -> f64) -> Self {
        let n = grid.n_points();
        let h = grid.spacing();
        let entries = DMatrix::from_fn(n, n, |i, j| kernel(i, j) * h);
        Self { grid, entries }
    }

    pub fn identity(grid: FieldGrid) -> Self {
        let n = grid.n_points();
        Self { grid, entries: DMatrix::identity(n, n) }
    }

    pub fn diagonal(grid: FieldGrid, f: impl Fn(usize) -> f64) -> Self {
        let n = grid.n_points();
        let d = DVector::from_fn(n, |i, _| f(i));
        Self { grid, entries: DMatrix::from_diagonal(&d) }
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.n_points()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// Kernel value `K(phi_i, phi_j)`.
    pub fn kernel_value(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)] / self.grid.spacing()
    }

    pub fn apply(&self, psi: &DVector<f64>) -> DVector<f64> {
        &self.entries * psi
    }

    /// Row vector times operator: `(psi^T A)^T`.
    pub fn apply_left(&self, psi: &DVector<f64>) -> DVector<f64> {
        self.entries.tr_mul(psi)
    }

    pub fn mul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_grid(other)?;
        Ok(Self { grid: self.grid, entries: &self.entries * &other.entries })
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_grid(other)?;
        Ok(Self { grid: self.grid, entries: &self.entries + &other.entries })
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_grid(other)?;
        Ok(Self { grid: self.grid, entries: &self.entries - &other.entries })
    }

    pub fn scale(&self, s: f64) -> OperatorMatrix {
        Self { grid: self.grid, entries: &self.entries * s }
    }

    pub fn transpose(&self) -> OperatorMatrix {
        Self { grid: self.grid, entries: self.entries.transpose() }
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.entries)
    }

    /// Largest absolute entry difference restricted to `rows`.
    pub fn max_row_diff(&self, other: &OperatorMatrix, rows: std::ops::Range<usize>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in rows {
            for j in 0..self.dim() {
                worst = worst.max((self.entries[(i, j)] - other.entries[(i, j)]).abs());
            }
        }
        worst
    }

    /// Rows untouched by the Dirichlet closure of nearest-neighbour stencils.
    pub fn interior_rows(&self) -> std::ops::Range<usize> {
        1..self.dim() - 1
    }

    fn same_grid(&self, other: &OperatorMatrix) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Multiplication by the field value.
pub fn build_q(grid: &FieldGrid) -> OperatorMatrix {
    OperatorMatrix::diagonal(*grid, |i| grid.value(i))
}

/// `f(Q)` for a function of the field value.
pub fn function_of_q(grid: &FieldGrid, f: impl Fn(f64) -> f64) -> OperatorMatrix {
    OperatorMatrix::diagonal(*grid, |i| f(grid.value(i)))
}

/// `-d^2/dphi^2` as the negated three-point second difference.
pub fn build_p2(grid: &FieldGrid) -> OperatorMatrix {
    let n = grid.n_points();
    let inv_h2 = 1.0 / grid.spacing().powi(2);
    let entries = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * inv_h2,
        1 => -inv_h2,
        _ => 0.0,
    });
    OperatorMatrix { grid: *grid, entries }
}

/// `d/dphi` as the central difference.
pub fn build_r(grid: &FieldGrid) -> OperatorMatrix {
    let n = grid.n_points();
    let half_inv_h = 0.5 / grid.spacing();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if j == i + 1 {
            half_inv_h
        } else if i == j + 1 {
            -half_inv_h
        } else {
            0.0
        }
    });
    OperatorMatrix { grid: *grid, entries }
}

pub fn potential_operator(potential: &Potential, grid: &FieldGrid) -> OperatorMatrix {
    OperatorMatrix::diagonal(*grid, |i| potential.at(grid, i))
}

/// `H = V(Q) + P^2 / (2 Z)`.
pub fn build_h(potential: &Potential, z: f64, grid: &FieldGrid) -> Result<OperatorMatrix> {
    if z.is_nan() || z <= 0.0 {
        return Err(Error::InvalidParams(format!("kinetic coefficient z = {z} must be > 0")));
    }
    potential.validate(Some(grid))?;
    potential_operator(potential, grid).add(&build_p2(grid).scale(0.5 / z))
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.mul(b)?.sub(&b.mul(a)?)
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn of_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = max_asymmetry(m);
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            // Fix the sign so that the largest component is positive.
            let imax = col.iamax();
            if col[imax] < 0.0 {
                col.neg_mut();
            }
            eigenvectors.set_column(k, &col);
        }
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// Columns `k..k+m` of the eigenvector matrix.
    pub fn block(&self, k: usize, m: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(k, m).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    /// `|A - sum_n E_n v_n v_n^T|_F / |A|_F`.
    pub fn reconstruction_error(&self, a: &DMatrix<f64>) -> f64 {
        (a - self.reconstruct()).norm() / a.norm().max(f64::MIN_POSITIVE)
    }

    /// `max_n |A v_n - E_n v_n|`.
    pub fn max_residual(&self, a: &DMatrix<f64>) -> f64 {
        (0..self.len())
            .map(|k| {
                let v = self.vector(k);
                (a * &v - &v * self.eigenvalues[k]).amax()
            })
            .fold(0.0, f64::max)
    }
}

pub fn spectral(a: &OperatorMatrix) -> Result<SpectralDecomposition> {
    SpectralDecomposition::of_matrix(a.entries())
}

/// Heisenberg transport `u_inv * a * u_fwd`, refusing inverses whose residual
/// `|u_inv u_fwd - 1|_max` exceeds `1e-8`.
pub fn heisenberg_transport(
    a: &OperatorMatrix,
    u_fwd: &OperatorMatrix,
    u_inv: &OperatorMatrix,
) -> Result<OperatorMatrix> {
    let n = a.dim();
    let residual = (u_inv.mul(u_fwd)?.entries() - DMatrix::<f64>::identity(n, n)).amax();
    if residual > 1e-8 {
        return Err(Error::IllConditioned { residual, condition: f64::NAN });
    }
    u_inv.mul(a)?.mul(u_fwd)
}

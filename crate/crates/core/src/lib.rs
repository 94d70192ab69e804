//! Transfer-matrix description of a classical chain of coupled anharmonic
//! oscillators.
//!
//! The crate maps the local probability distribution of the chain onto
//! grid-discretized operators: evolution kernels, boundary states, Heisenberg
//! operators for local observables, and the quantum product on equivalence
//! classes of observables. Every operator-side expectation value can be
//! checked against an exact configuration sum in [`oracle`].

pub mod cli;
mod error;
pub mod exact_sum;
pub mod lattice;
pub mod observables;
pub mod operators;
pub mod oracle;
pub mod states;
pub mod transfer;

pub use error::{Error, Result};
pub use lattice::{FieldGrid, LatticeConfiguration, ModelParams, Potential};
pub use observables::{Coeff, Factor, FactorKind, ObservableExpr};
pub use operators::{OperatorMatrix, SpectralDecomposition};
pub use states::{DensityMatrix, Side, StateVector};
pub use transfer::Chain;

//! Local observables, their Heisenberg operators and the products defined on
//! them.

mod algebra;
mod coeff;
mod expr;
mod heisenberg;
mod parse;

pub use algebra::{
    commutator_observable, quantum_product, standard_representative, OpLetter, OperatorMonomial, WordPolynomial,
};
pub use coeff::Coeff;
pub use expr::{
    classical_product, eval_on_config, Factor, FactorKind, FieldMonomial, FieldPolynomial, ObservableExpr, Term,
};
pub use heisenberg::{expectation, EquivalenceWitness, HeisenbergMap, ModeFrame};
pub use parse::parse_observable;

//! Matrix-multiplicative-weights SDP feasibility solver whose Gibbs-state
//! expectations are estimated with thermal pure quantum (TPQ) states, together
//! with the exact spectral oracles, polynomial approximations and resource
//! estimators used to check it.

pub mod cli;
pub mod clifford;
pub mod exactspec;
pub mod hamlearn;
pub mod krylov;
pub mod mmw;
pub mod operators;
pub mod polyqet;
pub mod resources;
pub mod rng;
pub mod state;
pub mod tpq;

pub use operators::{compile, PauliSum, PauliTerm, SparseOperator};
pub use state::StateVector;

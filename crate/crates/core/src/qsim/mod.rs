//! Exact simulation of spin chains and truncated bosonic modes.
//!
//! Qubit sites are 0-based and site 0 is the most significant bit of a basis
//! index, so `|s₀ s₁ … s_{N−1}⟩` maps to `Σ s_k 2^{N−1−k}`.

mod bosonic;
mod hamiltonian;
mod observables;
mod pauli;
mod state;

use thiserror::Error;

pub use bosonic::{
    cat_state, coherent_amplitudes, coherent_state, fidelity, husimi_q, husimi_q_pure, TAIL_WARN,
};
pub use hamiltonian::{
    build_hamiltonian, fix_global_phase, ground_state, GroundState, Hamiltonian, HamiltonianSpec, Model,
    DEGENERACY_TOL, MAX_QUBITS,
};
pub use observables::{
    mbti, partial_trace, partial_transpose, pauli_matrix, reduced_density_matrix, renyi2_entropy,
    renyi2_entropy_of, spin_correlation, string_operator, string_order, Axis, MAX_MBTI_SITES,
};
pub use pauli::{Pauli, PauliString};
pub use state::{hermiticity_error, DensityMatrix, Space, StateVector, C64, EIGEN_FLOOR, STATE_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state spaces differ: {0:?} vs {1:?}")]
    SpaceMismatch(Space, Space),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    InvalidTrace(f64),
    #[error("density matrix has eigenvalue {0:.3e} below the positivity floor")]
    NotPositive(f64),
    #[error("{n} qubits exceeds the dense-simulation limit of {max}")]
    TooManyQubits { n: usize, max: usize },
    #[error("bond-alternating chain needs an even qubit count, got {0}")]
    OddChain(usize),
    #[error("string order is defined only for odd chains, got {0} qubits")]
    EvenChain(usize),
    #[error("invalid sites: {0}")]
    InvalidSites(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

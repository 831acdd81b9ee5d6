//! Simulator and verification harness for a delegated quantum computation
//! interactive proof.
//!
//! A verifier with very limited quantum abilities (preparing certain
//! single-qubit states, or merely holding halves of EPR pairs) delegates a
//! quantum circuit to a powerful but untrusted prover. The data is protected
//! by a quantum one-time pad `X^a Z^b` whose keys the verifier tracks
//! classically through every gate; `T` gates are performed through an
//! interactive teleportation-style gadget; and the verifier randomly
//! substitutes two kinds of dummy "test" executions that are indistinguishable
//! from the real one and catch tampering.
//!
//! The crate provides:
//! - [`statevec`]: dense statevector simulation of small registers;
//! - [`pauli`]: Pauli-group algebra, pad-key bookkeeping, Clifford key-update
//!   rules, Pauli-twirl verification, and benign/non-benign attack
//!   classification;
//! - [`circuit`]: a text circuit format, the gadget compiler, and the
//!   brute-force output-probability oracle;
//! - [`protocol`]: the prepare-and-send interactive proof ("direct");
//! - [`epr`]: the delayed-choice EPR variant ("epr"), including the exact
//!   prover-view indistinguishability check;
//! - [`adversary`]: attack description, injection, and the closed-form
//!   acceptance/rejection predictions they are compared against;
//! - [`harness`]: seeded batch experiments and machine-readable reports;
//! - [`suite`]: the built-in acceptance criteria (also exposed through the
//!   CLI as `verify check`).
//!
//! # Conventions
//!
//! Qubit 0 is the **most significant bit** of the amplitude index, everywhere.
//! All randomized operations take an explicit RNG so that every experiment is
//! reproducible from a 64-bit seed.

pub mod adversary;
pub mod circuit;
pub mod epr;
pub mod harness;
pub mod linalg;
pub mod pauli;
pub mod protocol;
pub mod stats;
pub mod statevec;
pub mod suite;

pub use adversary::{AttackSpec, KrausTerm, ProverSpec};
pub use circuit::{Circuit, GadgetProgram, InstanceKind, InstanceLabel};
pub use epr::DeferredTranscript;
pub use harness::{ExperimentConfig, ProtocolChoice, Report, ReportFormat, RunPolicy};
pub use pauli::{PadKey, PauliString, ProtocolDims};
pub use protocol::{Outcome, ProverPolicy, RunType, Transcript};
pub use statevec::{AuxStateSpec, DensityMatrix, Gate, GateKind, State};

/// Crate-wide error type.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },
    #[error("register capacity exceeded: {requested} qubits (limit {limit})")]
    Capacity { requested: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state norm {norm} differs from 1 by more than 1e-9")]
    Norm { norm: f64 },
    #[error("degenerate measurement branch (probability {prob:.3e})")]
    DegenerateBranch { prob: f64 },
    #[error("cannot discard qubit {qubit}: it is not in a collapsed computational state")]
    NotCollapsed { qubit: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid attack: {0}")]
    Attack(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

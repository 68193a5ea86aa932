//! Barrier-certificate verification of opacity-based privacy for Markov
//! decision processes and partially observable MDPs.
//!
//! The intruder tracks a belief over the hidden state. Privacy holds when the
//! belief mass on the secret states never exceeds a threshold `λ`. This crate
//! certifies that property with quadratic barrier certificates (MDPs, solved as
//! an SDP) or polynomial ones (POMDPs, solved as SOS programs), and refutes it
//! with an exhaustive falsifier.

pub mod belief;
pub mod conic;
pub mod error;
pub mod model;
pub mod poly;
pub mod sos;
pub mod verifier;

pub use belief::{
    default_grid, falsify, mdp_update, observation_probability, pomdp_update, secret_mass,
    simulate, Belief, FalsificationWitness, FalsifyOptions, FalsifyReport, Label, Trajectory,
};
pub use conic::{
    solve, validate_solution, ConicProgram, ConicSolution, LmiBlock, SolveStatus, SolverOptions,
    SymMatrix,
};
pub use error::{Error, Result};
pub use model::{
    initial_polytope_matrix, unsafe_halfspace, Horizon, InitialSet, Model, ParseOptions,
    ParsedModel, PrivacySpec, UnsafeHalfspace, Warning,
};
pub use poly::{compose_rational, monomial_basis, Monomial, Polynomial, RationalMap};
pub use sos::{Margin, PolyExpression, SosCertificate, SosProgram, SosVariable};
pub use verifier::{
    degree_sweep, min_certified_gamma, validate_certificate, verify, verify_mdp,
    verify_pomdp_finite, verify_pomdp_infinite, Certificate, Method, Status, VerificationOutcome,
    VerifyOptions,
};

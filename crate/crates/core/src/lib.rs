//! Score-based variational inference with matrix-product-operator Born machines.
//!
//! The pipeline, module by module:
//!
//! 1. [`basis`]: orthonormal 1-D features φ and their overlap integrals.
//! 2. [`targets`]: score-queryable synthetic densities with path-local scores.
//! 3. [`hamiltonian`]: the Fisher-divergence Hamiltonian `H = H₁ − 2H₂ + 4H₃`,
//!    by quadrature, global importance sampling, or per-clique local sampling.
//! 4. [`spectral`]: ground space of the estimated Hamiltonian and gap reports.
//! 5. [`mpo`]: density operator → MPO compression and Born-model evaluation,
//!    marginals and box probabilities.
//! 6. [`divergence`]: forward KL, Fisher divergence, trace energy, LSI check.
//! 7. [`hardness`]: the SAT-embedding density and its probability gap.
//! 8. [`harness`]: configs, seeded runs, CSV/JSON artifacts.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod basis;
pub mod divergence;
pub mod error;
pub mod fixtures;
pub mod hamiltonian;
pub mod hardness;
pub mod harness;
pub mod linalg;
pub mod mpo;
pub mod persist;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod targets;

pub use basis::{Basis, BasisKind, BasisSpec, OverlapMatrices};
pub use error::{Error, Result};
pub use hamiltonian::{HamiltonianRep, LocalSum, LocalTerm, SamplingPlan};
pub use mpo::{BornModel, Mpo};
pub use spectral::{GroundSpace, SpectralReport};
pub use targets::{make_target, ScoreOracle, Target, TargetKind, TargetParams};

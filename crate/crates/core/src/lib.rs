//! Dual iterative proportional fitting (IPFP) for divergence-regularized
//! information projections on finite spaces.
//!
//! The crate solves
//!
//! ```text
//! minimize  ∫ c dπ + D_φ(π‖μ)   subject to  ∫ h dπ = target(h) for h ∈ H_i, i = 1…N
//! ```
//!
//! through its dual, by exact cyclic minimization over the subspaces H_i,
//! and computes the subspace geometry (Friedrichs angles, the condition
//! number of the sum operator) that controls the linear convergence rate.
//! Each run can be audited against the per-sweep inequalities behind that
//! rate.

pub mod audit;
pub mod batch;
pub mod divergence;
pub mod error;
pub mod geometry;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod measure;
pub mod problem;
pub mod solver;

pub use divergence::Divergence;
pub use error::{Error, Result};
pub use measure::{DiscreteSpace, FunctionOnSpace, Label, Measure, PotentialTuple, Subspace};
pub use problem::Instance;
pub use solver::{IterateTrace, Solution, SolverConfig};

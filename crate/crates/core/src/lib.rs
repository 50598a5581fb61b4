//! Smoothed-analysis tooling for the shadow vertex simplex method.

pub mod analysis;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod lower_bound;
pub mod oracle;
pub mod randgen;
pub mod shadow;
pub mod three_phase;

pub use instance::{InstanceError, LpInstance, Polyhedron};
pub use linalg::{BasisFactorization, DenseMatrix, LinalgError};
pub use randgen::{RngStream, SmoothedInstance};
pub use shadow::{run_shadow_path, Basis, PivotOutcome, ShadowError, ShadowPath, ShadowWalk};
pub use three_phase::{solve, SolveOutcome, SolveReport, SolverOptions};

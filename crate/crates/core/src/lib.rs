//! Gaussian-process emulators whose sample paths satisfy boundedness,
//! monotonicity, convexity or isotonicity constraints everywhere in the
//! input domain.
//!
//! The process is approximated by `Y^N(x) = Σ c_j ψ_j(x)` on a knot grid.
//! For each supported constraint the coefficient vector is Gaussian and the
//! functional constraint is equivalent to finitely many linear inequalities
//! on it, so conditioning reduces to a truncated multivariate normal and
//! the posterior mode to a quadratic program.

pub mod basis;
pub mod cli;
pub mod config;
pub mod emulator;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod posterior;
pub mod qp;
pub mod tmvn;

pub use basis::{Basis, KnotGrid, TensorGrid};
pub use config::{DomainTransform, RunConfig};
pub use emulator::Emulator;
pub use error::{CgpError, ErrorClass, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use model::{ConstraintKind, Curvature, DesignData, Direction, FiniteDimModel, InequalitySystem, ModelOptions};
pub use posterior::PredictionGrid;
pub use qp::{solve_mode, QpSolution, QuadraticProgram};
pub use tmvn::{ConditionedGaussian, Polyhedron, SampleBatch, SamplerConfig, SamplerMethod};

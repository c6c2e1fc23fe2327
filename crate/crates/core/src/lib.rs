//! Phase retrieval from Poisson-noised phaseless measurements with an
//! adaptively learned orthogonal patch dictionary.

pub mod error;
pub mod inner_admm;
pub mod linalg;
pub mod measurement;
pub mod metrics;
pub mod model;
pub mod patches;
pub mod phantom;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
pub use linalg::CMat;
pub use measurement::MeasurementOperator;
pub use model::*;
pub use patches::PatchConfig;
pub use solvers::{Algorithm, InitU, Problem, SolverConfig, SolverOutput};

//! Koopman-operator tools for quantum systems.
//!
//! The crate is generic over the scalar type through [`Real`]; the aliases
//! at the root fix it to `f64`, which is what the command-line front end uses.

pub mod dictionary;
pub mod disco;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod pde;
pub mod quantum;
pub mod scalar;
pub mod sde;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type DriftDiffusion = sde::DriftDiffusionSpec<f64>;
pub type Ensemble = sde::TrajectoryEnsemble<f64>;
pub type Dictionary = dictionary::Dictionary<f64>;
pub type Surrogate = disco::BilinearSurrogate<f64>;
pub type ValueField = disco::ValueFunctionField<f64>;
pub type Eigen = estimators::EigenResult<f64>;
pub type Hamiltonian = pde::DiscreteHamiltonian<f64>;
pub type System = quantum::AnalyticSystem<f64>;
